import json

import numpy as np
import pytest
from scipy.special import expit

from dynetfit.data import (
    GroundTruth,
    ObservationSet,
    SbmSpec,
    from_unaligned,
    generate_dynamic_multilayer_sbm,
    generate_layer_clusters,
    load_edge_list,
    load_truth,
    normalize_times,
    sample_truth,
    save_truth,
    write_edge_list,
)
from dynetfit.errors import DataError

import oracles


def tiny_obs(rng=None, layers=2, n_times=3, n=4):
    rng = np.random.default_rng(0 if rng is None else rng)
    adjacency = (rng.random((layers, n_times, n, n)) < 0.4).astype(float)
    return ObservationSet(
        adjacency=adjacency, times=np.linspace(0.0, 1.0, n_times)
    ).validate()


# --- time normalization ----------------------------------------------------


def test_normalize_times_endpoints_and_spacing():
    got = normalize_times([3.0, 4.0, 6.0])
    assert got[0] == 0.0 and got[-1] == 1.0
    assert np.allclose(got, [0.0, 1.0 / 3.0, 1.0])


def test_normalize_times_identity_on_unit_grid():
    grid = np.linspace(0.0, 1.0, 5)
    assert np.allclose(normalize_times(grid), grid)


def test_normalize_times_needs_two_distinct():
    with pytest.raises(DataError):
        normalize_times([2.0])
    with pytest.raises(DataError):
        normalize_times([2.0, 2.0])
    with pytest.raises(DataError):
        normalize_times([1.0, 0.5])


# --- container validation ---------------------------------------------------


def test_validate_accepts_clean_set():
    obs = tiny_obs()
    assert obs.n == 4 and obs.layers == 2 and obs.n_times == 3
    assert obs.observed_count() == obs.adjacency.size


def test_validate_rejects_nonbinary():
    obs = tiny_obs()
    obs.adjacency[0, 0, 0, 0] = 0.5
    with pytest.raises(DataError):
        obs.validate()


def test_validate_ignores_masked_nonbinary():
    obs = tiny_obs()
    mask = np.ones_like(obs.adjacency)
    mask[0, 0, 0, 0] = 0.0
    obs.adjacency[0, 0, 0, 0] = 7.0
    obs.mask = mask
    obs.validate()
    assert obs.observed_count() == obs.adjacency.size - 1


def test_validate_rejects_bad_times_and_mask():
    obs = tiny_obs()
    obs.times = np.array([0.0, 0.5, 0.5])
    with pytest.raises(DataError):
        obs.validate()
    obs = tiny_obs()
    obs.times = np.array([0.0, 0.5, 1.5])
    with pytest.raises(DataError):
        obs.validate()
    obs = tiny_obs()
    obs.mask = np.full_like(obs.adjacency, 0.5)
    with pytest.raises(DataError):
        obs.validate()
    obs = tiny_obs()
    obs.mask = np.ones((1, 1, 2, 2))
    with pytest.raises(DataError):
        obs.validate()


# --- file round trips -------------------------------------------------------


def test_edge_list_round_trip(tmp_path):
    obs = tiny_obs()
    edge, manifest = tmp_path / "edges.csv", tmp_path / "manifest.json"
    write_edge_list(obs, edge, manifest)
    back = load_edge_list(edge, manifest)
    assert np.array_equal(back.adjacency, obs.adjacency)
    assert np.allclose(back.times, obs.times)
    assert back.mask is None


def test_edge_list_round_trip_with_mask(tmp_path):
    obs = tiny_obs()
    mask = np.ones_like(obs.adjacency)
    mask[1, 2, 3, 0] = 0.0
    mask[0, 0, 1, 1] = 0.0
    obs.mask = mask
    edge, manifest, mpath = (
        tmp_path / "edges.csv",
        tmp_path / "manifest.json",
        tmp_path / "mask.csv",
    )
    write_edge_list(obs, edge, manifest, mpath)
    back = load_edge_list(edge, manifest, mpath)
    assert np.array_equal(back.mask, mask)
    # masked-out entries don't round-trip their adjacency value; observed do
    assert np.array_equal(back.adjacency[mask == 1], obs.adjacency[mask == 1])


def test_load_edge_list_infer_times(tmp_path):
    edge = tmp_path / "edges.csv"
    edge.write_text("layer,time,src,dst\n0,10.0,0,1\n0,30.0,1,0\n0,20.0,1,1\n")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"n": 2, "K": 1, "times": "infer"}))
    obs = load_edge_list(edge, manifest)
    assert np.allclose(obs.times, [0.0, 0.5, 1.0])
    assert obs.adjacency[0, 0, 0, 1] == 1.0
    assert obs.adjacency[0, 2, 1, 0] == 1.0
    assert obs.adjacency[0, 1, 1, 1] == 1.0


def test_load_edge_list_duplicate_rows_warn(tmp_path):
    edge = tmp_path / "edges.csv"
    edge.write_text("layer,time,src,dst\n0,0.0,0,1\n0,0.0,0,1\n0,1.0,1,0\n")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"n": 2, "K": 1, "times": [0.0, 1.0]}))
    with pytest.warns(UserWarning):
        obs = load_edge_list(edge, manifest)
    assert obs.adjacency[0, 0, 0, 1] == 1.0


def test_load_edge_list_errors(tmp_path):
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"n": 2, "K": 1, "times": [0.0, 1.0]}))
    edge = tmp_path / "edges.csv"

    with pytest.raises(DataError):
        load_edge_list(tmp_path / "missing.csv", manifest)

    edge.write_text("a,b\n")
    with pytest.raises(DataError):
        load_edge_list(edge, manifest)

    edge.write_text("layer,time,src,dst\n0,0.5,0,1\n")
    with pytest.raises(DataError):
        load_edge_list(edge, manifest)  # off-grid time

    edge.write_text("layer,time,src,dst\n0,0.0,0,5\n")
    with pytest.raises(DataError):
        load_edge_list(edge, manifest)  # vertex out of range

    edge.write_text("layer,time,src,dst\n3,0.0,0,1\n")
    with pytest.raises(DataError):
        load_edge_list(edge, manifest)  # layer out of range

    edge.write_text("layer,time,src,dst\n0,zero,0,1\n")
    with pytest.raises(DataError):
        load_edge_list(edge, manifest)  # malformed row

    edge.write_text("layer,time,src,dst\n")
    with pytest.raises(DataError):
        load_edge_list(edge, tmp_path / "nope.json")  # missing manifest

    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(DataError):
        load_edge_list(edge, bad)

    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps({"n": 2, "K": 1}))
    with pytest.raises(DataError):
        load_edge_list(edge, partial)


def test_truth_serialization_round_trip(tmp_path):
    _, truth = generate_dynamic_multilayer_sbm(
        SbmSpec(n=8, dim=2, n_times=4, layers=2), rng=3
    )
    path = tmp_path / "truth.json"
    save_truth(truth, path)
    back = load_truth(path)
    times = np.linspace(0.0, 1.0, 5)
    assert np.allclose(back.edge_probs(times), truth.edge_probs(times))
    assert np.array_equal(back.out_labels, truth.out_labels)
    assert back.layer_labels is None


# --- unaligned observations -------------------------------------------------


def test_from_unaligned_grid_and_mask():
    records = [
        (0, 0.1, 0, 1, 1),
        (0, 0.4, 1, 0, 0),
        (1, 0.9, 0, 0, 1),
    ]
    obs = from_unaligned(n=2, layers=2, records=records)
    assert np.allclose(obs.times, normalize_times([0.1, 0.4, 0.9]))
    assert obs.observed_count() == 3
    assert obs.adjacency[0, 0, 0, 1] == 1.0
    assert obs.mask[0, 0, 0, 1] == 1.0
    assert obs.mask[1, 2, 0, 0] == 1.0
    assert obs.mask[0, 2, 0, 0] == 0.0
    assert obs.unaligned[(0, 0, 1)] == ((0.1, 1),)


def test_from_unaligned_errors():
    with pytest.raises(DataError):
        from_unaligned(2, 1, [])
    with pytest.raises(DataError):
        from_unaligned(2, 1, [(0, 0.5, 0, 1, 1)])  # one distinct time
    with pytest.raises(DataError):
        from_unaligned(2, 1, [(0, 0.1, 0, 1, 1), (0, 0.1, 0, 1, 0)])  # dup
    with pytest.raises(DataError):
        from_unaligned(2, 1, [(0, 0.1, 0, 1, 2), (0, 0.2, 0, 0, 1)])  # value
    with pytest.raises(DataError):
        from_unaligned(2, 1, [(0, 0.1, 0, 5, 1), (0, 0.2, 0, 0, 1)])  # range


# --- SBM generator ----------------------------------------------------------


def test_sbm_spec_validation():
    with pytest.raises(DataError):
        SbmSpec(n=3, dim=4, n_times=4, layers=1).validate()
    with pytest.raises(DataError):
        SbmSpec(n=5, dim=2, n_times=1, layers=1).validate()
    with pytest.raises(DataError):
        SbmSpec(n=5, dim=2, n_times=4, layers=1, mu_range=(1.0, -1.0)).validate()


def test_sbm_factors_are_orthonormal():
    _, truth = generate_dynamic_multilayer_sbm(
        SbmSpec(n=20, dim=3, n_times=5, layers=2), rng=0
    )
    d = truth.dim
    assert np.allclose(truth.out_factors.T @ truth.out_factors, np.eye(d), atol=1e-12)
    assert np.allclose(truth.in_factors.T @ truth.in_factors, np.eye(d), atol=1e-12)


def test_sbm_logits_equal_block_assignment():
    # the (factors, cores) representation must reproduce Z_out B Z_in'
    # entrywise: vertex pair (i, j) sees the block logit of its communities
    spec = SbmSpec(n=15, dim=3, n_times=4, layers=2)
    _, truth = generate_dynamic_multilayer_sbm(spec, rng=12)
    times = spec.times()
    blocks = truth.block_logits(times)
    cores = truth.core_values(times)
    logits = np.einsum("ia,stab,jb->stij", truth.out_factors, cores, truth.in_factors)
    for s in range(2):
        for t in range(4):
            want = blocks[s, t][truth.out_labels[:, None], truth.in_labels[None, :]]
            assert np.max(np.abs(logits[s, t] - want)) < 1e-10


def test_sbm_parameter_ranges():
    spec = SbmSpec(n=12, dim=2, n_times=3, layers=4)
    _, truth = generate_dynamic_multilayer_sbm(spec, rng=5)
    assert truth.mu.shape == (4, 2, 2)
    assert np.all(np.abs(truth.mu) <= 10.0)
    assert np.all(np.abs(truth.delta) <= 1.0)
    assert np.all((truth.phase >= 0.0) & (truth.phase <= np.pi))
    assert truth.cycle == 3.0


def test_sbm_labels_cover_every_community():
    for seed in range(10):
        _, truth = generate_dynamic_multilayer_sbm(
            SbmSpec(n=9, dim=3, n_times=3, layers=1), rng=seed
        )
        assert np.unique(truth.out_labels).size == 3
        assert np.unique(truth.in_labels).size == 3


def test_sbm_determinism():
    spec = SbmSpec(n=10, dim=2, n_times=3, layers=2)
    obs_a, truth_a = generate_dynamic_multilayer_sbm(spec, rng=77)
    obs_b, truth_b = generate_dynamic_multilayer_sbm(spec, rng=77)
    assert np.array_equal(obs_a.adjacency, obs_b.adjacency)
    assert np.array_equal(truth_a.mu, truth_b.mu)
    obs_c, _ = generate_dynamic_multilayer_sbm(spec, rng=78)
    assert not np.array_equal(obs_a.adjacency, obs_c.adjacency)


def test_sbm_sampling_matches_probabilities():
    # large-mu blocks saturate; with mu ~ 10 the edge probability is
    # inv-logit(10) and a Monte Carlo average must land near it
    spec = SbmSpec(
        n=40, dim=1, n_times=2, layers=1, mu_range=(10.0, 10.0),
        delta_range=(0.0, 0.0),
    )
    obs, truth = generate_dynamic_multilayer_sbm(spec, rng=1)
    assert np.allclose(truth.edge_probs(spec.times()), oracles.INV_LOGIT_10)
    assert obs.adjacency.mean() > 0.99


def test_sbm_empirical_density_tracks_probs():
    spec = SbmSpec(n=60, dim=2, n_times=3, layers=1, mu_range=(-1.0, 1.0))
    obs, truth = generate_dynamic_multilayer_sbm(spec, rng=4)
    probs = truth.edge_probs(spec.times())
    # 10800 Bernoulli draws: the mean is within a few standard errors
    se = np.sqrt(probs.mean() * (1 - probs.mean()) / probs.size)
    assert abs(obs.adjacency.mean() - probs.mean()) < 6 * se


# --- layer-cluster generator ------------------------------------------------


def test_layer_clusters_shapes_and_labels():
    obs, truth = generate_layer_clusters(n=20, layers=10, n_times=6, rng=0)
    assert obs.adjacency.shape == (10, 6, 20, 20)
    assert truth.layer_labels.shape == (10,)
    assert np.unique(truth.layer_labels).size == 3
    assert truth.dim == 2
    assert np.allclose(truth.transform_out, np.eye(2))


def test_layer_clusters_orthonormal_factors():
    _, truth = generate_layer_clusters(n=25, layers=6, n_times=4, rng=2)
    assert np.allclose(truth.out_factors.T @ truth.out_factors, np.eye(2), atol=1e-12)
    assert np.allclose(truth.in_factors.T @ truth.in_factors, np.eye(2), atol=1e-12)


def test_layer_clusters_share_trajectories_within_cluster():
    _, truth = generate_layer_clusters(n=15, layers=8, n_times=5, rng=3)
    times = np.linspace(0.0, 1.0, 9)
    cores = truth.core_values(times)
    labels = truth.layer_labels
    for a in range(8):
        for b in range(8):
            same = labels[a] == labels[b]
            close = np.allclose(cores[a], cores[b], atol=1e-12)
            assert same == close


def test_layer_clusters_amplitude_scales_with_n():
    _, truth = generate_layer_clusters(n=30, layers=5, n_times=4, rng=1)
    assert np.allclose(truth.mu, 0.15 * 30)
    assert np.allclose(truth.delta, 0.15 * 30)


def test_layer_clusters_argument_errors():
    with pytest.raises(DataError):
        generate_layer_clusters(n=10, layers=2, n_times=4, rng=0, clusters=3)
    with pytest.raises(DataError):
        generate_layer_clusters(n=1, layers=4, n_times=4, rng=0, dim=2)


# --- sampling ---------------------------------------------------------------


def test_sample_truth_statistics():
    _, truth = generate_layer_clusters(n=10, layers=3, n_times=3, rng=0)
    times = np.linspace(0.0, 1.0, 3)
    draws = np.stack(
        [sample_truth(truth, times, rng=seed).adjacency for seed in range(400)]
    )
    freq = draws.mean(axis=0)
    probs = truth.edge_probs(times)
    assert np.max(np.abs(freq - probs)) < 0.12


def test_sample_truth_log_density_matches_oracle():
    _, truth = generate_layer_clusters(n=6, layers=3, n_times=3, rng=5)
    times = np.linspace(0.0, 1.0, 3)
    obs = sample_truth(truth, times, rng=9)
    probs = truth.edge_probs(times)
    want = oracles.brute_bernoulli_log_density(obs.adjacency, probs)
    got = float(
        np.sum(obs.adjacency * np.log(probs) + (1 - obs.adjacency) * np.log1p(-probs))
    )
    assert abs(got - want) < 1e-9


def test_single_layer_community_design_is_sbm_special_case():
    # one layer, three communities, gentle logits: the design used for
    # vertex community recovery
    spec = SbmSpec(
        n=30, dim=3, n_times=5, layers=1,
        mu_range=(-1.0, 1.0), delta_range=(-1.0, 1.0),
        phase_range=(0.0, np.pi / 2.0),
    )
    obs, truth = generate_dynamic_multilayer_sbm(spec, rng=0)
    assert truth.layers == 1
    probs = truth.edge_probs(spec.times())
    assert probs.min() > 0.1 and probs.max() < 0.9
