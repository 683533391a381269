"""Observed-network containers, file ingestion, and synthetic generators.

Data is a stack of binary adjacency snapshots indexed by (layer, time), over
a common normalized time grid in [0, 1].  Partially observed data carries a
0/1 mask of the same shape; fully unaligned observations (each edge measured
at its own times) are canonicalized onto the union grid with a mask.

The synthetic generators mirror three benchmark designs: a dynamic multilayer
stochastic block model with sinusoidal block logits, a layer-clustering
design where groups of layers share a common core trajectory, and (as a
parameter choice of the first) a single-layer community-detection design.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DataError

EDGE_HEADER = ["layer", "time", "src", "dst"]
MASK_HEADER = ["layer", "time", "src", "dst", "observed"]


@dataclass
class ObservationSet:
    """Binary adjacency observations over a normalized time grid.

    Parameters
    ----------
    adjacency : ndarray, shape (layers, times, n, n)
        Binary matrices as float64.
    times : ndarray, shape (times,)
        Strictly increasing grid; 0 = first, 1 = last after normalization.
    mask : ndarray or None
        Same shape as adjacency; 1 = observed.  None means fully observed.
    unaligned : dict or None
        Original per-edge observation records when the set was built from
        unaligned data: (layer, i, j) -> tuple of (time, value).  Kept for
        reference; all computation uses adjacency + mask.
    """

    adjacency: np.ndarray
    times: np.ndarray
    mask: np.ndarray | None = None
    unaligned: dict | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.adjacency.shape[2]

    @property
    def layers(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_times(self) -> int:
        return self.adjacency.shape[1]

    def validate(self):
        a = self.adjacency
        if a.ndim != 4 or a.shape[2] != a.shape[3]:
            raise DataError(f"adjacency shape {a.shape} is not (layers, times, n, n)")
        if self.times.shape != (a.shape[1],):
            raise DataError("times length must match the adjacency time axis")
        if self.times.size < 2 or np.any(np.diff(self.times) <= 0):
            raise DataError("times must be strictly increasing with >= 2 points")
        if self.times[0] < 0 or self.times[-1] > 1:
            raise DataError("times must lie in [0, 1]; call normalize_times first")
        if self.mask is not None:
            if self.mask.shape != a.shape:
                raise DataError("mask shape must match adjacency shape")
            if not np.isin(self.mask, (0.0, 1.0)).all():
                raise DataError("mask entries must be 0 or 1")
            observed = self.mask != 0
        else:
            observed = np.ones(a.shape, dtype=bool)
        if not np.isin(a[observed], (0.0, 1.0)).all():
            raise DataError("observed adjacency entries must be 0 or 1")
        return self

    def observed_count(self) -> int:
        if self.mask is None:
            return int(self.adjacency.size)
        return int(np.count_nonzero(self.mask))


def normalize_times(raw) -> np.ndarray:
    """Affinely map a strictly increasing grid onto [0, 1].

    The first point goes to 0 and the last to 1; relative spacing is
    preserved.  Needs at least two distinct values.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1 or np.unique(raw).size < 2:
        raise DataError("time normalization needs at least 2 distinct values")
    if np.any(np.diff(raw) <= 0):
        raise DataError("time grid must be strictly increasing")
    lo, hi = raw[0], raw[-1]
    return (raw - lo) / (hi - lo)


def load_edge_list(path, manifest_path, mask_path=None) -> ObservationSet:
    """Read an edge-list CSV plus manifest into an ObservationSet.

    The CSV has header ``layer,time,src,dst`` with 0-based integer ids.  The
    manifest JSON declares ``n``, ``K``, and ``times`` (a list, or the string
    "infer" to collect the grid from the file).  Absent combinations are 0,
    or unobserved when a mask CSV (``layer,time,src,dst,observed``) is given;
    entries not listed in the mask file default to observed.
    """
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"manifest not found: {manifest_path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {manifest_path} is not valid JSON: {exc}")
    for key in ("n", "K", "times"):
        if key not in manifest:
            raise DataError(f"manifest missing key {key!r}")
    n, layers = int(manifest["n"]), int(manifest["K"])
    if n < 1 or layers < 1:
        raise DataError("manifest must declare n >= 1 and K >= 1")

    rows = _read_edge_rows(path)

    if manifest["times"] == "infer":
        raw_times = sorted({t for _, t, _, _ in rows})
        if len(raw_times) < 2:
            raise DataError("cannot infer a time grid from < 2 distinct times")
        raw_times = np.asarray(raw_times, dtype=float)
    else:
        raw_times = np.asarray(manifest["times"], dtype=float)
        if raw_times.ndim != 1 or raw_times.size < 2 or np.any(np.diff(raw_times) <= 0):
            raise DataError("declared time grid must be strictly increasing, >= 2 points")

    index_of = {t: i for i, t in enumerate(raw_times.tolist())}
    adjacency = np.zeros((layers, raw_times.size, n, n))
    seen = set()
    duplicates = 0
    for s, t, i, j in rows:
        if s < 0 or s >= layers:
            raise DataError(f"layer id {s} outside [0, {layers})")
        if i < 0 or i >= n or j < 0 or j >= n:
            raise DataError(f"vertex id ({i}, {j}) outside [0, {n})")
        if t not in index_of:
            raise DataError(f"edge time {t!r} not on the declared grid")
        key = (s, t, i, j)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        adjacency[s, index_of[t], i, j] = 1.0
    if duplicates:
        warnings.warn(f"{duplicates} duplicate edge rows ignored (adjacency is binary)")

    mask = None
    if mask_path is not None:
        mask = _read_mask(mask_path, layers, n, index_of, raw_times.size)

    obs = ObservationSet(
        adjacency=adjacency, times=normalize_times(raw_times), mask=mask
    )
    return obs.validate()


def _read_edge_rows(path):
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"edge list not found: {path}")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"edge list {path} is empty (header required)")
        if [h.strip() for h in header] != EDGE_HEADER:
            raise DataError(f"edge list header must be {','.join(EDGE_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((int(row[0]), float(row[1]), int(row[2]), int(row[3])))
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: malformed edge row {row!r}")
    return rows


def _read_mask(path, layers, n, index_of, n_times):
    mask = np.ones((layers, n_times, n, n))
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"mask file not found: {path}")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != MASK_HEADER:
            raise DataError(f"mask header must be {','.join(MASK_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                s, t, i, j, obs = int(row[0]), float(row[1]), int(row[2]), int(row[3]), int(row[4])
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: malformed mask row {row!r}")
            if s < 0 or s >= layers or i < 0 or i >= n or j < 0 or j >= n:
                raise DataError(f"{path}:{lineno}: mask ids out of range")
            if t not in index_of:
                raise DataError(f"{path}:{lineno}: mask time {t!r} not on the grid")
            if obs not in (0, 1):
                raise DataError(f"{path}:{lineno}: observed flag must be 0 or 1")
            mask[s, index_of[t], i, j] = float(obs)
    return mask


def write_edge_list(obs: ObservationSet, edge_path, manifest_path, mask_path=None):
    """Write an ObservationSet back to edge-list + manifest (+ mask) files.

    Inverse of load_edge_list up to row order; times are written on the
    normalized grid.
    """
    with open(edge_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EDGE_HEADER)
        times = obs.times.tolist()
        for s in range(obs.layers):
            for t_idx, t in enumerate(times):
                src, dst = np.nonzero(obs.adjacency[s, t_idx])
                for i, j in zip(src.tolist(), dst.tolist()):
                    writer.writerow([s, repr(t), i, j])
    manifest = {"n": obs.n, "K": obs.layers, "times": obs.times.tolist()}
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if mask_path is not None and obs.mask is not None:
        with open(mask_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(MASK_HEADER)
            times = obs.times.tolist()
            for s in range(obs.layers):
                for t_idx, t in enumerate(times):
                    src, dst = np.nonzero(obs.mask[s, t_idx] == 0)
                    for i, j in zip(src.tolist(), dst.tolist()):
                        writer.writerow([s, repr(t), i, j, 0])


def from_unaligned(n, layers, records) -> ObservationSet:
    """Canonicalize unaligned per-edge observations onto a union grid.

    ``records`` is an iterable of (layer, time, i, j, value) with value in
    {0, 1}.  The union of all observation times becomes the grid (normalized
    to [0, 1]); every (layer, time, i, j) combination not present is masked
    out.  Duplicate (layer, time, i, j) tuples are an error, since each such
    tuple carries exactly one value.
    """
    records = list(records)
    if not records:
        raise DataError("no records given")
    raw_times = sorted({r[1] for r in records})
    if len(raw_times) < 2:
        raise DataError("unaligned records must span >= 2 distinct times")
    index_of = {t: i for i, t in enumerate(raw_times)}
    m = len(raw_times)
    adjacency = np.zeros((layers, m, n, n))
    mask = np.zeros((layers, m, n, n))
    unaligned = {}
    for s, t, i, j, value in records:
        if s < 0 or s >= layers or i < 0 or i >= n or j < 0 or j >= n:
            raise DataError(f"record ids out of range: {(s, t, i, j)}")
        if value not in (0, 1):
            raise DataError("record values must be 0 or 1")
        t_idx = index_of[t]
        if mask[s, t_idx, i, j] != 0.0:
            raise DataError(f"duplicate observation for {(s, t, i, j)}")
        mask[s, t_idx, i, j] = 1.0
        adjacency[s, t_idx, i, j] = float(value)
        unaligned.setdefault((s, i, j), []).append((t, value))
    obs = ObservationSet(
        adjacency=adjacency,
        times=normalize_times(np.asarray(raw_times, dtype=float)),
        mask=mask,
        unaligned={k: tuple(v) for k, v in unaligned.items()},
    )
    return obs.validate()


# ---------------------------------------------------------------------------
# synthetic generators


@dataclass
class SbmSpec:
    """Settings of the dynamic multilayer SBM generator.

    Block logits follow mu + delta * sin(2 pi t / cycle + phase) with the
    three parameters drawn once per (layer, k, l) from the given ranges.
    """

    n: int
    dim: int
    n_times: int
    layers: int
    cycle: float = 3.0
    mu_range: tuple = (-10.0, 10.0)
    delta_range: tuple = (-1.0, 1.0)
    phase_range: tuple = (0.0, np.pi)

    def validate(self):
        if self.dim > self.n or self.dim < 1:
            raise DataError(f"need 1 <= communities (d={self.dim}) <= n={self.n}")
        if self.n_times < 2 or self.layers < 1 or self.cycle <= 0:
            raise DataError("need n_times >= 2, layers >= 1, cycle > 0")
        for name in ("mu_range", "delta_range", "phase_range"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise DataError(f"{name} is reversed")
        return self

    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_times)


@dataclass
class GroundTruth:
    """True factors, core parameters, and labels behind a simulated network.

    Core matrices evaluate as
        transform_out @ (mu + delta * sin(2 pi t / cycle + phase)) @ transform_in
    which covers both the SBM construction (transforms are the square roots
    of community-size Grams) and the shared-trajectory layer design
    (identity transforms).
    """

    out_factors: np.ndarray
    in_factors: np.ndarray
    mu: np.ndarray
    delta: np.ndarray
    phase: np.ndarray
    cycle: float
    transform_out: np.ndarray
    transform_in: np.ndarray
    out_labels: np.ndarray | None = None
    in_labels: np.ndarray | None = None
    layer_labels: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.out_factors.shape[0]

    @property
    def dim(self) -> int:
        return self.out_factors.shape[1]

    @property
    def layers(self) -> int:
        return self.mu.shape[0]

    def block_logits(self, times) -> np.ndarray:
        """Raw sinusoidal block matrices on a grid: (layers, times, d, d)."""
        t = np.asarray(times, dtype=float)[None, :, None, None]
        angle = 2.0 * np.pi * t / self.cycle + self.phase[:, None, :, :]
        return self.mu[:, None, :, :] + self.delta[:, None, :, :] * np.sin(angle)

    def core_values(self, times) -> np.ndarray:
        """True core matrices on a grid: (layers, times, d, d)."""
        blocks = self.block_logits(times)
        return np.einsum("ab,stbc,cd->stad", self.transform_out, blocks, self.transform_in)

    def edge_probs(self, times) -> np.ndarray:
        """Edge probabilities on a grid: (layers, times, n, n)."""
        cores = self.core_values(times)
        logits = np.einsum("ia,stab,jb->stij", self.out_factors, cores, self.in_factors)
        return expit(logits)

    def to_dict(self) -> dict:
        out = {
            "out_factors": self.out_factors.tolist(),
            "in_factors": self.in_factors.tolist(),
            "mu": self.mu.tolist(),
            "delta": self.delta.tolist(),
            "phase": self.phase.tolist(),
            "cycle": self.cycle,
            "transform_out": self.transform_out.tolist(),
            "transform_in": self.transform_in.tolist(),
        }
        for name in ("out_labels", "in_labels", "layer_labels"):
            value = getattr(self, name)
            out[name] = None if value is None else value.tolist()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "GroundTruth":
        def arr(key, dtype=float):
            value = obj[key]
            return None if value is None else np.asarray(value, dtype=dtype)

        return cls(
            out_factors=arr("out_factors"),
            in_factors=arr("in_factors"),
            mu=arr("mu"),
            delta=arr("delta"),
            phase=arr("phase"),
            cycle=float(obj["cycle"]),
            transform_out=arr("transform_out"),
            transform_in=arr("transform_in"),
            out_labels=arr("out_labels", dtype=int),
            in_labels=arr("in_labels", dtype=int),
            layer_labels=arr("layer_labels", dtype=int),
        )


def save_truth(truth: GroundTruth, path):
    with open(path, "w") as fh:
        json.dump(truth.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_truth(path) -> GroundTruth:
    with open(path) as fh:
        return GroundTruth.from_dict(json.load(fh))


def _uniform_labels(rng, n, groups, attempts=100):
    # every group must be populated, otherwise the size-Gram square root
    # degenerates; resample a bounded number of times
    for _ in range(attempts):
        labels = rng.integers(0, groups, size=n)
        if np.unique(labels).size == groups:
            return labels
    raise DataError(f"could not populate all {groups} groups in {attempts} draws")


def generate_dynamic_multilayer_sbm(spec: SbmSpec, rng) -> tuple:
    """Dynamic multilayer SBM sample plus its ground truth.

    Vertices draw independent uniform outgoing and incoming community labels
    (resampled while any community is empty).  The implied factor matrices
    are the normalized membership matrices Z (Z'Z)^{-1/2}; the implied cores
    are (Z_out'Z_out)^{1/2} B (Z_in'Z_in)^{1/2} for the sinusoidal block
    logit matrices B, so the model logits equal Z_out B Z_in' entrywise.
    """
    spec.validate()
    rng = np.random.default_rng(rng)
    out_labels = _uniform_labels(rng, spec.n, spec.dim)
    in_labels = _uniform_labels(rng, spec.n, spec.dim)
    shape = (spec.layers, spec.dim, spec.dim)
    mu = rng.uniform(*spec.mu_range, size=shape)
    delta = rng.uniform(*spec.delta_range, size=shape)
    phase = rng.uniform(*spec.phase_range, size=shape)

    out_counts = np.bincount(out_labels, minlength=spec.dim).astype(float)
    in_counts = np.bincount(in_labels, minlength=spec.dim).astype(float)
    out_factors = np.zeros((spec.n, spec.dim))
    out_factors[np.arange(spec.n), out_labels] = 1.0 / np.sqrt(out_counts[out_labels])
    in_factors = np.zeros((spec.n, spec.dim))
    in_factors[np.arange(spec.n), in_labels] = 1.0 / np.sqrt(in_counts[in_labels])

    truth = GroundTruth(
        out_factors=out_factors,
        in_factors=in_factors,
        mu=mu,
        delta=delta,
        phase=phase,
        cycle=spec.cycle,
        transform_out=np.diag(np.sqrt(out_counts)),
        transform_in=np.diag(np.sqrt(in_counts)),
        out_labels=out_labels,
        in_labels=in_labels,
    )
    obs = sample_truth(truth, spec.times(), rng)
    return obs, truth


def generate_layer_clusters(
    n, layers, n_times, rng, clusters=3, level=0.15, cycle=3.0, dim=2,
    phase_range=(0.0, np.pi),
) -> tuple:
    """Layer-clustering design: groups of layers share one core trajectory.

    Factors are a random pair of column-orthonormal matrices; each cluster
    has constant mu = delta = level * n in every core entry and only the
    phases differ, so cluster identity lives in the timing of the sinusoids.
    Layers draw uniform cluster labels (resampled while a cluster is empty).
    """
    if dim < 1 or clusters < 1 or layers < clusters:
        raise DataError("need layers >= clusters >= 1 and dim >= 1")
    if n < dim:
        raise DataError(f"need n >= dim, got n={n}, dim={dim}")
    rng = np.random.default_rng(rng)
    out_factors = _random_orthonormal(rng, n, dim)
    in_factors = _random_orthonormal(rng, n, dim)
    layer_labels = _uniform_labels(rng, layers, clusters)
    cluster_phase = rng.uniform(*phase_range, size=(clusters, dim, dim))
    value = level * n
    mu = np.full((layers, dim, dim), value)
    delta = np.full((layers, dim, dim), value)
    phase = cluster_phase[layer_labels]
    truth = GroundTruth(
        out_factors=out_factors,
        in_factors=in_factors,
        mu=mu,
        delta=delta,
        phase=phase,
        cycle=cycle,
        transform_out=np.eye(dim),
        transform_in=np.eye(dim),
        layer_labels=layer_labels,
    )
    obs = sample_truth(truth, np.linspace(0.0, 1.0, n_times), rng)
    return obs, truth


def _random_orthonormal(rng, n, d):
    q, r = np.linalg.qr(rng.standard_normal((n, d)))
    # fix the sign ambiguity of QR so output is a deterministic function of
    # the Gaussian draw
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def sample_truth(truth: GroundTruth, times, rng) -> ObservationSet:
    """Independent Bernoulli adjacency draws from a ground truth."""
    rng = np.random.default_rng(rng)
    probs = truth.edge_probs(times)
    adjacency = (rng.random(probs.shape) < probs).astype(float)
    return ObservationSet(adjacency=adjacency, times=np.asarray(times, dtype=float))


def sample_from_model(params, times, rng, mask=None) -> ObservationSet:
    """Independent Bernoulli adjacency draws from fitted-style parameters.

    Draws fill every entry (sampling is cheap); when a mask is given it is
    attached so downstream losses ignore the unobserved entries.
    """
    from . import model as model_mod

    rng = np.random.default_rng(rng)
    times = np.asarray(times, dtype=float)
    cores = model_mod.core_values(params, times)
    logits = np.einsum("ia,stab,jb->stij", params.out_factors, cores, params.in_factors)
    adjacency = (rng.random(logits.shape) < expit(logits)).astype(float)
    return ObservationSet(adjacency=adjacency, times=times, mask=mask)
