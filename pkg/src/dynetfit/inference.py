"""Downstream analyses of a fitted model.

The model is identified only up to orthogonal transforms of the factor
columns, so every comparison against a reference starts with a Procrustes
alignment.  On top of that this module provides subspace error and core
correlation metrics, k-means vertex clustering, layer clustering on
coefficient features, trajectory distance matrices, classical MDS for
plot-ready coordinates, hierarchical layer clustering, and the frozen-factor
coefficient solve for scoring new networks against a trained model.
"""

from __future__ import annotations

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import squareform

from . import model as model_mod
from .errors import NumericalError
from .estimation import solve_coeffs


def procrustes(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Orthogonal w minimizing ||a w - b||_F (classic Procrustes solution)."""
    if a.shape != b.shape:
        raise ValueError("procrustes inputs must share a shape")
    u, _, vt = np.linalg.svd(a.T @ b)
    return u @ vt


def subspace_error(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Spectral norm of the difference of the two column-space projectors.

    0 when the column spaces coincide, 1 when they are orthogonal.  Both
    inputs must be column-orthonormal.
    """
    for name, mat in (("estimate", estimate), ("reference", reference)):
        gram_mat = mat.T @ mat
        if not np.allclose(gram_mat, np.eye(mat.shape[1]), atol=1e-8):
            raise ValueError(f"{name} must have orthonormal columns")
    diff = estimate @ estimate.T - reference @ reference.T
    eigs = np.linalg.eigvalsh(diff)
    return float(np.max(np.abs(eigs)))


def pair_subspace_error(out_est, out_ref, in_est, in_ref) -> float:
    """Mean of the outgoing and incoming subspace errors."""
    return 0.5 * (subspace_error(out_est, out_ref) + subspace_error(in_est, in_ref))


def matrix_corr(m1: np.ndarray, m2: np.ndarray) -> float:
    """Cosine similarity of the two matrices viewed as flat vectors."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if m1.shape != m2.shape:
        raise ValueError("matrix_corr inputs must share a shape")
    n1, n2 = np.linalg.norm(m1), np.linalg.norm(m2)
    if n1 == 0 or n2 == 0:
        raise ValueError("matrix_corr is undefined for a zero matrix")
    return float(np.vdot(m1, m2) / (n1 * n2))


def core_accuracy(est_cores, true_cores, w_out, w_in) -> float:
    """Correlation between aligned estimated cores and true cores.

    Both core stacks have shape (layers, times, d, d); the estimates are
    aligned as w_out' R w_in.  Concatenating blocks and flattening commute,
    so the correlation is taken over all entries at once.
    """
    est = np.asarray(est_cores, dtype=float)
    true = np.asarray(true_cores, dtype=float)
    if est.shape != true.shape:
        raise ValueError("core stacks must share a shape")
    aligned = np.einsum("ka,stab,bl->stkl", w_out.T, est, w_in)
    return matrix_corr(aligned, true)


def evaluate_against_truth(params, truth, grid_size: int = 100) -> dict:
    """Standard evaluation block: subspace errors plus core accuracy.

    ``truth`` needs out_factors / in_factors and a ``core_values(times)``
    method (a GroundTruth, or another ModelParams via a small adapter).
    """
    if params.dim != truth.out_factors.shape[1]:
        raise ValueError(
            f"dimension mismatch: fit d={params.dim}, "
            f"truth d={truth.out_factors.shape[1]}"
        )
    err_out = subspace_error(params.out_factors, truth.out_factors)
    err_in = subspace_error(params.in_factors, truth.in_factors)
    w_out = procrustes(params.out_factors, truth.out_factors)
    w_in = procrustes(params.in_factors, truth.in_factors)
    grid = np.linspace(0.0, 1.0, grid_size)
    est_cores = model_mod.core_values(params, grid)
    true_cores = truth.core_values(grid)
    return {
        "err_out": err_out,
        "err_in": err_in,
        "err_mean": 0.5 * (err_out + err_in),
        "core_acc": core_accuracy(est_cores, true_cores, w_out, w_in),
    }


# ---------------------------------------------------------------------------
# clustering


def kmeans(points: np.ndarray, k: int, seed, restarts: int = 16,
           max_iters: int = 100) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding, best of ``restarts`` runs.

    Deterministic given the seed.  An emptied cluster is reseeded at the
    point farthest from its assigned centroid.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if k > n or k < 1:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    best_labels, best_wcss = None, np.inf
    for _ in range(restarts):
        centers = _kmeanspp(points, k, rng)
        labels = None
        for _ in range(max_iters):
            dist2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = np.argmin(dist2, axis=1)
            for c in range(k):
                chosen = new_labels == c
                if not chosen.any():
                    farthest = np.argmax(dist2[np.arange(n), new_labels])
                    new_labels[farthest] = c
                    chosen = new_labels == c
                centers[c] = points[chosen].mean(axis=0)
            if labels is not None and np.array_equal(labels, new_labels):
                break
            labels = new_labels
        dist2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        wcss = float(dist2[np.arange(n), labels].sum())
        if wcss < best_wcss:
            best_wcss, best_labels = wcss, labels
    return best_labels


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[c] = points[rng.integers(n)]
        else:
            centers[c] = points[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def clustering_accuracy(pred, true) -> float:
    """Fraction of items whose labels match under the best label bijection.

    Solved as a max-weight assignment on the contingency table, which finds
    the optimal permutation exactly for any number of labels.
    """
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError("label vectors must be 1-d of equal length")
    pred_ids, pred_codes = np.unique(pred, return_inverse=True)
    true_ids, true_codes = np.unique(true, return_inverse=True)
    table = np.zeros((pred_ids.size, true_ids.size))
    np.add.at(table, (pred_codes, true_codes), 1.0)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / pred.size)


def vertex_communities(params, k: int, seed, restarts: int = 16):
    """k-means labels of the factor rows: (outgoing labels, incoming labels).

    Restart streams are split deterministically from the seed so the two
    clusterings are independent but reproducible.
    """
    seq = np.random.SeedSequence(seed).spawn(2)
    out_labels = kmeans(params.out_factors, k, seq[0], restarts=restarts)
    in_labels = kmeans(params.in_factors, k, seq[1], restarts=restarts)
    return out_labels, in_labels


def layer_features(params) -> np.ndarray:
    """Per-layer feature vectors: coefficients flattened in (k, l, anchor)
    order, shape (layers, d*d*anchors)."""
    return params.coeffs.reshape(params.layers, -1).copy()


def cluster_layers(params, k: int, seed, restarts: int = 16,
                   features: str = "coeffs", grid_size: int = 100) -> np.ndarray:
    """k-means layer labels on coefficient features or sampled trajectories."""
    if features == "coeffs":
        feats = layer_features(params)
    elif features == "trajectory":
        grid = np.linspace(0.0, 1.0, grid_size)
        feats = model_mod.core_values(params, grid).reshape(params.layers, -1)
    else:
        raise ValueError(f"unknown feature basis {features!r}")
    return kmeans(feats, k, seed, restarts=restarts)


# ---------------------------------------------------------------------------
# trajectories, embedding, hierarchy


def trajectory_distance_matrix(params, grid, mode: str = "per-trajectory") -> np.ndarray:
    """Distances between core snapshots or whole core trajectories.

    per-point: (layers * grid) square matrix of Frobenius distances between
    individual core matrices, ordered layer-major then time.
    per-trajectory: (layers x layers) Euclidean distances between whole
    trajectories sampled on the grid.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    cores = model_mod.core_values(params, grid)
    if mode == "per-point":
        flat = cores.reshape(params.layers * grid.size, -1)
    elif mode == "per-trajectory":
        flat = cores.reshape(params.layers, -1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    sq = (flat ** 2).sum(axis=1)
    dist2 = sq[:, None] + sq[None, :] - 2.0 * (flat @ flat.T)
    dist = np.sqrt(np.maximum(dist2, 0.0))
    np.fill_diagonal(dist, 0.0)
    return np.maximum(dist, dist.T)


def classical_mds(distances: np.ndarray, dim: int) -> np.ndarray:
    """Classical multidimensional scaling to ``dim`` coordinates.

    Double-centers the squared distances, keeps the top eigenpairs with
    positive eigenvalues (components beyond the positive spectrum come out
    as zero columns), and fixes signs so each column's largest-magnitude
    entry is positive.
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.allclose(d, d.T, atol=1e-10) or np.abs(np.diag(d)).max() > 1e-10:
        raise ValueError("distance matrix must be symmetric with zero diagonal")
    n = d.shape[0]
    centering = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * centering @ (d ** 2) @ centering
    eigvals, eigvecs = np.linalg.eigh(b)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    if eigvals.size and eigvals[0] < 0:
        raise NumericalError("distance matrix has no nonnegative spectrum")
    coords = np.zeros((n, dim))
    for c in range(min(dim, n)):
        if eigvals[c] <= 0:
            break
        coords[:, c] = eigvecs[:, c] * np.sqrt(eigvals[c])
        anchor = np.argmax(np.abs(coords[:, c]))
        if coords[anchor, c] < 0:
            coords[:, c] = -coords[:, c]
    return coords


def hierarchical_cluster(distances: np.ndarray, k: int | None = None,
                         method: str = "average"):
    """Agglomerative clustering of a distance matrix.

    Returns (merges, labels): merges is a list of (step, left, right, height)
    over cluster indices in scipy convention (new clusters take indices
    beyond the leaf count); labels is None unless a cut level k is given.
    """
    d = np.asarray(distances, dtype=float)
    if d.shape[0] < 2:
        raise ValueError("need at least 2 items to cluster")
    condensed = squareform(np.maximum(d, d.T), checks=False)
    z = linkage(condensed, method=method)
    merges = [
        (step, int(row[0]), int(row[1]), float(row[2]))
        for step, row in enumerate(z)
    ]
    labels = None
    if k is not None:
        labels = fcluster(z, t=k, criterion="maxclust") - 1
    return merges, labels


def offline_coeffs(new_data, params, ridge: float = 0.0,
                   max_iters: int = 300) -> np.ndarray:
    """Coefficient solve for new data against frozen, already-fitted factors.

    The representer expansion uses the new data's own time grid as anchors.
    Returns the coefficient array (new layers, d, d, new times); compare
    trajectories against the training model with trajectory distances on a
    common dense grid.
    """
    if new_data.n != params.n:
        raise ValueError(
            f"new data has n={new_data.n}, frozen factors have n={params.n}"
        )
    return solve_coeffs(
        new_data, params.out_factors, params.in_factors, params.kernel,
        ridge=ridge, max_iters=max_iters,
    )
