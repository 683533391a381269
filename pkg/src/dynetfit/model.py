"""Model parameterization and evaluation.

A fitted model consists of two shared factor matrices with d columns (one for
outgoing roles, one for incoming roles), and, for every layer, a d x d core
matrix that varies smoothly in time.  Each core entry is a kernel expansion
over a grid of anchor times, so the whole time-varying structure is stored as
a coefficient array of shape (layers, d, d, anchors).

Edge probabilities follow a logistic link: the logit of edge (i, j) in layer s
at time t is x_i' R_s(t) y_j, where x_i and y_j are rows of the factor
matrices and R_s(t) is the core.  The negative log-likelihood of observed
binary adjacency data and the trilinear norm used as the constraint during
fitting are both computed here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from . import _compute
from .kernels import KernelSpec, cross_gram, gram, smoothness_norms


@dataclass
class ModelParams:
    """Complete parameter set of one fitted (or ground-truth) model.

    Parameters
    ----------
    out_factors : ndarray, shape (n, d)
        Outgoing-role factor matrix.  Column-orthonormal after finalization;
        unconstrained during optimization.
    in_factors : ndarray, shape (n, d)
        Incoming-role factor matrix.
    coeffs : ndarray, shape (layers, d, d, anchors)
        Kernel expansion coefficients of each core entry.
    anchors : ndarray, shape (anchors,)
        Anchor times of the kernel expansion, inside [0, 1].
    kernel : KernelSpec
    """

    out_factors: np.ndarray
    in_factors: np.ndarray
    coeffs: np.ndarray
    anchors: np.ndarray
    kernel: KernelSpec

    @property
    def n(self) -> int:
        return self.out_factors.shape[0]

    @property
    def dim(self) -> int:
        return self.out_factors.shape[1]

    @property
    def layers(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_anchors(self) -> int:
        return self.anchors.shape[0]

    def validate(self):
        n, d = self.out_factors.shape
        if self.in_factors.shape != (n, d):
            raise ValueError("factor matrices must share one (n, d) shape")
        if self.coeffs.ndim != 4 or self.coeffs.shape[1:3] != (d, d):
            raise ValueError(
                f"coeffs shape {self.coeffs.shape} inconsistent with d={d}"
            )
        if self.coeffs.shape[3] != self.anchors.shape[0]:
            raise ValueError("coeffs last axis must match the anchor count")
        for name in ("out_factors", "in_factors", "coeffs", "anchors"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")
        return self


def core_matrix(params: ModelParams, layer: int, t: float) -> np.ndarray:
    """Core matrix R of one layer at an arbitrary time in [0, 1]."""
    weights = params.kernel(float(t), params.anchors)
    return params.coeffs[layer] @ weights


def core_values(params: ModelParams, times) -> np.ndarray:
    """Core matrices of all layers on a time grid: (layers, len(times), d, d)."""
    k_cross = cross_gram(params.kernel, np.asarray(times, dtype=float), params.anchors)
    return _compute.core_values(params.coeffs, k_cross)


def edge_logits(params: ModelParams, layer: int, t: float) -> np.ndarray:
    """n x n matrix of edge logits for one layer at time t."""
    return (params.out_factors @ core_matrix(params, layer, t)) @ params.in_factors.T


def edge_probs(params: ModelParams, layer: int, t: float) -> np.ndarray:
    """n x n matrix of edge probabilities, overflow-safe."""
    return expit(edge_logits(params, layer, t))


def neg_log_likelihood(params: ModelParams, data) -> float:
    """Bernoulli negative log-likelihood over the observed entries of ``data``.

    ``data`` is an ObservationSet (duck-typed: needs ``adjacency``, ``times``
    and optional ``mask``).  Each observed entry contributes
    softplus(logit) - a * logit, which is nonnegative for binary a; entries
    masked out contribute exactly zero.
    """
    if data.adjacency.shape[2] != params.n or data.adjacency.shape[0] != params.layers:
        raise ValueError(
            f"data shape {data.adjacency.shape} does not match params "
            f"(n={params.n}, layers={params.layers})"
        )
    k_cross = cross_gram(params.kernel, data.times, params.anchors)
    return _compute.total_loss(
        params.out_factors,
        params.in_factors,
        params.coeffs,
        k_cross,
        data.adjacency,
        data.mask,
    )


def trilinear_norm(params: ModelParams, gram_values=None) -> float:
    """Constraint functional: sum over (layer, k, l) of the product of the
    k-th out-factor column norm, the l-th in-factor column norm, and the
    function-space norm of the (layer, k, l) core entry.

    Degree one in each of the three blocks, which is what makes the
    constraint projection a single rescaling.
    """
    if gram_values is None:
        gram_values = gram(params.kernel, params.anchors).values
    out_norms = np.linalg.norm(params.out_factors, axis=0)
    in_norms = np.linalg.norm(params.in_factors, axis=0)
    func_norms = smoothness_norms(params.coeffs, gram_values)
    return float(np.einsum("skl,k,l->", func_norms, out_norms, in_norms))


def params_to_dict(params: ModelParams) -> dict:
    return {
        "out_factors": params.out_factors.tolist(),
        "in_factors": params.in_factors.tolist(),
        "coeffs_shape": list(params.coeffs.shape),
        "coeffs": params.coeffs.ravel().tolist(),
        "anchors": params.anchors.tolist(),
        "kernel": params.kernel.to_dict(),
    }


def params_from_dict(obj: dict) -> ModelParams:
    shape = tuple(obj["coeffs_shape"])
    params = ModelParams(
        out_factors=np.asarray(obj["out_factors"], dtype=float),
        in_factors=np.asarray(obj["in_factors"], dtype=float),
        coeffs=np.asarray(obj["coeffs"], dtype=float).reshape(shape),
        anchors=np.asarray(obj["anchors"], dtype=float),
        kernel=KernelSpec.from_dict(obj["kernel"]),
    )
    return params.validate()


def save_params(params: ModelParams, path):
    """Write params as JSON; floats use repr so round-trips are exact."""
    with open(path, "w") as fh:
        json.dump(params_to_dict(params), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path) -> ModelParams:
    with open(path) as fh:
        return params_from_dict(json.load(fh))


def scale_params(params: ModelParams, factor: float) -> ModelParams:
    """Multiply all three blocks by the same factor (constraint projection)."""
    return replace(
        params,
        out_factors=params.out_factors * factor,
        in_factors=params.in_factors * factor,
        coeffs=params.coeffs * factor,
    )
