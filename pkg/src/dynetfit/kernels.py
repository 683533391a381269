"""Positive semi-definite kernels on [0, 1] for smoothing over time.

A kernel fixes the function space that each entry of the time-varying core
matrix lives in.  Estimation only ever touches a kernel through two objects:
the cross-evaluation matrix K(t_i, h_j) between observation times and anchor
points, and the Gram matrix of the anchors, which prices the smoothness of a
coefficient vector through the quadratic form theta' G theta.

Four families are provided:

``radial``
    exp(-|x - y|), the exponential (Laplacian) kernel.
``bernoulli``
    1 + k1(x) k1(y) + k2(x) k2(y) - k4(|x - y|), built from scaled Bernoulli
    polynomials; the reproducing kernel of a periodic Sobolev class.
``polynomial``
    (x y / 2 + 1)^3, a cubic polynomial kernel.
``periodic``
    exp(-sin^2(pi |x - y| / p)) with period parameter p > 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("radial", "bernoulli", "polynomial", "periodic")


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its parameters.

    Parameters
    ----------
    family : str
        One of ``radial``, ``bernoulli``, ``polynomial``, ``periodic``.
    period : float, optional
        Period of the periodic family.  Required there, rejected elsewhere.
    """

    family: str
    period: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; expected one of {FAMILIES}"
            )
        if self.family == "periodic":
            if self.period is None or not self.period > 0:
                raise ValueError("periodic kernel requires period > 0")
        elif self.period is not None:
            raise ValueError(f"family {self.family!r} takes no period parameter")

    def __call__(self, x, y):
        return kernel_eval(self, x, y)

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.period is not None:
            out["period"] = self.period
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "KernelSpec":
        extra = set(obj) - {"family", "period"}
        if extra:
            raise ValueError(f"unexpected kernel spec keys: {sorted(extra)}")
        return cls(obj["family"], obj.get("period"))


def _k1(x):
    return x - 0.5


def _k2(x):
    return (_k1(x) ** 2 - 1.0 / 12.0) / 2.0


def _k4(x):
    k1 = _k1(x)
    return (k1 ** 4 - k1 ** 2 / 2.0 + 7.0 / 240.0) / 24.0


def kernel_eval(spec: KernelSpec, x, y):
    """Evaluate the kernel at ``x`` and ``y`` (scalars or broadcastable arrays).

    Both arguments are expected to live in [0, 1]; values slightly outside are
    evaluated as-is since the formulas remain well defined.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.family == "radial":
        out = np.exp(-np.abs(x - y))
    elif spec.family == "bernoulli":
        out = 1.0 + _k1(x) * _k1(y) + _k2(x) * _k2(y) - _k4(np.abs(x - y))
    elif spec.family == "polynomial":
        out = (0.5 * x * y + 1.0) ** 3
    else:
        out = np.exp(-np.sin(np.pi * np.abs(x - y) / spec.period) ** 2)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class GramMatrix:
    """Kernel matrix of a set of anchor points.

    ``values[i, j]`` holds the kernel evaluated at ``anchors[i], anchors[j]``.
    Symmetric and positive semi-definite up to rounding.
    """

    anchors: np.ndarray
    values: np.ndarray


def gram(spec: KernelSpec, anchors) -> GramMatrix:
    """Build the Gram matrix of ``anchors`` under ``spec``.

    Evaluation is vectorized over the full grid; symmetry holds exactly
    because the formulas depend on (x, y) only through |x - y| or x*y.
    """
    anchors = np.asarray(anchors, dtype=float)
    if anchors.ndim != 1 or anchors.size == 0:
        raise ValueError("anchors must be a nonempty 1-d array")
    values = kernel_eval(spec, anchors[:, None], anchors[None, :])
    return GramMatrix(anchors=anchors, values=np.asarray(values))


def cross_gram(spec: KernelSpec, times, anchors) -> np.ndarray:
    """Rectangular kernel matrix K[i, j] = k(times[i], anchors[j])."""
    times = np.asarray(times, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    return np.asarray(kernel_eval(spec, times[:, None], anchors[None, :]))


def rkhs_norm_sq(coeffs, gram_values) -> float:
    """Squared function-space norm of one coefficient vector.

    For a function written as a kernel expansion sum_h coeffs[h] k(., h) the
    squared norm is the quadratic form coeffs' G coeffs.  Tiny negative values
    from rounding are clamped to zero; the form is nonnegative in exact
    arithmetic because G is positive semi-definite.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    values = gram_values.values if isinstance(gram_values, GramMatrix) else np.asarray(gram_values)
    if coeffs.ndim != 1 or values.shape != (coeffs.size, coeffs.size):
        raise ValueError(
            f"coefficient length {coeffs.shape} does not match Gram shape {values.shape}"
        )
    q = float(coeffs @ values @ coeffs)
    return max(q, 0.0)


def smoothness_norms(coeffs, gram_values) -> np.ndarray:
    """RKHS norms (not squared) of every (layer, k, l) coefficient vector.

    Parameters
    ----------
    coeffs : ndarray, shape (layers, d, d, anchors)
    gram_values : ndarray or GramMatrix, shape (anchors, anchors)

    Returns
    -------
    ndarray, shape (layers, d, d)
    """
    coeffs = np.asarray(coeffs, dtype=float)
    values = gram_values.values if isinstance(gram_values, GramMatrix) else np.asarray(gram_values)
    quad = np.einsum("sklh,hg,sklg->skl", coeffs, values, coeffs)
    return np.sqrt(np.maximum(quad, 0.0))


def default_period_for_cycle(cycle_length: float) -> float:
    """Period parameter reproducing exp(-sin^2(2 pi |x - y| / M)).

    A seasonal profile with M cycles over [0, 1] corresponds to period
    p = M / 2 in the ``periodic`` family, since sin^2(pi u / p) with
    p = M / 2 equals sin^2(2 pi u / M).
    """
    if not cycle_length > 0:
        raise ValueError("cycle length must be positive")
    return cycle_length / 2.0
