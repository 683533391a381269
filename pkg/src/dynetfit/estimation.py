"""Fitting: projected gradient descent with a spectral warm start.

The estimator minimizes the Bernoulli negative log-likelihood over the factor
matrices and the kernel coefficients of the cores, subject to the trilinear
norm budget.  The budget functional has degree one in each of the three
parameter blocks, so the projection step reduces to multiplying every block
by the cube root of (budget / current value).

Initialization follows a two-step scheme: per-snapshot truncated SVDs of the
centered adjacency matrices are aggregated into starting factors, then the
coefficients are obtained by solving the convex problem with the factors
frozen.  After descent stops, the factors are orthogonalized and the
coefficients are mapped through the same basis change, which preserves every
logit exactly.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _compute
from .errors import NumericalError
from .kernels import KernelSpec, cross_gram, gram
from .model import ModelParams, scale_params, trilinear_norm


@dataclass
class FitConfig:
    """Settings of the projected gradient fit.

    Parameters
    ----------
    dim : embedding dimension d.
    constraint : trilinear norm budget; None means twice the budget value of
        the initial parameters (requires a nonzero initial budget).
    step_size : initial gradient step; halved automatically on loss increase.
    max_iters : gradient iteration cap.
    rel_tol : relative loss-decrease threshold for the stopping window.
    seed : RNG seed; only random initialization consumes entropy.
    init : 'spectral', 'random', or 'provided'.
    window : iterations over which the relative decrease is measured.
    max_halvings : step halvings allowed within one iteration.
    init_solver_iters : iteration cap of the convex coefficient solve used
        by spectral initialization.
    """

    dim: int
    constraint: float | None = None
    step_size: float = 1.0
    max_iters: int = 500
    rel_tol: float = 1e-6
    seed: int | None = None
    init: str = "spectral"
    window: int = 5
    max_halvings: int = 20
    init_solver_iters: int = 200

    def validate(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.constraint is not None and not self.constraint > 0:
            raise ValueError("constraint must be positive")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be >= 0")
        if self.init not in ("spectral", "random", "provided"):
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.window < 1 or self.max_halvings < 0:
            raise ValueError("window >= 1 and max_halvings >= 0 required")
        return self


@dataclass
class FitReport:
    """Everything the fit produced, including the optimization trace."""

    params: ModelParams
    loss_trace: list
    sigma_trace: list
    converged: bool
    iterations_run: int
    final_loss: float
    sigma_final: float
    bic: float
    elapsed_seconds: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        # wall-clock time is deliberately left out so identical runs produce
        # identical files
        return {
            "converged": self.converged,
            "iterations_run": self.iterations_run,
            "final_loss": self.final_loss,
            "sigma_final": self.sigma_final,
            "bic": self.bic,
            "dim": self.params.dim,
            "layers": self.params.layers,
            "n": self.params.n,
            "kernel": self.params.kernel.to_dict(),
        }


def _k_cross_for(params: ModelParams, data) -> np.ndarray:
    return cross_gram(params.kernel, data.times, params.anchors)


def gradient(params: ModelParams, data):
    """Gradients of the negative log-likelihood in all three blocks.

    Writing E for the per-entry residual sigmoid(logit) - a (zero at masked
    entries), the blocks are

        grad out_factors = sum_{s,t} E  (in_factors R_s(t)')
        grad in_factors  = sum_{s,t} E' (out_factors R_s(t))
        grad coeffs[s,k,l,h] = sum_t (out' E in)_{k,l} K(t_t, anchor_h)

    which is the full chain rule through the trilinear logit map.
    """
    _, gx, gy, gtheta = _compute.loss_and_gradients(
        params.out_factors,
        params.in_factors,
        params.coeffs,
        _k_cross_for(params, data),
        data.adjacency,
        data.mask,
    )
    return gx, gy, gtheta


def rescale_to_constraint(params: ModelParams, budget: float, gram_values=None) -> ModelParams:
    """Project onto the trilinear norm ball of radius ``budget``.

    When the current value sigma exceeds the budget, all three blocks are
    multiplied by (budget / sigma)^(1/3); since sigma is degree one in each
    block this lands exactly on the boundary.  Inside the ball (or at
    sigma = 0) the parameters are returned unchanged.
    """
    if not budget > 0:
        raise ValueError("budget must be positive")
    sigma = trilinear_norm(params, gram_values)
    if sigma <= budget:
        return params
    return scale_params(params, (budget / sigma) ** (1.0 / 3.0))


def orthogonalize_output(params: ModelParams) -> ModelParams:
    """Orthonormalize the factors and carry the cores through the change.

    The new factors are the top-d left singular blocks of the old ones.  The
    coefficients are transformed per anchor by (U_out' X) on the left and
    (Y' U_in) on the right; because each factor has full column rank, the
    product out_factors @ core @ in_factors' is preserved exactly at every
    time, not only on the anchor grid.
    """
    u_out, s_out, _ = np.linalg.svd(params.out_factors, full_matrices=False)
    u_in, s_in, _ = np.linalg.svd(params.in_factors, full_matrices=False)
    tol = max(params.n, params.dim) * np.finfo(float).eps
    if s_out[-1] <= tol * s_out[0] or s_in[-1] <= tol * s_in[0]:
        raise NumericalError(
            "factor matrix is rank deficient; orthogonalization would not "
            "preserve the fitted logits"
        )
    left = u_out.T @ params.out_factors
    right = params.in_factors.T @ u_in
    coeffs = np.einsum("ab,sbch,cd->sadh", left, params.coeffs, right)
    return replace(params, out_factors=u_out, in_factors=u_in, coeffs=coeffs)


def spectral_init(data, dim: int):
    """Aggregated-SVD starting factors (no kernel involved).

    Each snapshot is centered by 1/2 (masked entries are treated as exactly
    1/2, i.e. zero after centering) and truncated to its top-``dim`` singular
    blocks; the per-snapshot factors are concatenated and reduced by one more
    SVD.  Returns (out_factors, in_factors), both column-orthonormal.
    """
    n = data.n
    if dim > n:
        raise ValueError(f"dim={dim} exceeds n={n}")
    left_blocks = []
    right_blocks = []
    for s in range(data.layers):
        for t in range(data.n_times):
            centered = data.adjacency[s, t] - 0.5
            if data.mask is not None:
                # np.where, not multiplication: a masked 0 entry would give
                # -0.0 and the following SVD is sensitive at the ulp level
                centered = np.where(data.mask[s, t] != 0.0, centered, 0.0)
            u, _, vt = np.linalg.svd(centered)
            left_blocks.append(u[:, :dim])
            right_blocks.append(vt[:dim].T)
    u_all, _, _ = np.linalg.svd(np.hstack(left_blocks), full_matrices=False)
    v_all, _, _ = np.linalg.svd(np.hstack(right_blocks), full_matrices=False)
    return u_all[:, :dim], v_all[:, :dim]


def solve_coeffs(
    data,
    out_factors,
    in_factors,
    kernel: KernelSpec,
    anchors=None,
    ridge: float = 0.0,
    step_size: float | None = None,
    max_iters: int = 300,
    rel_tol: float = 1e-8,
):
    """Convex coefficient solve with the factors frozen.

    Gradient descent with backtracking on the (strictly convex up to Gram
    null space) coefficient problem, optionally with a ridge penalty
    ridge * sum of squared function-space norms.  The default step is the
    inverse of a curvature bound: the logistic loss has second derivative at
    most 1/4, and the linear map from coefficients to logits has squared
    spectral norm at most |K'K| |X|^2 |Y|^2.
    """
    anchors = data.times if anchors is None else np.asarray(anchors, dtype=float)
    k_cross = cross_gram(kernel, data.times, anchors)
    gram_values = gram(kernel, anchors).values
    layers, dim = data.layers, out_factors.shape[1]
    coeffs = np.zeros((layers, dim, dim, anchors.size))

    if step_size is None:
        curvature = 0.25 * float(np.linalg.norm(k_cross.T @ k_cross, 2))
        curvature *= np.linalg.norm(out_factors, 2) ** 2
        curvature *= np.linalg.norm(in_factors, 2) ** 2
        step_size = 1.0 / max(curvature, 1e-12)

    def objective_grad(c):
        loss, _, _, grad = _compute.loss_and_gradients(
            out_factors, in_factors, c, k_cross, data.adjacency, data.mask,
            factor_grads=False,
        )
        if ridge:
            loss += ridge * float(np.einsum("sklh,hg,sklg->", c, gram_values, c))
            grad = grad + 2.0 * ridge * np.einsum("sklh,hg->sklg", c, gram_values)
        return loss, grad

    def objective(c):
        loss = _compute.total_loss(
            out_factors, in_factors, c, k_cross, data.adjacency, data.mask
        )
        if ridge:
            loss += ridge * float(np.einsum("sklh,hg,sklg->", c, gram_values, c))
        return loss

    loss, grad = objective_grad(coeffs)
    if not math.isfinite(loss):
        raise NumericalError("coefficient solve started from non-finite loss")
    step = step_size
    streak = 0
    for _ in range(max_iters):
        accepted = False
        for _ in range(60):
            cand = coeffs - step * grad
            cand_loss = objective(cand)
            if math.isfinite(cand_loss) and cand_loss <= loss:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        decrease = loss - cand_loss
        coeffs = cand
        loss, grad = objective_grad(coeffs)
        streak += 1
        if streak >= 3:
            step *= 2.0
            streak = 0
        if decrease < rel_tol * max(abs(loss), 1e-12):
            break
    return coeffs


def _random_factors(rng, n, dim):
    factors = rng.standard_normal((n, dim))
    return factors / np.linalg.norm(factors, axis=0, keepdims=True)


def initial_params(data, config: FitConfig, kernel: KernelSpec,
                   init_params: ModelParams | None = None) -> ModelParams:
    """Build the starting point mandated by config.init."""
    if config.init == "provided":
        if init_params is None:
            raise ValueError("init='provided' requires init_params")
        if init_params.kernel != kernel:
            raise ValueError("init_params.kernel disagrees with the fit kernel")
        return init_params
    anchors = np.asarray(data.times, dtype=float)
    if config.init == "spectral":
        x0, y0 = spectral_init(data, config.dim)
        coeffs = solve_coeffs(
            data, x0, y0, kernel, anchors=anchors, max_iters=config.init_solver_iters
        )
    else:
        rng = np.random.default_rng(config.seed)
        x0 = _random_factors(rng, data.n, config.dim)
        y0 = _random_factors(rng, data.n, config.dim)
        coeffs = np.zeros((data.layers, config.dim, config.dim, anchors.size))
    return ModelParams(
        out_factors=x0, in_factors=y0, coeffs=coeffs, anchors=anchors, kernel=kernel
    )


def fit(data, config: FitConfig, kernel: KernelSpec,
        init_params: ModelParams | None = None) -> FitReport:
    """Projected gradient descent under the trilinear norm budget.

    Every iteration takes one simultaneous gradient step in all three blocks,
    projects back onto the budget ball, and accepts the step only if the loss
    did not increase; on increase the step is halved (up to
    config.max_halvings times, the reduced step persisting).  The loop stops
    when the relative loss decrease over the last ``window`` iterations falls
    below rel_tol, when no acceptable step exists, or at max_iters.  The
    returned parameters are orthogonalized, which leaves the logits (and so
    the reported loss and BIC) unchanged up to rounding.
    """
    t_start = _time.perf_counter()
    config.validate()
    params = initial_params(data, config, kernel, init_params)
    gram_values = gram(kernel, params.anchors).values
    k_cross = cross_gram(kernel, data.times, params.anchors)

    budget = config.constraint
    if budget is None:
        sigma0 = trilinear_norm(params, gram_values)
        if sigma0 <= 0:
            raise ValueError(
                "cannot derive a default constraint from a zero-budget start "
                "(random init has zero coefficients); set constraint explicitly"
            )
        budget = 2.0 * sigma0
    params = rescale_to_constraint(params, budget, gram_values)

    def loss_of(p):
        return _compute.total_loss(
            p.out_factors, p.in_factors, p.coeffs, k_cross, data.adjacency, data.mask
        )

    loss, gx, gy, gtheta = _compute.loss_and_gradients(
        params.out_factors, params.in_factors, params.coeffs, k_cross,
        data.adjacency, data.mask,
    )
    if not math.isfinite(loss):
        raise NumericalError("initial loss is not finite")
    loss_trace = [loss]
    sigma_trace = [trilinear_norm(params, gram_values)]
    step = config.step_size
    converged = False
    iterations = 0
    streak = 0

    for _ in range(config.max_iters):
        accepted = None
        halved = False
        for _ in range(config.max_halvings + 1):
            cand = replace(
                params,
                out_factors=params.out_factors - step * gx,
                in_factors=params.in_factors - step * gy,
                coeffs=params.coeffs - step * gtheta,
            )
            cand = rescale_to_constraint(cand, budget, gram_values)
            cand_loss = loss_of(cand)
            if math.isfinite(cand_loss) and cand_loss <= loss:
                accepted = (cand, cand_loss)
                break
            step *= 0.5
            halved = True
        if accepted is None:
            # no descent direction at any allowed step: treat as stationary
            converged = True
            break
        params, loss = accepted
        iterations += 1
        # early halvings must not pin the step small forever: after three
        # acceptances in a row at the current step, probe a larger one
        # (backtracking keeps the trace non-increasing either way)
        streak = 0 if halved else streak + 1
        if streak >= 3:
            step *= 2.0
            streak = 0
        loss_trace.append(loss)
        sigma_trace.append(trilinear_norm(params, gram_values))
        if iterations >= config.window:
            past = loss_trace[-(config.window + 1)]
            if past - loss < config.rel_tol * max(abs(past), 1e-12):
                converged = True
                break
        loss, gx, gy, gtheta = _compute.loss_and_gradients(
            params.out_factors, params.in_factors, params.coeffs, k_cross,
            data.adjacency, data.mask,
        )

    params = orthogonalize_output(params)
    final_loss = loss_of(params)
    report = FitReport(
        params=params,
        loss_trace=loss_trace,
        sigma_trace=sigma_trace,
        converged=converged,
        iterations_run=iterations,
        final_loss=final_loss,
        sigma_final=trilinear_norm(params, gram_values),
        bic=bic_score(final_loss, n=data.n, dim=config.dim,
                      layers=data.layers, n_times=data.n_times),
        elapsed_seconds=_time.perf_counter() - t_start,
    )
    return report


def bic_score(loss: float, n: int, dim: int, layers: int, n_times: int) -> float:
    """Bayesian information criterion of a fitted model.

    Twice the optimal loss plus an effective-parameter count d(2n + dKm)
    times the log of the observation count K m n^2.
    """
    if not math.isfinite(loss):
        raise ValueError("loss must be finite")
    count = dim * (2 * n + dim * layers * n_times)
    return 2.0 * loss + count * math.log(layers * n_times * n * n)


@dataclass
class SelectionResult:
    rows: list            # dicts: dim, kernel, bic, converged
    best_report: FitReport
    best_dim: int
    best_kernel: KernelSpec


def select_model(data, dims, kernels, config: FitConfig | None = None) -> SelectionResult:
    """Fit every (dim, kernel) candidate and pick the smallest BIC.

    The spectral factor computation is shared across kernels for each dim
    (it does not involve the kernel); the convex coefficient warm start is
    kernel-specific.  Ties within 1e-12 go to the smaller dim, then to the
    earlier candidate.  Candidates whose fit raises a numerical error are
    recorded with infinite BIC; if every candidate fails, that is an error.
    """
    dims = list(dims)
    kernels = list(kernels)
    if not dims or not kernels:
        raise ValueError("need at least one dim and one kernel candidate")
    base = config or FitConfig(dim=dims[0])
    rows = []
    best = None  # (bic, dim, report, kernel)
    for dim in dims:
        x0, y0 = spectral_init(data, dim)
        for kernel in kernels:
            cfg = replace(base, dim=dim, init="provided")
            try:
                coeffs = solve_coeffs(
                    data, x0, y0, kernel, max_iters=cfg.init_solver_iters
                )
                start = ModelParams(
                    out_factors=x0, in_factors=y0, coeffs=coeffs,
                    anchors=np.asarray(data.times, dtype=float), kernel=kernel,
                )
                report = fit(data, cfg, kernel, init_params=start)
            except NumericalError:
                rows.append({"dim": dim, "kernel": kernel, "bic": math.inf,
                             "converged": False})
                continue
            rows.append({"dim": dim, "kernel": kernel, "bic": report.bic,
                         "converged": report.converged})
            if best is None:
                best = (report.bic, dim, report, kernel)
            elif report.bic < best[0] - 1e-12:
                best = (report.bic, dim, report, kernel)
            elif abs(report.bic - best[0]) <= 1e-12 and dim < best[1]:
                best = (report.bic, dim, report, kernel)
    if best is None:
        raise NumericalError("every selection candidate failed to fit")
    return SelectionResult(rows=rows, best_report=best[2], best_dim=best[1],
                           best_kernel=best[3])
