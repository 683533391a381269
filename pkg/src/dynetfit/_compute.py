"""Loss and gradient assembly over all (layer, time) blocks.

Everything here works on raw arrays so that solvers and tests can call it
without building full parameter or data objects.  Shapes:

    x        (n, d)            outgoing factor matrix
    y        (n, d)            incoming factor matrix
    coeffs   (layers, d, d, m) kernel expansion coefficients per core entry
    k_cross  (times, m)        kernel matrix between observation times and anchors
    adj      (layers, times, n, n)
    mask     same shape as adj, or None when every entry is observed

The per-entry model is logit P = x_i' R y_j with R the core matrix of that
layer and time; the loss is the Bernoulli negative log-likelihood summed over
observed entries.  Blocks are visited layer-major then time-major, which pins
the accumulation order of the scalar loss.
"""

import numpy as np

from . import _backend


def core_values(coeffs, k_cross):
    """Core matrices at each observation time: (layers, times, d, d)."""
    return np.einsum("sklh,th->stkl", coeffs, k_cross)


def total_loss(x, y, coeffs, k_cross, adj, mask=None):
    """Negative log-likelihood summed over observed entries of all blocks."""
    cores = core_values(coeffs, k_cross)
    layers, n_times = adj.shape[0], adj.shape[1]
    yt = np.ascontiguousarray(y.T)
    loss = 0.0
    for s in range(layers):
        for t in range(n_times):
            logits = (x @ cores[s, t]) @ yt
            if mask is None:
                loss += _backend.block_loss(logits, adj[s, t])
            else:
                loss += _backend.block_loss_masked(logits, adj[s, t], mask[s, t])
    return loss


def loss_and_gradients(x, y, coeffs, k_cross, adj, mask=None, factor_grads=True):
    """Loss plus gradients with respect to x, y, and coeffs.

    With ``factor_grads=False`` the x and y gradients are skipped (used by the
    convex coefficient solver where the factors are frozen) and None is
    returned in their place.

    Returns
    -------
    (loss, grad_x, grad_y, grad_coeffs)
    """
    cores = core_values(coeffs, k_cross)
    layers, n_times, n = adj.shape[0], adj.shape[1], adj.shape[2]
    d = x.shape[1]
    yt = np.ascontiguousarray(y.T)
    resid = np.empty((n, n))
    grad_x = np.zeros_like(x) if factor_grads else None
    grad_y = np.zeros_like(y) if factor_grads else None
    # projected residual x' E y per block, contracted against the kernel
    # matrix afterwards to form the coefficient gradient
    proj = np.empty((layers, n_times, d, d))
    loss = 0.0
    for s in range(layers):
        for t in range(n_times):
            core = cores[s, t]
            logits = (x @ core) @ yt
            if mask is None:
                loss += _backend.block_loss_residual(logits, adj[s, t], resid)
            else:
                loss += _backend.block_loss_residual_masked(
                    logits, adj[s, t], mask[s, t], resid
                )
            ey = resid @ y
            if factor_grads:
                grad_x += ey @ core.T
                grad_y += resid.T @ (x @ core)
            proj[s, t] = x.T @ ey
    grad_coeffs = np.einsum("stkl,th->sklh", proj, k_cross)
    return loss, grad_x, grad_y, grad_coeffs
