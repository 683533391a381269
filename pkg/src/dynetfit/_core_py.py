"""Pure NumPy implementations of the per-block loss and residual kernels.

These are the reference implementations; ``dynetfit._core`` is a compiled
drop-in replacement built from ``_core.pyx``.  Either module exposes the same
four functions operating on one (layer, time) block at a time.

Masked variants multiply per-entry contributions by the mask after they are
computed, so an unobserved entry contributes exactly 0.0 no matter what value
sits in the adjacency slot.
"""

import numpy as np
from scipy.special import expit


def block_loss(logits, adj):
    """Bernoulli negative log-likelihood of one block, summed over entries."""
    return float(np.sum(np.logaddexp(0.0, logits) - adj * logits))


def block_loss_masked(logits, adj, mask):
    per_entry = np.logaddexp(0.0, logits) - adj * logits
    return float(np.sum(per_entry * mask))


def block_loss_residual(logits, adj, resid_out):
    """Loss of one block; also writes sigmoid(logits) - adj into resid_out."""
    np.subtract(expit(logits), adj, out=resid_out)
    return block_loss(logits, adj)


def block_loss_residual_masked(logits, adj, mask, resid_out):
    np.subtract(expit(logits), adj, out=resid_out)
    np.multiply(resid_out, mask, out=resid_out)
    return block_loss_masked(logits, adj, mask)
