# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-block loss and residual kernels.

Same contract as ``_core_py``: per-entry Bernoulli negative log-likelihood
softplus(logit) - adj * logit, residual sigmoid(logit) - adj, with masked
variants that skip unobserved entries entirely so their adjacency values can
never influence the result.  Entries are visited row-major, which fixes the
accumulation order.
"""

from libc.math cimport exp, fabs, log1p

import numpy as np


cdef inline double _softplus(double y) noexcept nogil:
    cdef double m = y if y > 0.0 else 0.0
    return m + log1p(exp(-fabs(y)))


cdef inline double _sigmoid(double y) noexcept nogil:
    cdef double z
    if y >= 0.0:
        return 1.0 / (1.0 + exp(-y))
    z = exp(y)
    return z / (1.0 + z)


def block_loss(double[:, ::1] logits, double[:, ::1] adj):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t rows = logits.shape[0], cols = logits.shape[1]
    cdef double total = 0.0
    with nogil:
        for i in range(rows):
            for j in range(cols):
                total += _softplus(logits[i, j]) - adj[i, j] * logits[i, j]
    return total


def block_loss_masked(double[:, ::1] logits, double[:, ::1] adj,
                      double[:, ::1] mask):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t rows = logits.shape[0], cols = logits.shape[1]
    cdef double total = 0.0
    with nogil:
        for i in range(rows):
            for j in range(cols):
                if mask[i, j] != 0.0:
                    total += _softplus(logits[i, j]) - adj[i, j] * logits[i, j]
    return total


def block_loss_residual(double[:, ::1] logits, double[:, ::1] adj,
                        double[:, ::1] resid_out):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t rows = logits.shape[0], cols = logits.shape[1]
    cdef double total = 0.0
    with nogil:
        for i in range(rows):
            for j in range(cols):
                total += _softplus(logits[i, j]) - adj[i, j] * logits[i, j]
                resid_out[i, j] = _sigmoid(logits[i, j]) - adj[i, j]
    return total


def block_loss_residual_masked(double[:, ::1] logits, double[:, ::1] adj,
                               double[:, ::1] mask, double[:, ::1] resid_out):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t rows = logits.shape[0], cols = logits.shape[1]
    cdef double total = 0.0
    with nogil:
        for i in range(rows):
            for j in range(cols):
                if mask[i, j] != 0.0:
                    total += _softplus(logits[i, j]) - adj[i, j] * logits[i, j]
                    resid_out[i, j] = _sigmoid(logits[i, j]) - adj[i, j]
                else:
                    resid_out[i, j] = 0.0
    return total
