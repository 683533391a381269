"""Selects the compiled block-kernel backend, falling back to NumPy.

``dynetfit._core`` is an optional Cython extension.  When it is absent
(source checkout without a build step) the package runs on the NumPy
implementations in ``_core_py`` with identical semantics.
"""

from . import _core_py

try:
    from . import _core
    BACKEND = "compiled"
    _impl = _core
except ImportError:
    BACKEND = "python"
    _impl = _core_py

block_loss = _impl.block_loss
block_loss_masked = _impl.block_loss_masked
block_loss_residual = _impl.block_loss_residual
block_loss_residual_masked = _impl.block_loss_residual_masked


def get_backend(name):
    """Return the named backend module ('python' or 'compiled').

    Used by parity tests and benchmarks; raises ImportError when the
    compiled extension was not built.
    """
    if name == "python":
        return _core_py
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
