"""Kernel backend selection: compiled extension with a NumPy fallback.

Set ``MFGTORUS_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and by tests that exercise both paths).
"""

import os

from . import numpy_backend


def _select():
    if os.environ.get("MFGTORUS_PURE_PYTHON"):
        return numpy_backend
    try:
        from . import _compiled
        return _compiled
    except ImportError:
        return numpy_backend


_impl = _select()

BACKEND = _impl.BACKEND_NAME

em_block_1d = _impl.em_block_1d
em_block_2d = _impl.em_block_2d
standard_normals = _impl.standard_normals


def get_backend(name: str):
    """Return a named backend module ('compiled' or 'numpy')."""
    if name == "numpy":
        return numpy_backend
    if name == "compiled":
        from . import _compiled
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
