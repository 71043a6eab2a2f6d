"""Backend selection for the resampling kernels.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``DUOPANO_PURE_PYTHON`` is set to a non-empty value, the
numpy implementation is used. Both expose the same four functions.
"""

import os

from . import _kernels_py

if os.environ.get("DUOPANO_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

sample_bilinear = _impl.sample_bilinear
sample_nearest = _impl.sample_nearest
nearest_index = _impl.nearest_index
splat_bilinear = _impl.splat_bilinear


def backends():
    """Return every importable backend as a ``{name: module}`` mapping."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
