"""Backend selection for the hot transition kernels.

The compiled extension is used when it was built; setting
``GSDMIX_PURE_PYTHON=1`` forces the NumPy fallback.
"""

import os

from gsdmix import _kernels_py

if os.environ.get("GSDMIX_PURE_PYTHON", "").strip() not in ("", "0"):
    _compiled = None
else:
    try:
        from gsdmix import _kernels as _compiled
    except ImportError:
        _compiled = None

if _compiled is not None:
    propagate = _compiled.propagate
    cdf_mass = _compiled.cdf_mass
    BACKEND = "cython"
else:
    propagate = _kernels_py.propagate
    cdf_mass = _kernels_py.cdf_mass
    BACKEND = "python"

__all__ = ["BACKEND", "cdf_mass", "propagate"]
