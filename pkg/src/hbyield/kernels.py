"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise, or when
``HBYIELD_PURE_PYTHON=1`` is set, the numpy fallback is used.
"""

import os

import numpy as np

from hbyield import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("HBYIELD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from hbyield import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"


def available_backends() -> dict:
    out = {"python": _pykernels}
    try:
        from hbyield import _kernels as compiled
        out["cython"] = compiled
    except ImportError:
        pass
    return out


def dilate(src: np.ndarray, offsets: np.ndarray, backend=None) -> np.ndarray:
    """Shifted-OR dilation over integer (row, col) offsets; returns a bool array."""
    impl = _impl if backend is None else available_backends()[backend]
    src = np.ascontiguousarray(src, dtype=np.uint8)
    offsets = np.ascontiguousarray(np.asarray(offsets, dtype=np.int64).reshape(-1, 2))
    return np.asarray(impl.dilate(src, offsets)).view(bool)
