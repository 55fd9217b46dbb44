"""Pure numpy fallback for the compiled kernels."""

import numpy as np


def dilate(src: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Return out with out[r, c] = OR_k src[r + dr_k, c + dc_k] (out of range reads 0)."""
    src = np.asarray(src, dtype=bool)
    h, w = src.shape
    out = np.zeros((h, w), dtype=bool)
    for dr, dc in np.asarray(offsets).reshape(-1, 2).tolist():
        if abs(dr) >= h or abs(dc) >= w:
            continue
        r0, r1 = max(0, -dr), min(h, h - dr)
        c0, c1 = max(0, -dc), min(w, w - dc)
        out[r0:r1, c0:c1] |= src[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
    return out.view(np.uint8)
