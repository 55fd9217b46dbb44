# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dilation kernel on bit-packed rows."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint64_t, int64_t

cnp.import_array()


cdef inline void _shift_or_row(uint64_t* dst, const uint64_t* src, Py_ssize_t nw,
                               Py_ssize_t dc) noexcept nogil:
    # dst bit c |= src bit (c + dc)
    cdef Py_ssize_t i, q, j
    cdef int s
    cdef uint64_t v
    if dc >= 0:
        q = dc >> 6
        s = dc & 63
        for i in range(nw - q):
            j = i + q
            v = src[j] >> s
            if s and j + 1 < nw:
                v |= src[j + 1] << (64 - s)
            dst[i] |= v
    else:
        q = (-dc) >> 6
        s = (-dc) & 63
        for i in range(q, nw):
            j = i - q
            v = src[j] << s
            if s and j >= 1:
                v |= src[j - 1] >> (64 - s)
            dst[i] |= v


def dilate(const uint8_t[:, ::1] src, const int64_t[:, ::1] offsets):
    """Return out with out[r, c] = OR_k src[r + dr_k, c + dc_k] (out of range reads 0)."""
    cdef Py_ssize_t H = src.shape[0], W = src.shape[1]
    cdef Py_ssize_t nw = (W + 63) >> 6
    cdef Py_ssize_t r, c, k, r0, r1, dr, dc
    packed_np = np.zeros((H, nw), dtype=np.uint64)
    outp_np = np.zeros((H, nw), dtype=np.uint64)
    out_np = np.zeros((H, W), dtype=np.uint8)
    cdef uint64_t[:, ::1] P = packed_np
    cdef uint64_t[:, ::1] O = outp_np
    cdef uint8_t[:, ::1] out = out_np
    if H == 0 or W == 0:
        return out_np
    with nogil:
        for r in range(H):
            for c in range(W):
                if src[r, c]:
                    P[r, c >> 6] |= (<uint64_t>1) << (c & 63)
        for k in range(offsets.shape[0]):
            dr = offsets[k, 0]
            dc = offsets[k, 1]
            if dc >= W or -dc >= W:
                continue
            r0 = 0 if dr >= 0 else -dr
            r1 = H - dr if dr >= 0 else H
            for r in range(r0, r1):
                _shift_or_row(&O[r, 0], &P[r + dr, 0], nw, dc)
        for r in range(H):
            for c in range(W):
                out[r, c] = (O[r, c >> 6] >> (c & 63)) & 1
    return out_np
