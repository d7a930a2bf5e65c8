"""ConvGemm: convolution as GEMM with im2col folded into the packing of Bc.

The im2col matrix B-hat is never built.  :class:`Im2colSource` exposes it
as a packing source whose ``pack_panels`` reads straight from the input
tensor, so the unchanged five-loop engine (and micro-kernel) computes
``O = F-hat . im2col(I)`` with only the ``Ac``/``Bc`` buffers as workspace.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .conv import _output_tensor
from .gemm import Team, gemm, zero_matrix
from .packing import DEFAULT_BLOCKING, BlockingParams, PackedPanel, pack_b
from .tensor import (
    ConvParams,
    Tensor4,
    check_conv_operands,
    filters_as_matrix,
    gemm_dims,
    output_as_matrix,
    output_dims,
)
from .errors import DimensionMismatch


def decompose_row(r, cp: ConvParams):
    """Row ``r`` of B-hat -> ``(i_c, i_kw, i_kh)``."""
    khw = cp.k_h * cp.k_w
    i_c, rem = divmod(r, khw)
    i_kw, i_kh = divmod(rem, cp.k_h)
    return i_c, i_kw, i_kh


def decompose_col(c, cp: ConvParams):
    """Column ``c`` of B-hat -> ``(i_b, i_w, i_h)``."""
    h_o, w_o = output_dims(cp)
    i_b, rem = divmod(c, h_o * w_o)
    i_w, i_h = divmod(rem, h_o)
    return i_b, i_w, i_h


@njit(nogil=True, cache=True)
def pack_im2col_panels(I, h_i, w_i, c_i, k_h, k_w, s, pad, h_o, w_o,
                       p_c, j_c, kc_eff, nc_eff, nr, out, lo, hi):
    hw = h_i * w_i
    chw = hw * c_i
    how = h_o * w_o
    khw = k_h * k_w
    y0 = np.empty(nr, np.int64)
    x0 = np.empty(nr, np.int64)
    base = np.empty(nr, np.int64)

    # column coordinates of the first panel in [lo, hi); carried forward after
    c = j_c + lo * nr
    i_b = c // how
    i_w = (c - i_b * how) // h_o
    i_h = c - i_b * how - i_w * h_o
    # row coordinates of p_c, restored at the top of every panel
    i_c0 = p_c // khw
    i_kw0 = (p_c - i_c0 * khw) // k_h
    i_kh0 = p_c - i_c0 * khw - i_kw0 * k_h

    for jp in range(lo, hi):                                    # L1
        cols = min(nr, nc_eff - jp * nr)
        interior = True
        for j_s in range(cols):
            y = i_h * s - pad
            x = i_w * s - pad
            y0[j_s] = y
            x0[j_s] = x
            base[j_s] = y + x * h_i + i_b * chw
            if y < 0 or x < 0 or y + k_h > h_i or x + k_w > w_i:
                interior = False
            i_h += 1
            if i_h == h_o:
                i_h = 0
                i_w += 1
                if i_w == w_o:
                    i_w = 0
                    i_b += 1
        i_c = i_c0
        i_kw = i_kw0
        i_kh = i_kh0
        i = jp * nr * kc_eff
        for _ in range(kc_eff):                                 # L2
            if interior:
                # no column of this panel reaches into the padding
                r_off = i_kh + i_kw * h_i + i_c * hw
                for j_s in range(cols):                         # L3
                    out[i + j_s] = I[r_off + base[j_s]]
            else:
                c_off = i_c * hw
                for j_s in range(cols):
                    y = y0[j_s] + i_kh
                    x = x0[j_s] + i_kw
                    if 0 <= y < h_i and 0 <= x < w_i:
                        out[i + j_s] = I[base[j_s] + i_kh + i_kw * h_i + c_off]
                    else:
                        out[i + j_s] = 0
            for j_s in range(cols, nr):
                out[i + j_s] = 0
            i += nr
            i_kh += 1
            if i_kh == k_h:
                i_kh = 0
                i_kw += 1
                if i_kw == k_w:
                    i_kw = 0
                    i_c += 1


class Im2colSource:
    """B-hat = im2col(I), readable element-wise and packable, never materialised."""

    def __init__(self, I: Tensor4, cp: ConvParams):
        if I.dims != cp.input_shape:
            raise DimensionMismatch(f"input extents {I.dims} != {cp.input_shape}")
        self.I = I
        self.cp = cp
        self.h_o, self.w_o = output_dims(cp)
        dims = gemm_dims(cp)
        self.rows = dims.k
        self.cols = dims.n
        self.dtype = I.dtype

    def element(self, r, c):
        cp = self.cp
        i_c, i_kw, i_kh = decompose_row(r, cp)
        i_b, i_w, i_h = decompose_col(c, cp)
        y = i_h * cp.s + i_kh - cp.p
        x = i_w * cp.s + i_kw - cp.p
        if 0 <= y < cp.h_i and 0 <= x < cp.w_i:
            return self.I[y, x, i_c, i_b]
        return self.I.dtype.type(0)

    def pack_panels(self, p_c, j_c, kc_eff, nc_eff, nr, out, lo, hi):
        cp = self.cp
        pack_im2col_panels(self.I.data, cp.h_i, cp.w_i, cp.c_i, cp.k_h, cp.k_w, cp.s, cp.p,
                           self.h_o, self.w_o, p_c, j_c, kc_eff, nc_eff, nr, out, lo, hi)


def pack_b_im2col(src: Im2colSource, p_c, j_c, kc_eff, nc_eff,
                  bp: BlockingParams = DEFAULT_BLOCKING, out: PackedPanel | None = None, threads=1):
    """Pack one ``kc_eff x nc_eff`` block of im2col(I) into ``Bc``, reading I directly."""
    if out is None:
        out = PackedPanel.for_b(bp, src.dtype)
    pack_b(src, p_c, j_c, kc_eff, nc_eff, bp, out, Team(threads))
    return out


def conv_gemm(F: Tensor4, I: Tensor4, cp: ConvParams,
              bp: BlockingParams = DEFAULT_BLOCKING, threads=1, out: Tensor4 | None = None) -> Tensor4:
    check_conv_operands(F, I, cp)
    O = _output_tensor(cp, F.dtype, out)
    C = output_as_matrix(O)
    zero_matrix(C)
    gemm(filters_as_matrix(F), Im2colSource(I, cp), C, gemm_dims(cp), bp, threads)
    return O


def conv_gemm_workspace_bytes(bp: BlockingParams = DEFAULT_BLOCKING, dtype=np.float32):
    return bp.scratch_bytes(dtype)
