"""Direct convolution and the explicit im2col + GEMM pipeline.

Padding is virtual everywhere: reads outside the input return zero and no
padded copy of the input is ever made.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import DimensionMismatch
from .gemm import Team, gemm, zero_matrix
from .packing import DEFAULT_BLOCKING, BlockingParams
from .tensor import (
    ConvParams,
    MatrixView,
    Tensor4,
    check_conv_operands,
    filters_as_matrix,
    gemm_dims,
    output_as_matrix,
    output_dims,
)
from .workspace import alloc_scratch


@njit(cache=True)
def _conv_direct(F, I, O, k_n, k_h, k_w, c_i, h_i, w_i, b, s, pad, h_o, w_o):
    for i_b in range(b):                                    # L1
        for i_c in range(c_i):                              # L2
            for i_w in range(w_o):                          # L3
                for i_h in range(h_o):                      # L4
                    o_off = k_n * (i_h + h_o * (i_w + w_o * i_b))
                    for i_kw in range(k_w):                 # L5
                        x = i_w * s + i_kw - pad
                        if x < 0 or x >= w_i:
                            continue
                        for i_kh in range(k_h):             # L6
                            y = i_h * s + i_kh - pad
                            if y < 0 or y >= h_i:
                                continue
                            v = I[y + h_i * (x + w_i * (i_c + c_i * i_b))]
                            f_off = k_n * (i_kh + k_h * (i_kw + k_w * i_c))
                            for i_k in range(k_n):          # L7
                                O[o_off + i_k] += F[f_off + i_k] * v


def conv_direct(F: Tensor4, I: Tensor4, cp: ConvParams, out: Tensor4 | None = None) -> Tensor4:
    """Seven-loop reference convolution (single-threaded oracle)."""
    check_conv_operands(F, I, cp)
    h_o, w_o = output_dims(cp)
    O = _output_tensor(cp, F.dtype, out)
    O.data[:] = 0
    _conv_direct(F.data, I.data, O.data, cp.k_n, cp.k_h, cp.k_w, cp.c_i,
                 cp.h_i, cp.w_i, cp.b, cp.s, cp.p, h_o, w_o)
    return O


@njit(nogil=True, cache=True)
def im2col_channels(I, out, ldb, k_h, k_w, c_i, h_i, w_i, b, s, pad, h_o, w_o, c_lo, c_hi):
    """Rows of B-hat belonging to channels ``[c_lo, c_hi)``."""
    khw = k_h * k_w
    for i_b in range(b):                                    # L1
        for i_c in range(c_lo, c_hi):                       # L2
            i_base = h_i * w_i * (i_c + c_i * i_b)
            col = (h_o * w_o * i_b) * ldb + i_c * khw
            for i_w in range(w_o):                          # L3
                x0 = i_w * s - pad
                for i_h in range(h_o):                      # L4
                    y0 = i_h * s - pad
                    r = col
                    for i_kw in range(k_w):                 # L5
                        x = x0 + i_kw
                        if x < 0 or x >= w_i:
                            for i_kh in range(k_h):
                                out[r + i_kh] = 0
                        else:
                            row_base = i_base + x * h_i
                            for i_kh in range(k_h):         # L6
                                y = y0 + i_kh
                                if y < 0 or y >= h_i:
                                    out[r + i_kh] = 0
                                else:
                                    out[r + i_kh] = I[row_base + y]
                        r += k_h
                    col += ldb


def im2col(I: Tensor4, cp: ConvParams, threads=1) -> MatrixView:
    """Materialise the ``(k_h k_w c_i) x (h_o w_o b)`` matrix B-hat."""
    if I.dims != cp.input_shape:
        raise DimensionMismatch(f"input extents {I.dims} != {cp.input_shape}")
    h_o, w_o = output_dims(cp)
    dims = gemm_dims(cp)
    buf = alloc_scratch(dims.k * dims.n, I.dtype, "im2col")
    B = MatrixView(buf, dims.k, dims.n, dims.k)

    def job(lo, hi):
        im2col_channels(I.data, buf, dims.k, cp.k_h, cp.k_w, cp.c_i, cp.h_i, cp.w_i,
                        cp.b, cp.s, cp.p, h_o, w_o, lo, hi)

    Team(threads).run(job, cp.c_i)
    return B


def im2col_workspace_bytes(cp: ConvParams, dtype=np.float32) -> int:
    dims = gemm_dims(cp)
    return dims.k * dims.n * np.dtype(dtype).itemsize


def _output_tensor(cp, dtype, out):
    if out is None:
        return Tensor4.zeros(cp.output_shape, dtype)
    if out.dims != cp.output_shape or out.dtype != dtype:
        raise DimensionMismatch(f"output extents {out.dims} != {cp.output_shape}")
    return out


def conv_im2col_gemm(F: Tensor4, I: Tensor4, cp: ConvParams,
                     bp: BlockingParams = DEFAULT_BLOCKING, threads=1, out: Tensor4 | None = None) -> Tensor4:
    """Explicit two-stage convolution: im2col, then ``O = F-hat . B-hat``."""
    check_conv_operands(F, I, cp)
    O = _output_tensor(cp, F.dtype, out)
    B = im2col(I, cp, threads)
    C = output_as_matrix(O)
    zero_matrix(C)
    gemm(filters_as_matrix(F), B, C, gemm_dims(cp), bp, threads)
    del B
    return O
