"""Independent references used by the tests and by ``convbench --check``."""

import numpy as np
from numba import njit


def naive_gemm(A, B, C=None):
    """Float64 triple loop: ``C + A @ B`` for 2-d numpy operands."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    out = np.zeros((A.shape[0], B.shape[1])) if C is None else np.array(C, dtype=np.float64)
    return _naive(A, B, out)


@njit(cache=True)
def _naive(A, B, C):
    m, k = A.shape
    n = B.shape[1]
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += A[i, p] * B[p, j]
            C[i, j] += acc
    return C


def max_rel_error(result, reference, scale):
    """max |result - reference| / scale, elementwise.

    ``scale`` is the magnitude of the summands, e.g. ``|A| @ |B|`` for a
    product, so cancellation in the reference does not inflate the error.
    """
    result = np.asarray(result, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    diff = np.abs(result - reference)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), diff)
    return float(rel.max()) if rel.size else 0.0


def gemm_error(A, B, C):
    """Relative error of ``C`` against the float64 product ``A @ B``."""
    ref = naive_gemm(A, B)
    scale = naive_gemm(np.abs(A), np.abs(B))
    return max_rel_error(C, ref, scale)


def conv_error(O, F, I, cp):
    """Relative error of output ``O`` against the float64 direct convolution."""
    from .conv import conv_direct

    F64, I64 = F.astype(np.float64), I.astype(np.float64)
    ref = conv_direct(F64, I64, cp)
    F64.data[:] = np.abs(F64.data)
    I64.data[:] = np.abs(I64.data)
    scale = conv_direct(F64, I64, cp)
    return max_rel_error(O.data, ref.data, scale.data)
