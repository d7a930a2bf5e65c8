"""Rank-4 tensors, column-major matrix views and convolution geometry.

Every tensor is stored leftmost-index-fastest: element ``(i0, i1, i2, i3)``
lives at ``i0 + i1*d0 + i2*d0*d1 + i3*d0*d1*d2``.  That is exactly numpy's
Fortran order, so ``Tensor4.array`` is a zero-copy ``order='F'`` view of the
flat buffer.  Matrices follow the BLAS convention: element ``(i, j)`` of a
view lives at ``base + i + j*ld``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import prod

import numpy as np

from .errors import DimensionMismatch, InvalidGeometry

DTYPES = (np.float32, np.float64)


def _check_dtype(dtype):
    dtype = np.dtype(dtype)
    if dtype.type not in DTYPES:
        raise TypeError(f"unsupported element type {dtype}; use float32 or float64")
    return dtype


@dataclass(eq=False)
class Tensor4:
    """Dense rank-4 tensor owning a flat, leftmost-fastest buffer."""

    dims: tuple[int, int, int, int]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 4 or any(d <= 0 for d in self.dims):
            raise InvalidGeometry(f"tensor extents must be 4 positive ints, got {self.dims}")
        _check_dtype(self.data.dtype)
        if self.data.ndim != 1 or not self.data.flags.c_contiguous:
            raise ValueError("tensor buffer must be a contiguous 1-D array")
        if self.data.size != prod(self.dims):
            raise ValueError(
                f"buffer holds {self.data.size} elements, extents need {prod(self.dims)}"
            )

    @classmethod
    def zeros(cls, dims, dtype=np.float32):
        return cls(tuple(dims), np.zeros(prod(dims), dtype=_check_dtype(dtype)))

    @classmethod
    def from_array(cls, arr, dtype=None):
        """Copy a 4-d array (indexed ``[i0, i1, i2, i3]``) into a new tensor."""
        arr = np.asarray(arr)
        if arr.ndim != 4:
            raise ValueError(f"expected a 4-d array, got shape {arr.shape}")
        dtype = _check_dtype(dtype or (arr.dtype if arr.dtype.type in DTYPES else np.float32))
        flat = np.asarray(arr, dtype=dtype).ravel(order="F").copy()
        return cls(arr.shape, flat)

    @classmethod
    def random(cls, dims, rng=None, dtype=np.float32, low=-1.0, high=1.0):
        rng = np.random.default_rng(rng)
        data = rng.uniform(low, high, size=prod(dims)).astype(_check_dtype(dtype))
        return cls(tuple(dims), data)

    @classmethod
    def random_integers(cls, dims, rng=None, dtype=np.float64, bound=4):
        """Integer-valued entries in ``[-bound, bound]``; sums of products stay exact."""
        rng = np.random.default_rng(rng)
        data = rng.integers(-bound, bound + 1, size=prod(dims)).astype(_check_dtype(dtype))
        return cls(tuple(dims), data)

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    @property
    def array(self) -> np.ndarray:
        """Zero-copy 4-d view; writes go straight to the buffer."""
        return self.data.reshape(self.dims, order="F")

    def linear_index(self, i0, i1, i2, i3):
        d0, d1, d2, _ = self.dims
        return i0 + i1 * d0 + i2 * d0 * d1 + i3 * d0 * d1 * d2

    def __getitem__(self, idx):
        return self.data[self.linear_index(*idx)]

    def __setitem__(self, idx, value):
        self.data[self.linear_index(*idx)] = value

    def astype(self, dtype):
        return Tensor4(self.dims, self.data.astype(_check_dtype(dtype)))

    def copy(self):
        return Tensor4(self.dims, self.data.copy())


@dataclass(eq=False)
class MatrixView:
    """Column-major ``m x n`` window into a flat buffer."""

    buf: np.ndarray = field(repr=False)
    m: int
    n: int
    ld: int
    base: int = 0

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise DimensionMismatch(f"negative matrix extents {self.m}x{self.n}")
        if self.ld < max(self.m, 1):
            raise DimensionMismatch(f"leading dimension {self.ld} < rows {self.m}")
        if self.buf.ndim != 1:
            raise ValueError("matrix buffer must be 1-D")
        if self.m and self.n and self.base + (self.m - 1) + (self.n - 1) * self.ld >= self.buf.size:
            raise DimensionMismatch("matrix view runs past the end of its buffer")

    @classmethod
    def from_array(cls, a, dtype=None):
        """Copy a 2-d array into a fresh column-major buffer."""
        a = np.asarray(a)
        if a.ndim != 2:
            raise ValueError(f"expected a 2-d array, got shape {a.shape}")
        dtype = _check_dtype(dtype or (a.dtype if a.dtype.type in DTYPES else np.float32))
        m, n = a.shape
        buf = np.asarray(a, dtype=dtype).ravel(order="F").copy()
        return cls(buf, m, n, max(m, 1))

    @classmethod
    def zeros(cls, m, n, dtype=np.float32):
        return cls(np.zeros(m * n, dtype=_check_dtype(dtype)), m, n, max(m, 1))

    @property
    def dtype(self):
        return self.buf.dtype

    @property
    def shape(self):
        return (self.m, self.n)

    @property
    def array(self) -> np.ndarray:
        """Zero-copy strided ``(m, n)`` numpy view."""
        item = self.buf.itemsize
        return np.lib.stride_tricks.as_strided(
            self.buf[self.base:], shape=(self.m, self.n), strides=(item, self.ld * item)
        )

    def __getitem__(self, ij):
        i, j = ij
        return self.buf[self.base + i + j * self.ld]

    def __setitem__(self, ij, value):
        i, j = ij
        self.buf[self.base + i + j * self.ld] = value

    def to_numpy(self):
        return np.array(self.array)

    def element(self, r, c):
        return self[r, c]


@dataclass(frozen=True)
class ConvParams:
    k_n: int
    k_h: int
    k_w: int
    c_i: int
    h_i: int
    w_i: int
    b: int = 1
    s: int = 1
    p: int = 0

    def __post_init__(self):
        for name in ("k_n", "k_h", "k_w", "c_i", "h_i", "w_i", "b", "s"):
            if int(getattr(self, name)) < 1:
                raise InvalidGeometry(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.p < 0:
            raise InvalidGeometry(f"padding must be >= 0, got {self.p}")

    def with_batch(self, b):
        return replace(self, b=b)

    @property
    def h_o(self):
        return output_dims(self)[0]

    @property
    def w_o(self):
        return output_dims(self)[1]

    @property
    def filter_shape(self):
        return (self.k_n, self.k_h, self.k_w, self.c_i)

    @property
    def input_shape(self):
        return (self.h_i, self.w_i, self.c_i, self.b)

    @property
    def output_shape(self):
        h_o, w_o = output_dims(self)
        return (self.k_n, h_o, w_o, self.b)


@dataclass(frozen=True)
class GemmDims:
    m: int
    n: int
    k: int

    @property
    def flops(self):
        return 2 * self.m * self.n * self.k

    def __iter__(self):
        return iter((self.m, self.n, self.k))


def output_dims(cp: ConvParams) -> tuple[int, int]:
    # floor((x - k + 2p)/s + 1) == (x - k + 2p)//s + 1 for integer s >= 1
    h_o = (cp.h_i - cp.k_h + 2 * cp.p) // cp.s + 1
    w_o = (cp.w_i - cp.k_w + 2 * cp.p) // cp.s + 1
    if h_o < 1 or w_o < 1:
        raise InvalidGeometry(
            f"filter {cp.k_h}x{cp.k_w} with padding {cp.p} does not fit input {cp.h_i}x{cp.w_i}"
        )
    return h_o, w_o


def gemm_dims(cp: ConvParams) -> GemmDims:
    h_o, w_o = output_dims(cp)
    return GemmDims(cp.k_n, h_o * w_o * cp.b, cp.k_h * cp.k_w * cp.c_i)


def filters_as_matrix(F: Tensor4) -> MatrixView:
    """View filters ``k_n x k_h x k_w x c_i`` as the ``k_n x (k_h k_w c_i)`` operand."""
    k_n, k_h, k_w, c_i = F.dims
    return MatrixView(F.data, k_n, k_h * k_w * c_i, k_n)


def output_as_matrix(O: Tensor4) -> MatrixView:
    """View outputs ``k_n x h_o x w_o x b`` as the ``k_n x (h_o w_o b)`` result."""
    k_n, h_o, w_o, b = O.dims
    return MatrixView(O.data, k_n, h_o * w_o * b, k_n)


def check_conv_operands(F: Tensor4, I: Tensor4, cp: ConvParams):
    if F.dims != cp.filter_shape:
        raise DimensionMismatch(f"filter extents {F.dims} != {cp.filter_shape}")
    if I.dims != cp.input_shape:
        raise DimensionMismatch(f"input extents {I.dims} != {cp.input_shape}")
    if F.dtype != I.dtype:
        raise TypeError(f"filter dtype {F.dtype} != input dtype {I.dtype}")
    output_dims(cp)
