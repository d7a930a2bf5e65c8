"""Blocked GEMM and GEMM-based convolution with im2col fused into packing."""

from .conv import conv_direct, conv_im2col_gemm, im2col, im2col_workspace_bytes
from .errors import (
    AllocationFailure,
    DimensionMismatch,
    InvalidGeometry,
    ParseError,
    UnknownLayerKind,
)
from .fused import (
    Im2colSource,
    conv_gemm,
    conv_gemm_workspace_bytes,
    decompose_col,
    decompose_row,
    pack_b_im2col,
)
from .gemm import GemmStats, gemm, microkernel, zero_matrix
from .oracle import naive_gemm
from .packing import (
    DEFAULT_BLOCKING,
    BlockingParams,
    MatrixSource,
    PackedPanel,
    pack_a,
    pack_b,
)
from .tensor import (
    ConvParams,
    GemmDims,
    MatrixView,
    Tensor4,
    filters_as_matrix,
    gemm_dims,
    output_as_matrix,
    output_dims,
)
from .workspace import measure_scratch, set_memory_limit

__version__ = "0.1.0"
