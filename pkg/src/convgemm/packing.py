"""Packing of GEMM operand blocks into micro-panel order.

``Ac`` holds ``mr x kc`` micro-panels, each column-major; ``Bc`` holds
``kc x nr`` micro-panels, each row-major.  Partial micro-panels at the
bottom/right edge of a block are zero-filled up to ``mr``/``nr``.

Packing kernels take a half-open micro-panel range ``[lo, hi)`` so that a
worker team can split the outermost packing loop without overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from numba import njit

from .errors import DimensionMismatch
from .tensor import MatrixView
from .workspace import alloc_scratch


@dataclass(frozen=True)
class BlockingParams:
    mc: int = 120
    nc: int = 3072
    kc: int = 640
    mr: int = 8
    nr: int = 12

    def __post_init__(self):
        for name in ("mc", "nc", "kc", "mr", "nr"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.mr > self.mc or self.nr > self.nc:
            raise ValueError(f"register tile {self.mr}x{self.nr} exceeds cache block {self.mc}x{self.nc}")
        # panels tile the cache blocks exactly, so Ac/Bc need no slack
        if self.mc % self.mr or self.nc % self.nr:
            raise ValueError("mc must be a multiple of mr and nc a multiple of nr")

    @property
    def ac_elements(self):
        return self.mc * self.kc

    @property
    def bc_elements(self):
        return self.kc * self.nc

    def scratch_bytes(self, dtype=np.float32):
        return (self.ac_elements + self.bc_elements) * np.dtype(dtype).itemsize


DEFAULT_BLOCKING = BlockingParams()


@dataclass(eq=False)
class PackedPanel:
    """Reusable aligned packing buffer (``Ac`` or ``Bc``)."""

    data: np.ndarray = field(repr=False)
    panel_rows: int
    panel_cols: int
    micro: int

    @classmethod
    def for_a(cls, bp: BlockingParams, dtype=np.float32):
        return cls(alloc_scratch(bp.ac_elements, dtype, "Ac"), bp.mc, bp.kc, bp.mr)

    @classmethod
    def for_b(cls, bp: BlockingParams, dtype=np.float32):
        return cls(alloc_scratch(bp.bc_elements, dtype, "Bc"), bp.kc, bp.nc, bp.nr)

    @property
    def capacity(self):
        return self.data.size


@njit(nogil=True, cache=True)
def pack_a_panels(abuf, a_base, lda, i_c, p_c, mc_eff, kc_eff, mr, out, lo, hi):
    for ip in range(lo, hi):
        rows = min(mr, mc_eff - ip * mr)
        dst = ip * mr * kc_eff
        src = a_base + i_c + ip * mr + p_c * lda
        for _ in range(kc_eff):
            for i in range(rows):
                out[dst + i] = abuf[src + i]
            for i in range(rows, mr):
                out[dst + i] = 0
            dst += mr
            src += lda


@njit(nogil=True, cache=True)
def pack_b_panels(bbuf, b_base, ldb, p_c, j_c, kc_eff, nc_eff, nr, out, lo, hi):
    # loop L1 over micro-panels, L2 over rows p_s, L3 over columns j_s
    for jp in range(lo, hi):
        j_r = jp * nr
        cols = min(nr, nc_eff - j_r)
        i = jp * nr * kc_eff
        row = b_base + p_c + (j_c + j_r) * ldb
        for _ in range(kc_eff):
            src = row
            for j_s in range(cols):
                out[i + j_s] = bbuf[src]
                src += ldb
            for j_s in range(cols, nr):
                out[i + j_s] = 0
            i += nr
            row += 1


class PackingSource(Protocol):
    """Logical right-hand operand ``B`` of ``C += A.B``, packable into ``Bc``.

    ``element`` is the slow reference accessor; ``pack_panels`` packs
    micro-panels ``[lo, hi)`` of the ``kc_eff x nc_eff`` block at
    ``(p_c, j_c)`` and must produce exactly what ``element`` implies.
    """

    rows: int
    cols: int
    dtype: np.dtype

    def element(self, r: int, c: int): ...

    def pack_panels(self, p_c, j_c, kc_eff, nc_eff, nr, out, lo, hi): ...


class MatrixSource:
    """A materialised column-major matrix as a packing source."""

    def __init__(self, B: MatrixView):
        self.B = B
        self.rows = B.m
        self.cols = B.n
        self.dtype = B.dtype

    def element(self, r, c):
        return self.B[r, c]

    def pack_panels(self, p_c, j_c, kc_eff, nc_eff, nr, out, lo, hi):
        pack_b_panels(self.B.buf, self.B.base, self.B.ld, p_c, j_c, kc_eff, nc_eff, nr, out, lo, hi)


def as_source(src) -> PackingSource:
    return MatrixSource(src) if isinstance(src, MatrixView) else src


def num_panels(extent, micro):
    return -(-extent // micro)


def pack_a(A: MatrixView, i_c, p_c, mc_eff, kc_eff, bp: BlockingParams, out: PackedPanel, team=None):
    if i_c + mc_eff > A.m or p_c + kc_eff > A.n:
        raise DimensionMismatch("A block out of bounds")
    npan = num_panels(mc_eff, bp.mr)
    if npan * bp.mr * kc_eff > out.capacity:
        raise DimensionMismatch("Ac buffer too small for block")
    job = lambda lo, hi: pack_a_panels(A.buf, A.base, A.ld, i_c, p_c, mc_eff, kc_eff, bp.mr, out.data, lo, hi)
    if team is None:
        job(0, npan)
    else:
        team.run(job, npan)


def pack_b(src, p_c, j_c, kc_eff, nc_eff, bp: BlockingParams, out: PackedPanel, team=None):
    src = as_source(src)
    if p_c + kc_eff > src.rows or j_c + nc_eff > src.cols:
        raise DimensionMismatch("B block out of bounds")
    npan = num_panels(nc_eff, bp.nr)
    if npan * bp.nr * kc_eff > out.capacity:
        raise DimensionMismatch("Bc buffer too small for block")
    job = lambda lo, hi: src.pack_panels(p_c, j_c, kc_eff, nc_eff, bp.nr, out.data, lo, hi)
    if team is None:
        job(0, npan)
    else:
        team.run(job, npan)


def unpack_a(out: PackedPanel, mc_eff, kc_eff, mr):
    """Inverse of :func:`pack_a` (testing aid): returns the ``mc_eff x kc_eff`` block."""
    npan = num_panels(mc_eff, mr)
    panels = out.data[: npan * mr * kc_eff].reshape(npan, kc_eff, mr)
    return panels.transpose(0, 2, 1).reshape(npan * mr, kc_eff)[:mc_eff]


def unpack_b(out: PackedPanel, kc_eff, nc_eff, nr):
    npan = num_panels(nc_eff, nr)
    panels = out.data[: npan * nr * kc_eff].reshape(npan, kc_eff, nr)
    return panels.transpose(1, 0, 2).reshape(kc_eff, npan * nr)[:, :nc_eff]
