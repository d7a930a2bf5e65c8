"""Five-loop blocked GEMM, ``C += A.B``.

Loop nest (outermost first)::

    L1  jc over n in steps of nc      pack B(pc:pc+kc, jc:jc+nc) -> Bc
    L2  pc over k in steps of kc
    L3  ic over m in steps of mc      pack A(ic:ic+mc, pc:pc+kc) -> Ac
    L4  jr over nc in steps of nr     (macro-kernel, split across the team)
    L5  ir over mc in steps of mr     micro-kernel on one mr x nr tile

``B`` is any :class:`~convgemm.packing.PackingSource`, which is how the fused
convolution reuses this engine unchanged.  Each C tile is written by exactly
one worker with a fixed k-order, so results do not depend on thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .errors import DimensionMismatch
from .microkernel import get_kernels
from .packing import (
    DEFAULT_BLOCKING,
    BlockingParams,
    PackedPanel,
    as_source,
    num_panels,
    pack_a,
    pack_b,
)
from .tensor import GemmDims, MatrixView


@lru_cache(maxsize=None)
def _executor(nworkers):
    return ThreadPoolExecutor(max_workers=nworkers, thread_name_prefix="convgemm")


class Team:
    """Static partition of a loop range over ``threads`` workers.

    ``run`` returns only when every chunk is done, which is the barrier
    between packing and compute phases.
    """

    def __init__(self, threads=1):
        self.threads = max(1, int(threads))

    def chunks(self, n):
        t = min(self.threads, n)
        return [(w * n // t, (w + 1) * n // t) for w in range(t)] if n else []

    def run(self, job, n):
        parts = self.chunks(n)
        if len(parts) <= 1:
            if parts:
                job(*parts[0])
            return
        pool = _executor(self.threads - 1)
        futures = [pool.submit(job, lo, hi) for lo, hi in parts[1:]]
        job(*parts[0])
        for f in futures:
            f.result()


def default_threads():
    return int(os.environ.get("CONVBENCH_THREADS", "1"))


@dataclass
class GemmStats:
    """Counters for the data-movement/flop balance of one gemm call."""

    b_packs: int = 0
    a_packs: int = 0
    b_elements: int = 0
    a_elements: int = 0
    flops: int = 0
    # per (jc, pc): (elements packed into Bc, flops executed under loop L3)
    b_blocks: list = field(default_factory=list)


@njit(nogil=True, cache=True)
def _zero(buf, base, ld, m, n):
    for j in range(n):
        off = base + j * ld
        for i in range(m):
            buf[off + i] = 0


def zero_matrix(C: MatrixView):
    _zero(C.buf, C.base, C.ld, C.m, C.n)


def _operand_dims(A, src, C, dims):
    if dims is None:
        dims = GemmDims(C.m, C.n, A.n)
    m, n, k = dims
    if (A.m, A.n) != (m, k):
        raise DimensionMismatch(f"A is {A.m}x{A.n}, expected {m}x{k}")
    if (src.rows, src.cols) != (k, n):
        raise DimensionMismatch(f"B is {src.rows}x{src.cols}, expected {k}x{n}")
    if (C.m, C.n) != (m, n):
        raise DimensionMismatch(f"C is {C.m}x{C.n}, expected {m}x{n}")
    if not (A.dtype == C.dtype == np.dtype(src.dtype)):
        raise DimensionMismatch(f"mixed element types {A.dtype}, {src.dtype}, {C.dtype}")
    return dims


def gemm(A: MatrixView, src, C: MatrixView, dims: GemmDims | None = None,
         bp: BlockingParams = DEFAULT_BLOCKING, threads=1, stats: GemmStats | None = None):
    """Accumulate ``A @ B`` into ``C``; ``src`` is a MatrixView or PackingSource."""
    src = as_source(src)
    m, n, k = _operand_dims(A, src, C, dims)
    if m == 0 or n == 0 or k == 0:
        return C
    _, macro_kernel = get_kernels(bp.mr, bp.nr)
    team = Team(threads)
    ac = PackedPanel.for_a(bp, C.dtype)
    bc = PackedPanel.for_b(bp, C.dtype)
    cbuf, ldc = C.buf, C.ld

    for jc in range(0, n, bp.nc):                                   # L1
        nc_eff = min(bp.nc, n - jc)
        npan_b = num_panels(nc_eff, bp.nr)
        for pc in range(0, k, bp.kc):                               # L2
            kc_eff = min(bp.kc, k - pc)
            pack_b(src, pc, jc, kc_eff, nc_eff, bp, bc, team)
            for ic in range(0, m, bp.mc):                           # L3
                mc_eff = min(bp.mc, m - ic)
                pack_a(A, ic, pc, mc_eff, kc_eff, bp, ac, team)
                c_off = C.base + ic + jc * ldc

                def macro(lo, hi, kc_eff=kc_eff, mc_eff=mc_eff, c_off=c_off, nc_eff=nc_eff):
                    macro_kernel(kc_eff, ac.data, bc.data, cbuf, c_off, ldc, mc_eff, nc_eff, lo, hi)

                team.run(macro, npan_b)                             # L4/L5
                if stats is not None:
                    stats.a_packs += 1
                    stats.a_elements += mc_eff * kc_eff
            if stats is not None:
                stats.b_packs += 1
                stats.b_elements += kc_eff * nc_eff
                stats.flops += 2 * m * nc_eff * kc_eff
                stats.b_blocks.append((kc_eff * nc_eff, 2 * m * nc_eff * kc_eff))
    return C


def microkernel(ar, br, ctile: MatrixView, kc, bp: BlockingParams = DEFAULT_BLOCKING):
    """Run the registered micro-kernel on one packed pair (``ctile`` may be an edge tile)."""
    if ctile.m > bp.mr or ctile.n > bp.nr:
        raise DimensionMismatch(f"tile {ctile.m}x{ctile.n} exceeds {bp.mr}x{bp.nr}")
    mk, _ = get_kernels(bp.mr, bp.nr)
    mk(kc, ar, 0, br, 0, ctile.buf, ctile.base, ctile.ld, ctile.m, ctile.n)
    return ctile
