"""Scratch-buffer allocation with residency tracking.

Every workspace buffer in the package (GEMM packing buffers, the explicit
im2col matrix) goes through :func:`alloc_scratch`.  The tracker counts bytes
while the buffer is alive, so peak workspace can be asserted directly::

    with measure_scratch() as m:
        conv_gemm(F, I, cp)
    m.peak   # bytes
"""

from __future__ import annotations

import os
import threading
import weakref
from contextlib import contextmanager

import numpy as np

from .errors import AllocationFailure

ALIGNMENT = 64

_lock = threading.Lock()
_current = 0
_meters = []
_limit = None


class ScratchMeter:
    def __init__(self, baseline):
        self.baseline = baseline
        self.peak = 0
        self.allocations = []

    def _observe(self, current, nbytes, label):
        self.peak = max(self.peak, current - self.baseline)
        self.allocations.append((label, nbytes))


def current_scratch_bytes():
    return _current


@contextmanager
def measure_scratch():
    """Record the peak scratch bytes resident (above entry level) inside the block."""
    with _lock:
        meter = ScratchMeter(_current)
        _meters.append(meter)
    try:
        yield meter
    finally:
        with _lock:
            _meters.remove(meter)


def set_memory_limit(nbytes):
    """Cap any single workspace allocation; ``None`` falls back to free RAM."""
    global _limit
    _limit = None if nbytes is None else int(nbytes)


def memory_limit():
    if _limit is not None:
        return _limit
    env = os.environ.get("CONVGEMM_MEMORY_LIMIT")
    if env:
        return int(float(env))
    try:
        return os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return None


def _release(nbytes):
    global _current
    with _lock:
        _current -= nbytes


def alloc_scratch(nelems, dtype=np.float32, label="scratch"):
    """64-byte aligned, uninitialised 1-D buffer counted by the tracker."""
    global _current
    dtype = np.dtype(dtype)
    nbytes = int(nelems) * dtype.itemsize
    limit = memory_limit()
    if limit is not None and nbytes > limit:
        raise AllocationFailure(nbytes, limit, label)
    try:
        raw = np.empty(nbytes + ALIGNMENT, dtype=np.uint8)
    except MemoryError as exc:
        raise AllocationFailure(nbytes, limit, label) from exc
    offset = (-raw.ctypes.data) % ALIGNMENT
    buf = raw[offset:offset + nbytes].view(dtype)
    weakref.finalize(raw, _release, nbytes)
    with _lock:
        _current += nbytes
        for meter in _meters:
            meter._observe(_current, nbytes, label)
    return buf
