"""Portable register-tile micro-kernel and the macro-kernel loops around it.

The generic kernel is generated as Python source for a fixed ``mr x nr`` so
that the accumulator tile is ``mr*nr`` scalar locals; LLVM keeps them in
registers and vectorises the rank-1 updates.  Generated modules are written
to a cache directory and compiled with ``cache=True``, so each shape is
compiled once per machine.

A kernel is any nogil numba function with the signature::

    microkernel(kc, ar, a_off, br, b_off, c, c_off, ldc, m_valid, n_valid)

which adds ``Ar @ Br`` (``Ar`` an ``mr x kc`` column-major micro-panel at
``ar[a_off:]``, ``Br`` a ``kc x nr`` row-major micro-panel at ``br[b_off:]``)
into the top-left ``m_valid x n_valid`` corner of the column-major tile at
``c[c_off:]``.  Use :func:`register_microkernel` to plug in a faster one.
"""

from __future__ import annotations

import hashlib
import importlib.util
import os
import sys
import tempfile
import threading
from pathlib import Path

from numba import njit

_KERNEL_VERSION = 3
_lock = threading.Lock()
_kernels = {}


def generate_source(mr, nr):
    acc = [[f"c{i}_{j}" for j in range(nr)] for i in range(mr)]
    out = [
        f"# generated micro-kernel, mr={mr} nr={nr} (format {_KERNEL_VERSION})",
        "import numpy as np",
        "from numba import njit",
        "",
        "ZERO = np.float32(0.0)",
        f"MR = {mr}",
        f"NR = {nr}",
        "",
        "",
        "@njit(nogil=True, fastmath=True, cache=True)",
        "def microkernel(kc, ar, a_off, br, b_off, c, c_off, ldc, m_valid, n_valid):",
    ]
    for i in range(mr):
        out.append("    " + " = ".join(acc[i]) + " = ZERO")
    out += [
        "    pa = a_off",
        "    pb = b_off",
        "    for _ in range(kc):",
    ]
    for i in range(mr):
        out.append(f"        a{i} = ar[pa + {i}]")
    for j in range(nr):
        out.append(f"        b = br[pb + {j}]")
        for i in range(mr):
            out.append(f"        {acc[i][j]} += a{i} * b")
    out += [
        f"        pa += {mr}",
        f"        pb += {nr}",
        f"    if m_valid == {mr} and n_valid == {nr}:",
    ]
    for j in range(nr):
        for i in range(mr):
            out.append(f"        c[c_off + {i}] += {acc[i][j]}")
        if j < nr - 1:
            out.append("        c_off += ldc")
    out.append("        return")
    # edge tile: clipped write-out of the same accumulators
    for j in range(nr):
        out.append(f"    if n_valid > {j}:")
        for i in range(mr):
            out.append(f"        if m_valid > {i}:")
            out.append(f"            c[c_off + {i}] += {acc[i][j]}")
        out.append("        c_off += ldc")
    out += [
        "",
        "",
        "@njit(nogil=True, cache=True)",
        "def macro_kernel(kc, ac, bc, c, c_off, ldc, mc_eff, nc_eff, jp_lo, jp_hi):",
        "    a_stride = MR * kc",
        "    b_stride = NR * kc",
        "    for jp in range(jp_lo, jp_hi):",
        "        jr = jp * NR",
        "        nv = min(NR, nc_eff - jr)",
        "        ip = 0",
        "        for ir in range(0, mc_eff, MR):",
        "            mv = min(MR, mc_eff - ir)",
        "            microkernel(kc, ac, ip * a_stride, bc, jp * b_stride,",
        "                        c, c_off + ir + jr * ldc, ldc, mv, nv)",
        "            ip += 1",
        "",
    ]
    return "\n".join(out)


def _make_macro_kernel(mk, mr, nr):
    @njit(nogil=True)
    def macro_kernel(kc, ac, bc, c, c_off, ldc, mc_eff, nc_eff, jp_lo, jp_hi):
        a_stride = mr * kc
        b_stride = nr * kc
        for jp in range(jp_lo, jp_hi):
            jr = jp * nr
            nv = min(nr, nc_eff - jr)
            ip = 0
            for ir in range(0, mc_eff, mr):
                mv = min(mr, mc_eff - ir)
                mk(kc, ac, ip * a_stride, bc, jp * b_stride, c, c_off + ir + jr * ldc, ldc, mv, nv)
                ip += 1

    return macro_kernel


def kernel_dir():
    root = os.environ.get("CONVGEMM_KERNEL_DIR")
    if root:
        path = Path(root)
    else:
        path = Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "convgemm" / "kernels"
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".probe"
        probe.touch()
        probe.unlink()
    except OSError:
        path = Path(tempfile.gettempdir()) / "convgemm-kernels"
        path.mkdir(parents=True, exist_ok=True)
    return path


def _load_generated(mr, nr):
    src = generate_source(mr, nr)
    digest = hashlib.sha1(src.encode()).hexdigest()[:10]
    name = f"ukr_{mr}x{nr}_{digest}"
    path = kernel_dir() / f"{name}.py"
    if not path.exists() or path.read_text() != src:
        tmp = path.with_suffix(f".{os.getpid()}.tmp")
        tmp.write_text(src)
        os.replace(tmp, path)
    modname = f"convgemm._generated.{name}"
    spec = importlib.util.spec_from_file_location(modname, path)
    mod = importlib.util.module_from_spec(spec)
    sys.modules[modname] = mod
    spec.loader.exec_module(mod)
    return mod.microkernel, mod.macro_kernel


def get_kernels(mr, nr):
    """``(microkernel, macro_kernel)`` for an ``mr x nr`` register tile."""
    key = (int(mr), int(nr))
    with _lock:
        if key not in _kernels:
            _kernels[key] = _load_generated(*key)
        return _kernels[key]


def register_microkernel(mr, nr, microkernel):
    """Install a custom micro-kernel for ``mr x nr`` tiles (replaces the generic one)."""
    with _lock:
        _kernels[(int(mr), int(nr))] = (microkernel, _make_macro_kernel(microkernel, mr, nr))


def unregister_microkernel(mr, nr):
    with _lock:
        _kernels.pop((int(mr), int(nr)), None)
