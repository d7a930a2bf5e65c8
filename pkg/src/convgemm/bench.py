"""CNN inference simulator: run a model's layers back to back and time them.

Model files are plain text, one layer per line::

    conv k_n k_h k_w c_i h_i w_i s p
    pool h_o w_o c          # shape metadata only, no compute
    fc   m k                # dense layer, run as an (m x k) . (k x b) gemm
    # comment

Activations live in two ping-pong buffers sized for the largest layer; the
output of one layer becomes the input of the next by swapping them.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .conv import conv_direct, conv_im2col_gemm, im2col, im2col_workspace_bytes
from .errors import ConvGemmError, InvalidGeometry, ParseError, UnknownLayerKind
from .fused import conv_gemm
from .gemm import gemm, zero_matrix
from .oracle import conv_error, gemm_error
from .packing import DEFAULT_BLOCKING, BlockingParams
from .tensor import ConvParams, GemmDims, MatrixView, Tensor4, filters_as_matrix, gemm_dims, output_as_matrix
from .workspace import measure_scratch

log = logging.getLogger(__name__)

ALGOS = ("direct", "im2col", "convgemm", "gemm-only", "im2col-only")
CSV_HEADER = ["model", "batch", "algo", "threads", "layer", "m", "n", "k", "time_s", "gflops", "workspace_bytes"]
CHECK_TOL = 1e-5


class CheckFailed(ConvGemmError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    conv: ConvParams | None = None      # batch is a placeholder (1)
    fc: tuple[int, int] | None = None   # (m, k)
    pool: tuple[int, int, int] | None = None
    line: int | None = None

    def conv_params(self, b):
        return self.conv.with_batch(b)

    def gemm_dims(self, b):
        if self.kind == "conv":
            return gemm_dims(self.conv_params(b))
        if self.kind == "fc":
            m, k = self.fc
            return GemmDims(m, b, k)
        return None

    def activation_sizes(self, b):
        """(input elements, output elements) for batch ``b``."""
        if self.kind == "conv":
            cp = self.conv_params(b)
            k_n, h_o, w_o, _ = cp.output_shape
            return cp.h_i * cp.w_i * cp.c_i * b, k_n * h_o * w_o * b
        if self.kind == "fc":
            m, k = self.fc
            return k * b, m * b
        return 0, 0


@dataclass
class ModelSpec:
    name: str
    layers: list[LayerSpec]

    @property
    def conv_layers(self):
        return [layer for layer in self.layers if layer.kind == "conv"]

    def counts(self):
        out = {"conv": 0, "fc": 0, "pool": 0}
        for layer in self.layers:
            out[layer.kind] += 1
        return out


@dataclass
class LayerResult:
    layer: int
    kind: str
    m: int
    n: int
    k: int
    time_s: float
    workspace_bytes: int
    reps: int = 1
    model: str = ""
    batch: int = 1
    algo: str = ""
    threads: int = 1
    check_error: float | None = None
    output: np.ndarray | None = field(default=None, repr=False)

    @property
    def flops(self):
        return 2 * self.m * self.n * self.k

    @property
    def gflops(self):
        return self.flops / self.time_s / 1e9


_ARITY = {"conv": 8, "fc": 2, "pool": 3}


def parse_model_text(text, name="model", path=None) -> ModelSpec:
    layers = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *fields = line.split()
        kind = kind.lower()
        if kind not in _ARITY:
            raise UnknownLayerKind(f"unknown layer kind {kind!r}", lineno, path)
        if len(fields) != _ARITY[kind]:
            raise ParseError(f"{kind} takes {_ARITY[kind]} integers, got {len(fields)}", lineno, path)
        try:
            vals = [int(v) for v in fields]
        except ValueError:
            raise ParseError(f"non-integer field in {line!r}", lineno, path) from None
        try:
            if kind == "conv":
                k_n, k_h, k_w, c_i, h_i, w_i, s, p = vals
                cp = ConvParams(k_n, k_h, k_w, c_i, h_i, w_i, 1, s, p)
                cp.output_shape
                layers.append(LayerSpec("conv", conv=cp, line=lineno))
            elif kind == "fc":
                if min(vals) < 1:
                    raise InvalidGeometry("fc extents must be positive")
                layers.append(LayerSpec("fc", fc=tuple(vals), line=lineno))
            else:
                if min(vals) < 1:
                    raise InvalidGeometry("pool extents must be positive")
                layers.append(LayerSpec("pool", pool=tuple(vals), line=lineno))
        except InvalidGeometry as exc:
            raise ParseError(str(exc), lineno, path) from None
    if not layers:
        raise ParseError("model file has no layers", None, path)
    model = ModelSpec(name, layers)
    if not model.conv_layers:
        raise ParseError("model has no conv layers", None, path)
    return model


def parse_model(path) -> ModelSpec:
    path = Path(path)
    return parse_model_text(path.read_text(), name=path.stem, path=str(path))


def shipped_models():
    return sorted(p.name[:-6] for p in resources.files("convgemm.models").iterdir()
                  if p.name.endswith(".model"))


def load_model(name_or_path) -> ModelSpec:
    """Parse a model file; a bare name like ``alexnet`` picks a shipped config."""
    path = Path(name_or_path)
    if path.exists():
        return parse_model(path)
    shipped = resources.files("convgemm.models") / f"{name_or_path}.model"
    if shipped.is_file():
        return parse_model_text(shipped.read_text(), name=str(name_or_path), path=str(name_or_path))
    raise FileNotFoundError(f"no model file {name_or_path!r} (shipped: {', '.join(shipped_models())})")


def model_workspace(model: ModelSpec, b, dtype=np.float32) -> int:
    """Largest explicit im2col matrix over the model's conv layers, in bytes."""
    return max(im2col_workspace_bytes(layer.conv_params(b), dtype) for layer in model.conv_layers)


def time_call(fn, min_time, warmup=True):
    """Repeat ``fn`` until ``min_time`` seconds have elapsed; returns (seconds per call, reps)."""
    if warmup:
        fn()
    reps = 0
    start = time.perf_counter()
    while True:
        fn()
        reps += 1
        elapsed = time.perf_counter() - start
        if elapsed >= min_time:
            return elapsed / reps, reps


def _conv_runner(algo, F, I, O, cp, bp, threads):
    if algo == "direct":
        return lambda: conv_direct(F, I, cp, out=O)
    if algo == "im2col":
        return lambda: conv_im2col_gemm(F, I, cp, bp, threads, out=O)
    if algo == "convgemm":
        return lambda: conv_gemm(F, I, cp, bp, threads, out=O)
    if algo == "im2col-only":
        return lambda: im2col(I, cp, threads)
    if algo == "gemm-only":
        B = im2col(I, cp, threads)
        A = filters_as_matrix(F)
        C = output_as_matrix(O)
        dims = gemm_dims(cp)

        def run():
            zero_matrix(C)
            gemm(A, B, C, dims, bp, threads)

        return run
    raise ValueError(f"unknown algo {algo!r}; choose from {ALGOS}")


def run_inference(model: ModelSpec, b, algo="convgemm", bp: BlockingParams = DEFAULT_BLOCKING,
                  threads=1, min_time=1.0, check=False, seed=0, warmup=True, keep_outputs=False):
    """Simulate one inference pass at batch ``b``; returns one LayerResult per conv/fc layer."""
    if algo not in ALGOS:
        raise ValueError(f"unknown algo {algo!r}; choose from {ALGOS}")
    rng = np.random.default_rng(seed)
    act = max(max(layer.activation_sizes(b)) for layer in model.layers)
    x = rng.uniform(-1.0, 1.0, act).astype(np.float32)
    y = np.zeros(act, np.float32)
    results = []

    for index, layer in enumerate(model.layers, start=1):
        if layer.kind == "pool":
            continue
        if layer.kind == "fc" and algo == "im2col-only":
            continue
        dims = layer.gemm_dims(b)
        n_in, n_out = layer.activation_sizes(b)
        err = None
        run = None  # drop the previous layer's workspace before measuring this one
        with measure_scratch() as meter:
            if layer.kind == "conv":
                cp = layer.conv_params(b)
                F = Tensor4.random(cp.filter_shape, rng)
                I = Tensor4(cp.input_shape, x[:n_in])
                O = Tensor4(cp.output_shape, y[:n_out])
                run = _conv_runner(algo, F, I, O, cp, bp, threads)
                t, reps = time_call(run, min_time, warmup)
                if check and algo != "im2col-only":
                    err = conv_error(O, F, I, cp)
            else:
                m, k = layer.fc
                A = MatrixView(rng.uniform(-1.0, 1.0, m * k).astype(np.float32), m, k, m)
                B = MatrixView(x, k, b, k)
                C = MatrixView(y, m, b, m)

                def run():
                    zero_matrix(C)
                    gemm(A, B, C, dims, bp, threads)

                t, reps = time_call(run, min_time, warmup)
                if check:
                    err = gemm_error(A.array, B.array, C.array)
        res = LayerResult(index, layer.kind, dims.m, dims.n, dims.k, t, meter.peak, reps,
                          model.name, b, algo, threads, err)
        if keep_outputs:
            res.output = y[:n_out].copy()
        log.info("layer %d %s %dx%dx%d: %.4g s (%d reps), %.2f GFLOPS, %d B workspace",
                 index, layer.kind, dims.m, dims.n, dims.k, t, reps, res.gflops, meter.peak)
        if err is not None and not err <= CHECK_TOL:
            raise CheckFailed(f"layer {index}: {algo} differs from direct convolution (rel err {err:.3g})")
        results.append(res)
        if algo != "im2col-only":
            x, y = y, x
    return results


def total_row(results):
    t = sum(r.time_s for r in results)
    flops = sum(r.flops for r in results)
    return {"time_s": t, "gflops": flops / t / 1e9 if t > 0 else 0.0,
            "workspace_bytes": max((r.workspace_bytes for r in results), default=0)}


def emit_csv(results, path):
    """Write per-layer rows plus a ``total`` row for each (model, batch, algo, threads) run."""
    groups = {}
    for r in results:
        groups.setdefault((r.model, r.batch, r.algo, r.threads), []).append(r)
    close = False
    if hasattr(path, "write"):
        fh = path
    else:
        fh = open(path, "w", newline="")
        close = True
    try:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for (model, batch, algo, threads), rows in groups.items():
            for r in rows:
                w.writerow([model, batch, algo, threads, r.layer, r.m, r.n, r.k,
                            f"{r.time_s:.9g}", f"{r.gflops:.9g}", r.workspace_bytes])
            tot = total_row(rows)
            w.writerow([model, batch, algo, threads, "total", "", "", "",
                        f"{tot['time_s']:.9g}", f"{tot['gflops']:.9g}", tot["workspace_bytes"]])
    finally:
        if close:
            fh.close()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def parse_batches(spec):
    """``"8"`` -> [8]; ``"1:16"`` -> 1..16; ``"8:32:8"`` -> [8, 16, 24, 32]."""
    parts = [int(p) for p in str(spec).split(":")]
    if not 1 <= len(parts) <= 3 or any(p < 1 for p in parts):
        raise ValueError(f"bad batch range {spec!r}; use b0[:b1[:step]] with positive ints")
    b0 = parts[0]
    b1 = parts[1] if len(parts) > 1 else b0
    step = parts[2] if len(parts) > 2 else 1
    if b1 < b0:
        raise ValueError(f"bad batch range {spec!r}: end before start")
    return list(range(b0, b1 + 1, step))

