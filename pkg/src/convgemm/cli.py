"""``convbench``: benchmark convolution back-ends over a CNN model.

Exit status: 0 on success, 2 when a workspace cannot be allocated, 1 on any
other error.
"""

import argparse
import logging
import os
import sys

from .bench import ALGOS, emit_csv, load_model, model_workspace, parse_batches, run_inference
from .errors import AllocationFailure
from .packing import DEFAULT_BLOCKING, BlockingParams
from .workspace import set_memory_limit

log = logging.getLogger("convbench")


def build_parser():
    p = argparse.ArgumentParser(prog="convbench", description=__doc__.splitlines()[0])
    p.add_argument("--model", required=True, help="model file, or a shipped name (alexnet, vgg16, resnet50, toy)")
    p.add_argument("--batch", default="1", help="batch size or range b0[:b1[:step]] (inclusive)")
    p.add_argument("--algo", default="convgemm", choices=ALGOS)
    p.add_argument("--threads", type=int, default=int(os.environ.get("CONVBENCH_THREADS", "1")),
                   help="worker threads (default: $CONVBENCH_THREADS or 1)")
    p.add_argument("--min-time", type=float, default=1.0, help="seconds of repetitions per layer measurement")
    p.add_argument("--out", default="-", help="CSV output path ('-' for stdout)")
    p.add_argument("--check", action="store_true", help="verify every layer against the direct convolution")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-warmup", dest="warmup", action="store_false")
    p.add_argument("--memory-limit", type=float, default=None,
                   help="refuse single workspace allocations above this many bytes")
    p.add_argument("-v", "--verbose", action="store_true")
    for name in ("mc", "nc", "kc", "mr", "nr"):
        p.add_argument(f"--{name}", type=int, default=getattr(DEFAULT_BLOCKING, name))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        bp = BlockingParams(args.mc, args.nc, args.kc, args.mr, args.nr)
        batches = parse_batches(args.batch)
        model = load_model(args.model)
        if args.threads < 1:
            raise ValueError("--threads must be >= 1")
        if args.memory_limit is not None:
            set_memory_limit(args.memory_limit)
        results = []
        for b in batches:
            if args.algo in ("im2col", "gemm-only", "im2col-only"):
                log.info("b=%d: im2col workspace %.2f MiB", b, model_workspace(model, b) / 2**20)
            results += run_inference(model, b, args.algo, bp, args.threads, args.min_time,
                                     check=args.check, seed=args.seed, warmup=args.warmup)
        if args.out == "-":
            emit_csv(results, sys.stdout)
        else:
            emit_csv(results, args.out)
    except AllocationFailure as exc:
        print(f"convbench: allocation failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        if args.verbose:
            log.exception("failed")
        print(f"convbench: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
