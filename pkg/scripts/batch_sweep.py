"""Time every algorithm over a batch range and write one CSV.

    python3 scripts/batch_sweep.py --model alexnet --batch 1:16:5 --threads 4 --out sweep.csv
"""

import argparse
import logging
import sys

from convgemm import AllocationFailure
from convgemm.bench import ALGOS, emit_csv, load_model, parse_batches, run_inference

log = logging.getLogger("batch_sweep")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--model", default="alexnet")
    p.add_argument("--batch", default="1:8:7")
    p.add_argument("--algos", default="convgemm,im2col,gemm-only,im2col-only")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--min-time", type=float, default=0.5)
    p.add_argument("--out", default="sweep.csv")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    algos = args.algos.split(",")
    unknown = set(algos) - set(ALGOS)
    if unknown:
        p.error(f"unknown algos {sorted(unknown)}")
    model = load_model(args.model)
    results = []
    for b in parse_batches(args.batch):
        for algo in algos:
            try:
                rows = run_inference(model, b, algo, threads=args.threads, min_time=args.min_time)
            except AllocationFailure as exc:
                # the explicit transform running out of memory is a result, not a crash
                log.warning("b=%d %s: %s", b, algo, exc)
                continue
            conv = [r for r in rows if r.kind == "conv"]
            log.info("b=%-3d %-12s conv time %.4f s", b, algo, sum(r.time_s for r in conv))
            results += rows
    emit_csv(results, args.out)
    log.info("wrote %s", args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
