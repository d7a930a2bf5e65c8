"""Per-layer convgemm vs gemm-only vs im2col-only, interleaved to damp timing drift.

Prints one line per conv layer plus totals; the fused routine hides the
transform when its time tracks gemm-only rather than gemm-only + im2col-only.
"""

import argparse

import numpy as np

from convgemm import BlockingParams, Tensor4
from convgemm.bench import _conv_runner, load_model, time_call

ALGOS = ("convgemm", "gemm-only", "im2col-only")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--model", default="alexnet")
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--min-time", type=float, default=0.5)
    args = p.parse_args(argv)

    model = load_model(args.model)
    rng = np.random.default_rng(0)
    totals = dict.fromkeys(ALGOS, 0.0)
    print(f"{'layer':>5} {'m':>5} {'n':>7} {'k':>5}  " + "  ".join(f"{a:>11}" for a in ALGOS) + "   ratio")
    for layer in model.conv_layers:
        cp = layer.conv_params(args.batch)
        F = Tensor4.random(cp.filter_shape, rng)
        I = Tensor4.random(cp.input_shape, rng)
        O = Tensor4.zeros(cp.output_shape)
        runners = {a: _conv_runner(a, F, I, O, cp, BlockingParams(), args.threads) for a in ALGOS}
        best = dict.fromkeys(ALGOS, float("inf"))
        for _ in range(args.rounds):
            for a in ALGOS:
                best[a] = min(best[a], time_call(runners[a], args.min_time)[0])
        for a in ALGOS:
            totals[a] += best[a]
        m, n, k = layer.gemm_dims(args.batch)
        print(f"{layer.line:>5} {m:>5} {n:>7} {k:>5}  " + "  ".join(f"{best[a]:>11.4f}" for a in ALGOS)
              + f"   {best['convgemm'] / best['gemm-only']:.3f}")
    print(f"{'total':>25}  " + "  ".join(f"{totals[a]:>11.4f}" for a in ALGOS)
          + f"   {totals['convgemm'] / totals['gemm-only']:.3f}")


if __name__ == "__main__":
    main()
