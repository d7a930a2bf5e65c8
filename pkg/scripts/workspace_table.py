"""Layer counts and explicit im2col workspace (MiB per image) for the shipped models."""

from convgemm import conv_gemm_workspace_bytes
from convgemm.bench import load_model, model_workspace, shipped_models


def main():
    print(f"{'model':<10} {'fc':>3} {'conv':>5} {'pool':>5} {'total':>6} {'im2col MiB/b':>13}")
    for name in shipped_models():
        model = load_model(name)
        c = model.counts()
        mib = model_workspace(model, 1) / 2**20
        print(f"{name:<10} {c['fc']:>3} {c['conv']:>5} {c['pool']:>5} {len(model.layers):>6} {mib:>13.3f}")
    print(f"\nconvgemm packing buffers: {conv_gemm_workspace_bytes()} B "
          f"({conv_gemm_workspace_bytes() / 2**20:.2f} MiB), independent of b")


if __name__ == "__main__":
    main()
