"""Benchmark the compiled convolution kernels against the numpy fallback.

Times the three 3x3 kernels across sizes, then a whole-model forward pass
under each backend. Run from the repository root:

    python benchmarks/bench_conv.py [--repeats 30]
"""

import argparse
import time

import numpy as np

from tubeseg.autodiff import kernels
from tubeseg.data import generate_synthetic_sequence
from tubeseg.model import ModelConfig, init_params, predict_tubes


def time_fn(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(repeats):
    cases = [
        (3, 16, 16, 16),
        (16, 16, 16, 16),
        (32, 32, 32, 32),
        (16, 64, 64, 16),
    ]
    print(f"{'case (Cin,H,W,Cout)':>24} {'kernel':>12} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for c_in, h, w, c_out in cases:
        x = rng.normal(size=(c_in, h, w))
        k = rng.normal(size=(c_out, c_in, 3, 3))
        dout = rng.normal(size=(c_out, h, w))
        for name, args in (
            ("forward", (x, k)),
            ("grad_input", (k, dout)),
            ("grad_kernel", (x, dout)),
        ):
            timings = {}
            for backend in kernels.available_backends():
                kernels.use_backend(backend)
                fn = getattr(kernels, f"conv3x3_{name}")
                timings[backend] = time_fn(lambda: fn(*args), repeats)
            case = f"({c_in},{h},{w},{c_out})"
            numpy_t = timings["numpy"]
            compiled_t = timings.get("compiled")
            if compiled_t is None:
                print(f"{case:>24} {name:>12} {numpy_t * 1e6:>9.1f}u {'n/a':>10}")
            else:
                print(
                    f"{case:>24} {name:>12} {numpy_t * 1e6:>9.1f}u "
                    f"{compiled_t * 1e6:>9.1f}u {numpy_t / compiled_t:>7.2f}x"
                )


def bench_model_forward(repeats):
    seq = generate_synthetic_sequence(
        seed=0, num_frames=2, height=16, width=16, num_things=2, num_stuff=1,
        with_depth=False,
    )
    clip, _ = seq.clips[0]
    cfg = ModelConfig.toy(num_classes=3, stuff_count=1)
    params = init_params(cfg)
    print(f"\n{'model forward (2x16x16, C=16)':>36}", end="")
    results = {}
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        results[backend] = time_fn(lambda: predict_tubes(params, cfg, clip), max(3, repeats // 5))
    for backend, t in sorted(results.items()):
        print(f"  {backend}: {t * 1e3:.2f}ms", end="")
    if "compiled" in results:
        print(f"  ({results['numpy'] / results['compiled']:.2f}x)")
    else:
        print()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()
    print(f"available backends: {kernels.available_backends()}")
    initial = kernels.active_backend()
    try:
        bench_kernels(args.repeats)
        bench_model_forward(args.repeats)
    finally:
        kernels.use_backend(initial)


if __name__ == "__main__":
    main()
