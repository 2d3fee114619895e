"""Time the compiled and numpy kernel backends on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best-of-``repeat`` wall time per call for both backends,
the speedup, and the largest absolute difference between their outputs.
"""

import argparse
import timeit

import numpy as np

from dbae import kernels


def cases(rng):
    x32 = rng.standard_normal(1 << 18).astype(np.float32)
    x64 = rng.standard_normal(1 << 18)
    steps, n = 1000, 10_000
    sde = dict(x=rng.standard_normal(n), y=rng.standard_normal(n),
               drift_x=-1e-3 * rng.random(steps), drift_y=1e-3 * rng.random(steps),
               vol=3e-2 * rng.random(steps), noise=rng.standard_normal((steps, n)),
               record=[0, 250, 500, 750, 1000])
    z, mu = rng.standard_normal((2, 256, 8))
    ls = rng.uniform(-1, 0.5, (256, 8))
    sig64 = kernels.silu(x64)[1]
    return {
        "silu f32 (262k)": lambda impl: kernels.silu(x32, impl)[0],
        "silu f64 (262k)": lambda impl: kernels.silu(x64, impl)[0],
        "silu_grad f64 (262k)": lambda impl: kernels.silu_grad(x64, x64, sig64, impl),
        "affine_sde_paths (1000 x 10k)": lambda impl: kernels.affine_sde_paths(impl=impl, **sde),
        "pairwise_gauss_logpdf (256^2 x 8)": lambda impl: kernels.pairwise_gauss_logpdf(z, mu, ls, impl),
    }


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled backend not built; only the numpy fallback is available")
    print(f"active backend: {kernels.BACKEND}")
    header = f"{'kernel':36s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max |diff|':>11s}"
    print(header)
    print("-" * len(header))
    for name, fn in cases(np.random.default_rng(0)).items():
        times, outs = {}, {}
        for key, impl in impls.items():
            outs[key] = fn(impl)
            times[key] = min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
        py = times["python"] * 1e3
        if "cython" in times:
            cy = times["cython"] * 1e3
            diff = float(np.max(np.abs(outs["python"] - outs["cython"])))
            print(f"{name:36s} {py:10.2f} {cy:10.2f} {py / cy:7.1f}x {diff:11.2e}")
        else:
            print(f"{name:36s} {py:10.2f} {'-':>10s}")


if __name__ == "__main__":
    main()
