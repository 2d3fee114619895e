"""Two-moons desk run over several seeds.

Prints per-seed metrics and the 95th percentile, and writes them to
``benchmarks/baselines.json`` (the committed regression baselines).

    python3 benchmarks/desk_baseline.py [--seeds 5] [--out benchmarks/baselines.json]
"""

import argparse
import json
import os

import numpy as np

from dbae.io.config import RunConfig
from dbae.pipeline import desk_run

KEYS = ("recon_mse", "sliced_wasserstein", "sliced_wasserstein_ae")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "baselines.json"))
    args = p.parse_args()
    per_seed = []
    for seed in range(args.seeds):
        m = desk_run(RunConfig(seed=seed))
        row = {"seed": seed, **{k: float(m[k]) for k in KEYS}, "seconds": round(m["seconds"], 1)}
        per_seed.append(row)
        print(f"seed {seed}: recon_mse {row['recon_mse']:.3e}  sw {row['sliced_wasserstein']:.4f}  "
              f"sw(+AE) {row['sliced_wasserstein_ae']:.4f}  ({row['seconds']:.0f} s)", flush=True)
    p95 = {k: float(np.percentile([r[k] for r in per_seed], 95)) for k in KEYS}
    print("p95: " + "  ".join(f"{k} {v:.4g}" for k, v in p95.items()))
    with open(args.out, "w") as fh:
        json.dump({"config": "defaults (two_moons, n=4096, l=2, 5000 steps)", "per_seed": per_seed,
                   "p95": p95}, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
