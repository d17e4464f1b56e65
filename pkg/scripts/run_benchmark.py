"""Run the synthetic distillation benchmark and print per-seed and mean metrics."""
import argparse
import os
import time

import torch

from earkd.benchmark import run_benchmark


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--threads", type=int, default=min(4, os.cpu_count() or 2))
    args = parser.parse_args()
    torch.set_num_threads(args.threads)

    t0 = time.time()
    result = run_benchmark(seeds=tuple(args.seeds))
    for o in result.outcomes:
        line = f"seed {o.seed}: "
        for s in result.strategies:
            line += f"{s}={o.pooled_accuracy(s):.4f}/{o.pooled_kappa(s):.3f} "
        line += (f"| feat kd {o.feature_distance_kd:.2f} "
                 f"sup {o.feature_distance_supervised:.2f}")
        print(line, flush=True)
    print("--- means ---", flush=True)
    for s in result.strategies:
        print(f"{s:18s} acc {result.mean_accuracy(s):.4f} "
              f"kappa {result.mean_kappa(s):.4f}", flush=True)
    ear_a = result.mean_accuracy("supervised-ear")
    ear_k = result.mean_kappa("supervised-ear")
    for s in ("kd-offline", "kd-online"):
        print(f"{s}: {(result.mean_accuracy(s) - ear_a) * 100:+.2f} acc pts, "
              f"{result.mean_kappa(s) - ear_k:+.4f} kappa", flush=True)
    print(f"total wall {time.time() - t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
