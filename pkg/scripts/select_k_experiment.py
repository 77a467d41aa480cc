#!/usr/bin/env python3
"""Topic-count selection experiment: simulate corpora with a known number of
topics, run restarted text-only fits over a K grid, and count how often the
selection criterion picks the true value.

    python3 scripts/select_k_experiment.py --true-k 4 --kmin 2 --kmax 8
"""

import argparse
from dataclasses import replace

import numpy as np

from topicblocks.config import ModelConfig
from topicblocks.diagnostics import select_topic_count
from topicblocks.genmodel import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--true-k", type=int, default=4)
    ap.add_argument("--kmin", type=int, default=2)
    ap.add_argument("--kmax", type=int, default=8)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--restarts", type=int, default=3)
    ap.add_argument("--iters", type=int, default=120)
    ap.add_argument("--ell", type=int, default=30,
                    help="topic window length for simulation and fits")
    ap.add_argument("--rho", type=float, default=1.5,
                    help="pinned per-day post rate (keeps the fits tractable)")
    args = ap.parse_args()

    cfg = replace(ModelConfig(), K=args.true_k, ell=args.ell, lambda_D=12.0,
                  iters=args.iters, burn_in=args.iters // 3, thin=5,
                  sweeps=3)
    hits = 0
    for seed in range(args.seeds):
        sim = simulate(cfg, 30, 60, 60, eta=0.05, seed=1000 + seed,
                       rho=np.full(30, args.rho))
        values, best, _ = select_topic_count(
            sim.corpus, None, replace(cfg, seed=seed),
            args.kmin, args.kmax, restarts=args.restarts)
        hits += best == args.true_k
        grid = "  ".join(f"K={k}:{v:.4f}" for k, v in sorted(values.items()))
        print(f"seed {seed}: chose K={best}  ({grid})")
    print(f"chose true K={args.true_k} in {hits}/{args.seeds} corpora")


if __name__ == "__main__":
    main()
