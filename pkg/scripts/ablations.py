"""Train every architecture ablation briefly on the micro dataset and evaluate it.

    python scripts/ablations.py [--epochs 1] [--episodes 50] [--max-steps 150]
"""

from __future__ import annotations

import argparse

from signnav.experiments import ABLATIONS, micro_data, run_ablation
from signnav.training import ObservationCache


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=1)
    ap.add_argument("--episodes", type=int, default=50)
    ap.add_argument("--max-steps", type=int, default=150)
    args = ap.parse_args()

    data = micro_data(n_train=args.episodes)
    cache = ObservationCache(data.scenes)
    print(f"{'variant':14s} {'loss':>7s} {'acc':>6s} {'SR':>5s} {'NDTW':>7s} {'SDTW':>7s} {'RMSE':>7s}")
    for name in ABLATIONS:
        recs, rep = run_ablation(name, data, epochs=args.epochs, max_steps=args.max_steps, cache=cache)
        a = rep.aggregates
        print(f"{name:14s} {recs[-1].loss:7.4f} {recs[-1].accuracy:6.3f} {a['SR']:5.2f} {a['NDTW']:7.4f} "
              f"{a['SDTW']:7.4f} {a['RMSE']:7.4f}", flush=True)


if __name__ == "__main__":
    main()
