"""Teacher forcing on the 50-episode micro dataset; prints one line per epoch.

    python scripts/micro_train.py [--epochs 200] [--batch-size 2] [--lr 1e-3] [--out micro.npz]
"""

from __future__ import annotations

import argparse

import numpy as np

from signnav.experiments import micro_data, micro_train_config, run_micro_tf
from signnav.training import smoothed


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--batch-size", type=int, default=2)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--target", type=float, default=0.9, help="stop at this accuracy (0 = run all epochs)")
    ap.add_argument("--out", help="checkpoint path")
    args = ap.parse_args()

    data = micro_data()
    print(f"{len(data.train)} training episodes, {sum(len(e.steps) for e in data.train)} steps", flush=True)
    cfg = micro_train_config(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, target_accuracy=args.target)
    run = run_micro_tf(
        data, cfg,
        log_fn=lambda r: print(f"epoch {r.epoch:3d} loss {r.loss:.4f} acc {r.accuracy:.4f} t {r.wall_time:.0f}s",
                               flush=True),
    )
    sm = smoothed([r.loss for r in run.records], 10)
    print(f"final accuracy {run.records[-1].accuracy:.4f} after {len(run.records)} epochs in {run.seconds:.0f} s; "
          f"smoothed-loss increases: {int((np.diff(sm) > 0).sum())}")
    if args.out:
        run.model.save(args.out)


if __name__ == "__main__":
    main()
