"""Oracle policy over a freshly generated dataset: the upper bound for every metric.

    python scripts/oracle_eval.py [--scenes 3] [--episodes 200] [--extent 20] [--seed 7]
"""

from __future__ import annotations

import argparse
import time

from signnav.episodes import generate_splits
from signnav.experiments import eval_oracle, make_scenes


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenes", type=int, default=3)
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--extent", type=float, default=20.0)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    t0 = time.perf_counter()
    scenes = make_scenes(args.scenes, args.extent, seed_base=100)
    eps = generate_splits(scenes, {"train": args.episodes}, args.seed)["train"]
    t1 = time.perf_counter()
    rep = eval_oracle(eps, {s.scene_id: s for s in scenes})
    a = rep.aggregates
    print(f"generated {len(eps)} episodes in {t1 - t0:.1f} s, evaluated in {time.perf_counter() - t1:.1f} s")
    print(f"SR {a['SR']:.3f}  NDTW {a['NDTW']:.4f}  SDTW {a['SDTW']:.4f}  RMSE {a['RMSE']:.4f} m  steps {a['steps']:.1f}")
    print(f"worst NDTW {min(e.ndtw for e in rep.episodes):.4f}, worst RMSE {max(e.rmse for e in rep.episodes):.4f} m")


if __name__ == "__main__":
    main()
