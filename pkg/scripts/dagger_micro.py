"""Teacher forcing then DAgger on the micro dataset; reports held-out SR before and after.

    python scripts/dagger_micro.py [--iterations 3] [--beta0 0.75] [--rollouts 10] [--epochs 1]
"""

from __future__ import annotations

import argparse

from signnav.experiments import eval_model, micro_data, micro_train_config, run_dagger, run_micro_tf


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=3)
    ap.add_argument("--beta0", type=float, default=0.75)
    ap.add_argument("--rollouts", type=int, default=10, help="DAgger rollouts per iteration")
    ap.add_argument("--epochs", type=int, default=1, help="epochs over the aggregate per iteration")
    ap.add_argument("--max-steps", type=int, default=150)
    args = ap.parse_args()

    data = micro_data()
    tf = run_micro_tf(data)
    print(f"teacher forcing: accuracy {tf.records[-1].accuracy:.4f} after {len(tf.records)} epochs", flush=True)
    cfg = micro_train_config(beta0=args.beta0, dagger_iterations=args.iterations, dagger_epochs=args.epochs,
                             dagger_episodes=args.rollouts)
    run = run_dagger(tf.model, data, cfg, cache=tf.cache)
    for st, size in zip(run.stats, run.sizes[1:]):
        print(f"iteration {st.iteration}: beta {st.beta:.4f} expert fraction {st.expert_fraction:.3f} "
              f"agreement {st.agreement:.3f} aggregate {size}")
    before = eval_model(tf.model, data.val, data.scenes, args.max_steps).aggregates
    after = eval_model(run.model, data.val, data.scenes, args.max_steps).aggregates
    for name, a in (("before", before), ("after", after)):
        print(f"{name:6s} SR {a['SR']:.2f} NDTW {a['NDTW']:.4f} SDTW {a['SDTW']:.4f} RMSE {a['RMSE']:.4f}")


if __name__ == "__main__":
    main()
