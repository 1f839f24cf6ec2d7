"""Train the frontier policy on the two-doorway cue scenes and report first-choice accuracy.

    python3 scripts/train_cue.py --steps 200000 --out cue.npz
"""

import argparse
import time

from fsenav.cueworld import cue_config
from fsenav.experiments import cue_accuracy, learned, train_cue
from fsenav.policy import save_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--eval", type=int, default=200, help="held-out scenes to score")
    ap.add_argument("--out", help="checkpoint path")
    args = ap.parse_args()

    cfg = cue_config()
    t0 = time.time()

    def progress(update, params, stats):
        if update % 10 == 0:
            print(f"update {update:4d}  steps {stats['env_steps']:7d}  success {stats['success']:.2f}  "
                  f"entropy {stats['entropy']:.3f}  {time.time() - t0:.0f}s", flush=True)

    res = train_cue(cfg, args.seed, args.steps, workers=args.workers, callback=progress)
    for greedy in (False, True):
        acc = cue_accuracy(learned(res, greedy), cfg, args.eval)
        print(f"{'greedy' if greedy else 'sampled'} accuracy {acc:.3f}")
    print(f"{res.env_steps} env steps, {res.updates} updates, {time.time() - t0:.0f} s")
    if args.out:
        extra = {"config_hash": cfg.hash(), "seed": args.seed, "env_steps": res.env_steps, "updates": res.updates}
        save_checkpoint(args.out, res.params, res.net, extra, res.normalizer)


if __name__ == "__main__":
    main()
