"""Run the five baselines on freshly generated evaluation episodes and print SR / SPL / DTG.

    python3 scripts/compare_baselines.py --episodes 100 --workers 4 --csv baselines.csv
"""

import argparse
import time
from pathlib import Path

from fsenav.config import eval_preset, load_config
from fsenav.experiments import SUITE_POLICIES, baseline_suite, baseline_tasks
from fsenav.metrics import format_csv, format_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--first-scene", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--config", help="config file (default: the 24 m evaluation preset)")
    ap.add_argument("--policies", nargs="+", default=list(SUITE_POLICIES))
    ap.add_argument("--csv")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else eval_preset()
    t0 = time.time()
    tasks = baseline_tasks(args.episodes, cfg, args.first_scene, args.seed)
    suite = baseline_suite(tasks, cfg, args.policies, args.seed, args.workers)
    print(f"{args.episodes} episodes, success radius {cfg.agent.success_radius} m")
    print(format_table(suite.summaries))
    for name, sec in suite.seconds.items():
        print(f"  {name}: {sec:.0f} s")
    print(f"total {time.time() - t0:.0f} s")
    if args.csv:
        Path(args.csv).write_text(format_csv(suite.summaries))


if __name__ == "__main__":
    main()
