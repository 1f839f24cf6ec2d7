"""Command-line entry points: gen, run, train, report, render.

Failures print ``error: <kind>: <message>`` on stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PRESETS, ExperimentConfig, dump_config, load_config
from .core import ArgumentError, DataError, FseError

log = logging.getLogger("fsenav")

SCENE_SUFFIX = ".fse"
CONFIG_NAME = "config.ini"
EPISODES_NAME = "episodes.jsonl"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


def parse_seeds(text: str) -> list[int]:
    """``a..b`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            a, b = (int(p) for p in text.split("..", 1))
        else:
            a = b = int(text)
    except ValueError:
        raise ArgumentError(f"bad seed range {text!r}; expected a..b") from None
    if b < a or a < 0:
        raise ArgumentError(f"bad seed range {text!r}")
    return list(range(a, b + 1))


def _config(path, preset: str = "default") -> ExperimentConfig:
    if path is not None:
        return load_config(path)
    if preset == "cue":
        from .cueworld import cue_config

        return cue_config()
    if preset not in PRESETS:
        raise ArgumentError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS) + ['cue']}")
    return PRESETS[preset]()


def _run_config(args) -> ExperimentConfig:
    if args.config is None and args.scenes is not None:
        stored = Path(args.scenes) / CONFIG_NAME
        if stored.exists():
            return load_config(stored)
    return _config(args.config, args.preset)


def load_scenes(directory) -> dict:
    from .simworld import load_scene

    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"{d}: not a directory")
    scenes = {}
    for p in sorted(d.glob("*" + SCENE_SUFFIX)):
        s = load_scene(p)
        scenes[s.scene_id] = s
    if not scenes:
        raise DataError(f"{d}: no {SCENE_SUFFIX} scene files")
    return scenes


def _tasks(scenes: dict, episodes_path):
    from .runner import Task
    from .simworld import load_episodes

    specs = load_episodes(episodes_path, scenes)
    tasks = []
    for i, spec in enumerate(specs):
        if spec.scene_id not in scenes:
            raise DataError(f"episode {i} refers to unknown scene {spec.scene_id!r}")
        tasks.append(Task(i, scenes[spec.scene_id], spec))
    return tasks


# --- subcommands -----------------------------------------------------------


def cmd_gen(args) -> int:
    from .simworld import generate_episodes, generate_scene, save_episodes, save_scene

    cfg = _config(args.config, args.preset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenes, episodes = {}, []
    for s in parse_seeds(args.seeds):
        scene = generate_scene(cfg.scene, s, f"scene_{s:05d}", cfg.agent.radius)
        save_scene(scene, out / f"{scene.scene_id}{SCENE_SUFFIX}")
        scenes[scene.scene_id] = scene
        n = args.episodes_per_scene or cfg.run.episodes_per_scene
        episodes += generate_episodes(
            scene, n, args.seed, cfg.agent, cfg.scene.num_goal_categories, cfg.run.min_episode_length
        )
        log.info("scene %s: %d episodes", scene.scene_id, n)
    save_episodes(episodes, scenes, out / EPISODES_NAME)
    (out / CONFIG_NAME).write_text(dump_config(cfg))
    print(f"wrote {len(scenes)} scenes and {len(episodes)} episodes to {out}")
    return 0


def cmd_run(args) -> int:
    from .agents import make_policy
    from .render import render_episode
    from .runner import run_batch

    cfg = _run_config(args)
    scenes = load_scenes(args.scenes)
    episodes = args.episodes or Path(args.scenes) / EPISODES_NAME
    tasks = _tasks(scenes, episodes)
    if args.limit:
        tasks = tasks[: args.limit]
    if args.policy.endswith(".npz") and not Path(args.policy).exists():
        raise ArgumentError(f"checkpoint {args.policy} not found")
    make_policy(args.policy)  # fail fast before any episode runs
    results, logs = run_batch(tasks, args.policy, cfg, args.seed, args.workers, log_steps=args.render is not None)
    header = {
        "config_hash": cfg.hash(),
        "seed": args.seed,
        "policy": args.policy,
        "episodes": len(results),
        "success_radius": cfg.agent.success_radius,
        "version": __version__,
    }
    lines = [json.dumps({"header": header}, sort_keys=True)] + [r.to_json() for r in results]
    Path(args.out).write_text("\n".join(lines) + "\n")
    if args.render is not None:
        rdir = Path(args.render)
        rdir.mkdir(parents=True, exist_ok=True)
        for t, steps in zip(tasks, logs):
            stem = rdir / f"episode_{t.episode_id:05d}"
            stem.with_suffix(".steps.jsonl").write_text("".join(json.dumps(s, sort_keys=True) + "\n" for s in steps))
            render_episode(t.scene, steps).save(stem.with_suffix(".png"))
    failed = sum(r.error is not None for r in results)
    print(f"{len(results)} episodes, {sum(r.success for r in results)} successes, {failed} errors -> {args.out}")
    return 0


class SceneTasks:
    """Training tasks cycling through an episode list (picklable for workers)."""

    def __init__(self, tasks, agent):
        self.tasks = tasks
        self.agent = agent
        self._geo = {}

    def __call__(self, i):
        from .simworld import TargetGeometry

        t = self.tasks[i % len(self.tasks)]
        key = (t.scene.scene_id, t.spec.category)
        if key not in self._geo:
            self._geo[key] = TargetGeometry(t.scene, t.spec.category, self.agent)
        return t.scene, t.spec, self._geo[key]


def cmd_train(args) -> int:
    from .policy import save_checkpoint
    from .trainer import train_policy

    if args.toy == "cue":
        from .experiments import CueTasks

        cfg = _config(args.config, "cue")
        task_fn = CueTasks(cfg)
    else:
        if args.scenes is None:
            raise ArgumentError("train needs --scenes (or --toy cue)")
        cfg = _run_config(args)
        scenes = load_scenes(args.scenes)
        tasks = _tasks(scenes, args.episodes or Path(args.scenes) / EPISODES_NAME)
        task_fn = SceneTasks(tasks, cfg.agent)
    if args.reference_hparams:
        cfg = cfg.with_reference_hparams()
    res = train_policy(task_fn, cfg, args.seed, args.steps, workers=args.workers)
    extra = {"config_hash": cfg.hash(), "seed": args.seed, "env_steps": res.env_steps, "updates": res.updates}
    save_checkpoint(args.out, res.params, res.net, extra, res.normalizer)
    print(f"trained {res.updates} updates over {res.env_steps} env steps -> {args.out}")
    return 0


def cmd_report(args) -> int:
    from .metrics import format_csv, format_table, read_results, summary_by_policy

    header, records = read_results(args.input)
    if not records:
        raise DataError(f"{args.input}: no result records")
    summaries = summary_by_policy(records)
    if "success_radius" in header:
        print(f"success radius {header['success_radius']} m")
    print(format_table(summaries))
    csv_text = format_csv(summaries)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    else:
        print()
        print(csv_text, end="")
    return 0


def cmd_render(args) -> int:
    from .render import read_step_log, render_episode
    from .simworld import load_scene

    scene = load_scene(args.scene)
    steps = read_step_log(args.episode_log) if args.episode_log else None
    render_episode(scene, steps, args.scale).save(args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fsenav", description="Frontier semantic exploration on procedural gridworlds.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenes_required=False):
        sp.add_argument("--config", help="sectioned key = value config file")
        sp.add_argument("--preset", default="default", help="config preset when no --config is given")
        sp.add_argument("--seed", type=int, default=0)
        if scenes_required is not None:
            sp.add_argument("--scenes", required=scenes_required, help="directory written by gen")

    g = sub.add_parser("gen", help="generate scenes and episodes")
    common(g, scenes_required=None)
    g.add_argument("--out", required=True)
    g.add_argument("--seeds", required=True, help="scene seeds, a..b inclusive")
    g.add_argument("--episodes-per-scene", type=int, default=None)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="evaluate a policy on an episode set")
    common(r, scenes_required=True)
    r.add_argument("--episodes", help="episode file (default: <scenes>/episodes.jsonl)")
    r.add_argument("--policy", required=True, help="baseline name or .npz checkpoint")
    r.add_argument("--out", required=True)
    r.add_argument("--render", help="directory for per-episode images and step logs")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--limit", type=int, default=0, help="run only the first N episodes")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("train", help="train the frontier-selection policy with PPO")
    common(t)
    t.add_argument("--episodes")
    t.add_argument("--toy", choices=["cue"], help="train on the built-in cue scenes instead")
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int, default=None, help="override total env steps")
    t.add_argument("--reference-hparams", action="store_true", help="PPO learning rate 2.5e-5 instead of 2.5e-4")
    t.add_argument("--workers", type=int, default=1)
    t.set_defaults(func=cmd_train)

    rp = sub.add_parser("report", help="SR / SPL / DTG table from a results file")
    rp.add_argument("--in", dest="input", required=True)
    rp.add_argument("--csv", help="write the CSV table here instead of stdout")
    rp.set_defaults(func=cmd_report)

    rd = sub.add_parser("render", help="draw a scene, optionally with an episode trajectory")
    rd.add_argument("--scene", required=True)
    rd.add_argument("--episode-log")
    rd.add_argument("--out", required=True)
    rd.add_argument("--scale", type=int, default=2)
    rd.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except FseError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
