"""Command-line entry point: ``pacc <stage> [--config F] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys

import numpy as np

from .config import ExperimentConfig
from . import experiment as ex

log = logging.getLogger("pacc")


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(seed=args.seed, output_dir=args.out)


def _reward(args, config: ExperimentConfig):
    if getattr(args, "reward", None):
        doc = json.loads(Path(args.reward).read_text(encoding="utf-8"))
        weights = doc["weights"] if isinstance(doc, dict) else doc
        return None, np.asarray(weights, dtype=float)
    return ex.choose_reward(config)


def cmd_synth(args, config):
    paths = ex.synthesize_population(config)
    print(f"wrote {paths['windows']}")


def cmd_extract(args, config):
    out = args.output or str(Path(config.output_dir) / "synth" / "windows.csv")
    n = ex.extract_windows(args.input, out, config.discretization)
    print(f"extracted {n} events -> {out}")


def cmd_learn(args, config):
    paths = ex.learn_stage(config)
    print(f"wrote {paths['weights']}")


def cmd_cluster(args, config):
    paths = ex.cluster_stage(config)
    summary = json.loads(Path(paths["summary"]).read_text(encoding="utf-8"))
    print(f"k={summary['k']} (elbow {summary['elbow_k']}), ARI vs archetypes {summary['ari']:.3f}")


def cmd_predict(args, config):
    res = ex.run_prediction_study(config)
    for n, a, s in zip(res.n_events, res.accuracy, res.sd):
        print(f"n_events={int(n):2d} accuracy={a:.3f} sd={s:.3f}")


def cmd_plan(args, config):
    cluster, reward = _reward(args, config)
    res = ex.run_pacc_experiment(config, reward)
    src = f"cluster {cluster}" if cluster is not None else args.reward
    print(f"reward from {src}: gap<2m in {100 * res.low_gap_fraction:.2f}% of steps, "
          f"{100 * res.peak_occupancy:.1f}% occupancy of cell {res.peak_state}, "
          f"max planning time {res.max_planning_time:.3f}s")


def cmd_sweep(args, config):
    _, reward = _reward(args, config)
    rows, _ = ex.run_simulation_sweep(config, reward)
    for r in rows:
        print(f"{r.n_simulations:5d} reward {r.mean_reward:8.2f} +- {r.sd_reward:6.2f}  "
              f"cost {r.mean_cost:6.2f} +- {r.sd_cost:5.2f}  max plan {r.max_planning_time:.3f}s")


def cmd_report(args, config):
    rep = ex.emit_report(config)
    print(Path(rep.summary_path).read_text(encoding="utf-8"), end="")


def cmd_run(args, config):
    ex.run_source_learning(config)
    ex.run_prediction_study(config)
    _, reward = _reward(args, config)
    ex.run_pacc_experiment(config, reward)
    ex.run_simulation_sweep(config, reward)
    cmd_report(args, config)


def cmd_config(args, config):
    print(config.to_json(), end="")


COMMANDS = {
    "synth": (cmd_synth, "generate the synthetic driver population"),
    "extract": (cmd_extract, "cut events from a raw trajectory CSV and aggregate them"),
    "learn": (cmd_learn, "learn a reward per source driver"),
    "cluster": (cmd_cluster, "elbow scan and k-means on the learned rewards"),
    "predict": (cmd_predict, "prediction accuracy versus number of events"),
    "plan": (cmd_plan, "closed-loop episodes with the planner"),
    "sweep": (cmd_sweep, "reward and cost versus simulation budget"),
    "report": (cmd_report, "index of all artifacts plus a summary"),
    "run": (cmd_run, "all stages in order"),
    "config": (cmd_config, "print the effective config as JSON"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pacc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--deterministic", action="store_true",
                       help="serial execution; stages always run serially, so this is the default")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("plan", "sweep", "run"):
            p.add_argument("--reward", help="JSON file with 25 reward weights (default: a cluster centroid)")
        if name == "extract":
            p.add_argument("--input", required=True, help="raw trajectory CSV")
            p.add_argument("--output", help="window CSV to write (default: <out>/synth/windows.csv)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args)
        COMMANDS[args.command][0](args, config)
    except ex.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
