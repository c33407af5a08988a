"""End-to-end pipeline: synthetic population, style learning, prediction, planning.

Each stage reads only the files written by earlier stages, so any stage can
be rerun on its own. All outputs except the ``timing.json`` files are
byte-identical for a given config and seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import io
import json
import logging
from pathlib import Path
import time

import numpy as np

from .clustering import ClusterModel, NoElbowError, adjusted_rand_index, elbow_scan, kmeans, select_k
from .config import ExperimentConfig
from .data import N_STATES, demonstration_from_points, discretize_state, synthesize_driver, aggregate
from .irl import learn_reward, normalize_weights
from .model import PaccModel
from .prediction import TargetDriver, cluster_gmms, evaluate_accuracy, event_points
from .solver import Episode, PlannerConfig, run_episode, warm_up

log = logging.getLogger(__name__)

REFERENCE_BEST_ACCURACY = 0.857
LOW_GAP = 2.0


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _f(x) -> str:
    return repr(float(x))


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _write_json(path: Path, doc) -> Path:
    return _write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path, stage: str):
    if not path.exists():
        raise StageError(stage, f"missing artifact {path}; run the earlier stages first")
    return json.loads(path.read_text(encoding="utf-8"))


def _require(stage: str, *paths: Path) -> None:
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise StageError(stage, "missing artifacts: " + ", ".join(missing))


def _out(config: ExperimentConfig) -> Path:
    return Path(config.output_dir)


# --------------------------------------------------------------------------
# synthetic population


@dataclass
class DriverRecord:
    driver_id: str
    role: str
    archetype: int
    preferred_state: int
    n_events: int
    seed: int


def population(config: ExperimentConfig) -> list[DriverRecord]:
    """Driver roster: archetypes assigned round-robin, per-driver RNG streams."""
    p = config.population
    n = p.n_source + p.n_target
    streams = np.random.SeedSequence(config.seed).spawn(n)
    out = []
    for i in range(n):
        source = i < p.n_source
        j = i if source else i - p.n_source
        lo, hi = p.source_events if source else p.target_events
        rng = np.random.default_rng(streams[i])
        arch = j % len(p.archetypes)
        out.append(DriverRecord(
            driver_id=f"S{j + 1:02d}" if source else f"T{j + 1:02d}",
            role="source" if source else "target",
            archetype=arch,
            preferred_state=int(p.archetypes[arch]),
            n_events=int(rng.integers(lo, hi + 1)),
            seed=int(rng.integers(2**31 - 1)),
        ))
    return out


def synthesize_population(config: ExperimentConfig) -> dict:
    """Generate every driver and persist the roster and 3 s window means."""
    out = _out(config) / "synth"
    p = config.population
    roster = population(config)
    windows = io.StringIO()
    windows.write("driver_id,event,speed,distance,accel\n")
    example = None
    for d in roster:
        events = synthesize_driver(p.profile(d.preferred_state), d.n_events, d.seed, d.driver_id,
                                   config.discretization, p.generator)
        if example is None:
            example = events[0]
        for e, ev in enumerate(events):
            for row in aggregate(ev):
                windows.write(f"{d.driver_id},{e},{_f(row[0])},{_f(row[1])},{_f(row[2])}\n")
    buf = io.StringIO()
    buf.write("driver_id,role,archetype,preferred_state,n_events,seed\n")
    for d in roster:
        buf.write(f"{d.driver_id},{d.role},{d.archetype},{d.preferred_state},{d.n_events},{d.seed}\n")
    ex = io.StringIO()
    ex.write("t,ego_speed,ego_accel,rel_distance,rel_speed\n")
    for s in example.samples:
        ex.write(",".join(_f(x) for x in s) + "\n")
    return {
        "population": str(_write(out / "population.csv", buf.getvalue())),
        "windows": str(_write(out / "windows.csv", windows.getvalue())),
        "example_event": str(_write(out / "example_event.csv", ex.getvalue())),
    }


def load_population(config: ExperimentConfig, stage: str) -> tuple[list[DriverRecord], dict]:
    """Roster and per-driver lists of ``(n_windows, 3)`` event arrays."""
    d = _out(config) / "synth"
    _require(stage, d / "population.csv", d / "windows.csv")
    with open(d / "population.csv", newline="", encoding="utf-8") as fh:
        roster = [DriverRecord(r["driver_id"], r["role"], int(r["archetype"]), int(r["preferred_state"]),
                               int(r["n_events"]), int(r["seed"])) for r in csv.DictReader(fh)]
    rows: dict[str, dict[int, list]] = {}
    with open(d / "windows.csv", newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(r["driver_id"], {}).setdefault(int(r["event"]), []).append(
                (float(r["speed"]), float(r["distance"]), float(r["accel"])))
    windows = {k: [np.array(v[e]) for e in sorted(v)] for k, v in rows.items()}
    return roster, windows


def extract_windows(trajectories_csv: str | Path, out_csv: str | Path, spec=None) -> int:
    """Raw trajectory CSV -> car-following events -> window-mean CSV. Returns #events."""
    from .data import DEFAULT_SPEC, extract_events, load_trajectories

    spec = spec or DEFAULT_SPEC
    buf = io.StringIO()
    buf.write("driver_id,event,speed,distance,accel\n")
    counters: dict[str, int] = {}
    n = 0
    for traj in load_trajectories(trajectories_csv):
        for ev in extract_events(traj, spec):
            e = counters.get(ev.driver_id, 0)
            counters[ev.driver_id] = e + 1
            for row in aggregate(ev):
                buf.write(f"{ev.driver_id},{e},{_f(row[0])},{_f(row[1])},{_f(row[2])}\n")
            n += 1
    _write(Path(out_csv), buf.getvalue())
    return n


# --------------------------------------------------------------------------
# source learning


def learn_stage(config: ExperimentConfig) -> dict:
    stage = "learn"
    roster, windows = load_population(config, stage)
    out = _out(config) / "learn"
    lines = []
    table = io.StringIO()
    table.write("driver_id,archetype," + ",".join(f"w{i}" for i in range(N_STATES)) + "\n")
    for d in roster:
        if d.role != "source":
            continue
        demos = [demonstration_from_points(w, config.discretization) for w in windows.get(d.driver_id, []) if len(w)]
        if not demos:
            raise StageError(stage, f"driver {d.driver_id} has no usable events")
        learned = learn_reward(demos, config.irl)
        w = normalize_weights(learned.weights)
        doc = json.loads(learned.to_json(d.driver_id, config.irl))
        doc["normalized_weights"] = [float(x) for x in w]
        lines.append(json.dumps(doc, sort_keys=True))
        table.write(f"{d.driver_id},{d.archetype}," + ",".join(_f(x) for x in w) + "\n")
    return {
        "weights": str(_write(out / "weights.csv", table.getvalue())),
        "rewards": str(_write(out / "rewards.jsonl", "\n".join(lines) + "\n")),
    }


def load_weights(config: ExperimentConfig, stage: str) -> tuple[list[str], np.ndarray, np.ndarray]:
    path = _out(config) / "learn" / "weights.csv"
    _require(stage, path)
    ids, arch, rows = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            ids.append(r["driver_id"])
            arch.append(int(r["archetype"]))
            rows.append([float(r[f"w{i}"]) for i in range(N_STATES)])
    return ids, np.array(arch), np.array(rows)


def cluster_stage(config: ExperimentConfig) -> dict:
    stage = "cluster"
    ids, arch, weights = load_weights(config, stage)
    c = config.clustering
    out = _out(config) / "cluster"
    k_max = min(c.k_max, len(ids))
    report = elbow_scan(weights, range(c.k_min, k_max + 1), config.seed, c.n_restarts)
    try:
        elbow_k = select_k(report)
    except NoElbowError as exc:
        if c.k is None:
            raise StageError(stage, str(exc)) from exc
        elbow_k = None
    k = c.k if c.k is not None else elbow_k
    model = kmeans(weights, k, config.seed, c.n_restarts, driver_ids=ids)
    ari = adjusted_rand_index(model.labels, arch)
    cent = io.StringIO()
    cent.write("cluster,peak_state," + ",".join(f"w{i}" for i in range(N_STATES)) + "\n")
    for i, row in enumerate(model.centroids):
        cent.write(f"{i + 1},{int(np.argmax(row))}," + ",".join(_f(x) for x in row) + "\n")
    assign = io.StringIO()
    assign.write("driver_id,archetype,cluster\n")
    for d, a, lab in zip(ids, arch, model.labels):
        assign.write(f"{d},{a},{int(lab) + 1}\n")
    summary = {"k": int(k), "elbow_k": elbow_k, "ari": float(ari), "inertia": float(model.inertia),
               "n_drivers": len(ids)}
    return {
        "elbow": str(_write(out / "elbow.csv", report.to_csv())),
        "model": str(_write(out / "model.json", model.to_json() + "\n")),
        "centroids": str(_write(out / "centroids.csv", cent.getvalue())),
        "assignments": str(_write(out / "assignments.csv", assign.getvalue())),
        "summary": str(_write_json(out / "summary.json", summary)),
    }


@dataclass
class SourceResult:
    driver_ids: list
    weights: np.ndarray
    archetypes: np.ndarray
    model: ClusterModel
    elbow_k: int | None
    ari: float
    artifacts: dict = field(default_factory=dict)


def load_cluster_model(config: ExperimentConfig, stage: str) -> ClusterModel:
    return ClusterModel.from_dict(_read_json(_out(config) / "cluster" / "model.json", stage))


def run_source_learning(config: ExperimentConfig) -> SourceResult:
    """Synthesize, learn every source driver's reward, pick k and cluster."""
    artifacts = {}
    t0 = time.perf_counter()
    artifacts.update(synthesize_population(config))
    artifacts.update(learn_stage(config))
    artifacts.update(cluster_stage(config))
    ids, arch, weights = load_weights(config, "cluster")
    summary = _read_json(Path(artifacts["summary"]), "cluster")
    _write_json(_out(config) / "cluster" / "timing.json", {"seconds": time.perf_counter() - t0})
    return SourceResult(ids, weights, arch, load_cluster_model(config, "cluster"),
                        summary["elbow_k"], summary["ari"], artifacts)


# --------------------------------------------------------------------------
# prediction study


@dataclass
class PredictionResult:
    n_events: np.ndarray
    accuracy: np.ndarray
    sd: np.ndarray
    truth: dict
    artifacts: dict


def run_prediction_study(config: ExperimentConfig) -> PredictionResult:
    """Accuracy of KL-based cluster prediction versus number of events."""
    stage = "predict"
    model = load_cluster_model(config, stage)
    roster, windows = load_population(config, stage)
    p = config.prediction
    t0 = time.perf_counter()
    source_points = {d.driver_id: event_points(windows[d.driver_id]) for d in roster if d.role == "source"}
    gmms = cluster_gmms(model, source_points, p.n_components, config.seed)
    targets = []
    for d in roster:
        if d.role != "target":
            continue
        evs = windows[d.driver_id]
        n_test = config.population.test_events
        targets.append(TargetDriver(d.driver_id, evs[:n_test], evs[n_test:]))
    rep = evaluate_accuracy(targets, model, gmms, range(1, p.max_events + 1), p.trials, config.seed,
                            config.irl, p.n_components, p.kl_samples)
    out = _out(config) / "predict"
    summary = {
        "max_accuracy": float(np.max(rep.accuracy)),
        "accuracy_le5": float(np.mean(rep.accuracy[rep.n_events <= 5])),
        "accuracy_ge6": float(np.mean(rep.accuracy[rep.n_events >= 6])) if np.any(rep.n_events >= 6) else None,
        "truth": {k: int(v) + 1 for k, v in sorted(rep.truth.items())},
        "reference_best_accuracy": REFERENCE_BEST_ACCURACY,
    }
    gm = {"clusters": [g.to_dict() for g in gmms]}
    artifacts = {
        "accuracy_curve": str(_write(out / "accuracy_curve.csv", rep.curve_csv())),
        "predictions": str(_write(out / "predictions.csv", rep.rows_csv())),
        "cluster_gmms": str(_write_json(out / "cluster_gmms.json", gm)),
        "summary": str(_write_json(out / "summary.json", summary)),
    }
    _write_json(out / "timing.json", {"seconds": time.perf_counter() - t0})
    return PredictionResult(rep.n_events, rep.accuracy, rep.sd, rep.truth, artifacts)


# --------------------------------------------------------------------------
# planning experiments


def choose_reward(config: ExperimentConfig, stage: str = "plan") -> tuple[int, np.ndarray]:
    """Centroid reward used for planning (1-based cluster, weights).

    Without an explicit cluster, the centroid rating the start cell highest
    is used, i.e. the style that is content with the initial situation.
    """
    model = load_cluster_model(config, stage)
    if config.pacc.cluster is not None:
        c = config.pacc.cluster - 1
        if not 0 <= c < model.k:
            raise StageError(stage, f"cluster {config.pacc.cluster} not in 1..{model.k}")
    else:
        m = config.model
        start = discretize_state(m.initial_v_ego, m.initial_gap, config.discretization)
        c = int(np.argmax(model.centroids[:, start]))
    return c + 1, model.centroids[c].copy()


def _episode_seeds(config: ExperimentConfig, tag: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence([config.seed, tag]).generate_state(n)]


def _episode_csv(ep: Episode) -> str:
    buf = io.StringIO()
    cols = Episode.CSV_HEADER.split(",")
    keep = [i for i, c in enumerate(cols) if c != "planning_time"]
    buf.write(",".join(cols[i] for i in keep) + "\n")
    for row in ep.rows():
        buf.write(",".join(str(row[i]) if isinstance(row[i], (int, np.integer)) else _f(row[i])
                           for i in keep) + "\n")
    return buf.getvalue()


@dataclass
class PaccResult:
    episodes: list
    low_gap_fraction: float
    peak_state: int
    peak_occupancy: float
    max_planning_time: float
    artifacts: dict


def _occupancy(episodes, warm_up_steps: int, spec) -> np.ndarray:
    """Counts per grid cell of post-step states after the warm-up; last slot is off-grid."""
    counts = np.zeros(N_STATES + 1, dtype=np.int64)
    for ep in episodes:
        for s in ep.steps:
            if s.t < warm_up_steps:
                continue
            ob = s.observation
            try:
                counts[discretize_state(ob.v_ego, ob.y_lead - ob.y_ego, spec)] += 1
            except ValueError:
                counts[N_STATES] += 1
    return counts


def run_pacc_experiment(config: ExperimentConfig, reward) -> PaccResult:
    """Closed-loop episodes under one reward; per-step CSVs plus summaries."""
    model = PaccModel(reward, config.model)
    warm_up(model)
    pc = config.pacc
    out = _out(config) / "plan"
    seeds = _episode_seeds(config, 5, pc.n_episodes)
    episodes = [run_episode(model, config.planner, s) for s in seeds]
    artifacts = {}
    for i, ep in enumerate(episodes):
        artifacts[f"episode_{i + 1:02d}"] = str(_write(out / "episodes" / f"episode_{i + 1:02d}.csv", _episode_csv(ep)))

    horizon = max(len(ep.steps) for ep in episodes)
    mean = io.StringIO()
    mean.write("t,mean_v_ego,sd_v_ego,mean_gap,sd_gap,n_runs\n")
    low_mean = 0
    for t in range(horizon):
        obs = [ep.steps[t].observation for ep in episodes if t < len(ep.steps)]
        v = np.array([o.v_ego for o in obs])
        g = np.array([o.y_lead - o.y_ego for o in obs])
        low_mean += int(g.mean() < LOW_GAP)
        mean.write(f"{t + 1},{_f(v.mean())},{_f(v.std())},{_f(g.mean())},{_f(g.std())},{len(obs)}\n")
    artifacts["mean_trajectory"] = str(_write(out / "mean_trajectory.csv", mean.getvalue()))

    counts = _occupancy(episodes, pc.warm_up_steps, config.discretization)
    total = max(int(counts.sum()), 1)
    occ = io.StringIO()
    occ.write("state,speed_bin,distance_bin,count,fraction\n")
    nd = len(config.discretization.distance_edges) - 1
    for s in range(N_STATES):
        occ.write(f"{s},{s // nd},{s % nd},{counts[s]},{_f(counts[s] / total)}\n")
    occ.write(f"offgrid,,,{counts[N_STATES]},{_f(counts[N_STATES] / total)}\n")
    artifacts["occupancy"] = str(_write(out / "occupancy.csv", occ.getvalue()))

    grid = io.StringIO()
    grid.write("state,speed_bin,distance_bin,weight\n")
    for s in range(N_STATES):
        grid.write(f"{s},{s // nd},{s % nd},{_f(model.weights[s])}\n")
    artifacts["reward_grid"] = str(_write(out / "reward_grid.csv", grid.getvalue()))

    n_steps = sum(len(ep.steps) for ep in episodes)
    low = sum(s.observation.y_lead - s.observation.y_ego < LOW_GAP for ep in episodes for s in ep.steps)
    peak = int(np.argmax(model.weights))
    summary = {
        "n_episodes": len(episodes),
        "n_steps": n_steps,
        "low_gap_fraction": low / n_steps,
        "mean_trajectory_low_gap_steps": low_mean,
        "collisions": sum(ep.collision for ep in episodes),
        "peak_state": peak,
        "peak_occupancy": float(counts[peak] / total),
        "mean_cumulative_reward": float(np.mean([ep.cumulative_reward for ep in episodes])),
        "mean_cumulative_cost": float(np.mean([ep.cumulative_cost for ep in episodes])),
        "intentions": [int(ep.intention) for ep in episodes],
    }
    artifacts["summary"] = str(_write_json(out / "summary.json", summary))
    times = [s.planning_time for ep in episodes for s in ep.steps]
    _write_json(out / "timing.json", {"max_planning_time": max(times), "mean_planning_time": float(np.mean(times))})
    diag = "\n".join(json.dumps({"episode": i + 1, "t": s.t, "action": s.action, "lambda": s.lam,
                                 "n_simulations": s.n_simulations}, sort_keys=True)
                     for i, ep in enumerate(episodes) for s in ep.steps)
    artifacts["diagnostics"] = str(_write(out / "diagnostics.jsonl", diag + "\n"))
    return PaccResult(episodes, low / n_steps, peak, summary["peak_occupancy"], max(times), artifacts)


@dataclass
class SweepRow:
    n_simulations: int
    mean_reward: float
    sd_reward: float
    mean_cost: float
    sd_cost: float
    n_episodes: int
    max_planning_time: float


def run_simulation_sweep(config: ExperimentConfig, reward) -> tuple[list[SweepRow], dict]:
    """Cumulative reward and cost per episode as a function of the search budget."""
    model = PaccModel(reward, config.model)
    warm_up(model)
    pc = config.pacc
    seeds = _episode_seeds(config, 9, pc.sweep_episodes)
    rows = []
    for budget in pc.budgets:
        cfg = PlannerConfig.from_dict({**config.planner.to_dict(), "n_simulations": int(budget)})
        eps = [run_episode(model, cfg, s) for s in seeds]
        r = np.array([e.cumulative_reward for e in eps])
        c = np.array([e.cumulative_cost for e in eps])
        ddof = 1 if len(eps) > 1 else 0
        t = max(s.planning_time for e in eps for s in e.steps)
        rows.append(SweepRow(int(budget), float(r.mean()), float(r.std(ddof=ddof)), float(c.mean()),
                             float(c.std(ddof=ddof)), len(eps), t))
    out = _out(config) / "sweep"
    buf = io.StringIO()
    buf.write("n_simulations,mean_reward,sd_reward,mean_cost,sd_cost,n_episodes\n")
    for r in rows:
        buf.write(f"{r.n_simulations},{_f(r.mean_reward)},{_f(r.sd_reward)},{_f(r.mean_cost)},"
                  f"{_f(r.sd_cost)},{r.n_episodes}\n")
    artifacts = {"sweep": str(_write(out / "sweep.csv", buf.getvalue()))}
    # wall-clock numbers are kept apart so the CSV above is reproducible
    _write_json(out / "timing.json", {str(r.n_simulations): {"max_planning_time": r.max_planning_time,
                                                             "deployable": r.max_planning_time < 1.0}
                                      for r in rows})
    return rows, artifacts


# --------------------------------------------------------------------------
# report


@dataclass
class RunReport:
    index_path: str
    summary_path: str
    artifacts: dict
    metrics: dict


_STAGE_FILES = {
    "synth": ["population.csv", "windows.csv", "example_event.csv"],
    "learn": ["weights.csv", "rewards.jsonl"],
    "cluster": ["elbow.csv", "model.json", "centroids.csv", "assignments.csv", "summary.json"],
    "predict": ["accuracy_curve.csv", "predictions.csv", "cluster_gmms.json", "summary.json"],
    "plan": ["mean_trajectory.csv", "occupancy.csv", "reward_grid.csv", "summary.json", "diagnostics.jsonl"],
    "sweep": ["sweep.csv"],
}

_PLOT_DATA = {
    "example car-following event": "synth/example_event.csv",
    "learned driver rewards": "learn/weights.csv",
    "elbow curve": "cluster/elbow.csv",
    "cluster centroids": "cluster/centroids.csv",
    "driver cluster assignments": "cluster/assignments.csv",
    "prediction accuracy vs events": "predict/accuracy_curve.csv",
    "planning reward grid": "plan/reward_grid.csv",
    "cumulative reward and cost vs simulations": "sweep/sweep.csv",
    "mean planned trajectory": "plan/mean_trajectory.csv",
    "speed-gap occupancy": "plan/occupancy.csv",
}


def emit_report(config: ExperimentConfig) -> RunReport:
    """JSON index of every artifact that exists plus a plain-text summary."""
    root = _out(config)
    artifacts = {}
    for stage, names in _STAGE_FILES.items():
        present = [f"{stage}/{n}" for n in names if (root / stage / n).exists()]
        if stage == "plan":
            present += sorted(f"plan/episodes/{p.name}" for p in (root / "plan" / "episodes").glob("*.csv"))
        if present:
            artifacts[stage] = present
    if not artifacts:
        raise StageError("report", f"no artifacts under {root}")
    metrics = {}
    for stage in ("cluster", "predict", "plan"):
        path = root / stage / "summary.json"
        if path.exists():
            metrics[stage] = json.loads(path.read_text(encoding="utf-8"))
    plots = {k: v for k, v in _PLOT_DATA.items() if (root / v).exists()}
    cfg = config.to_dict()
    cfg.pop("output_dir")
    index = {"seed": config.seed, "config": cfg, "artifacts": artifacts, "plot_data": plots,
             "metrics": metrics, "note": "all results come from synthetic drivers"}
    lines = [f"pipeline report (seed {config.seed}, synthetic data)"]
    if "cluster" in metrics:
        m = metrics["cluster"]
        lines.append(f"clusters: k={m['k']} (elbow {m['elbow_k']}), ARI vs archetypes {m['ari']:.3f}")
    if "predict" in metrics:
        m = metrics["predict"]
        ge6 = "n/a" if m["accuracy_ge6"] is None else f"{m['accuracy_ge6']:.3f}"
        lines.append(f"prediction: max accuracy {100 * m['max_accuracy']:.1f}% "
                     f"(reference best {100 * REFERENCE_BEST_ACCURACY:.1f}%); "
                     f"mean n<=5 {m['accuracy_le5']:.3f}, n>=6 {ge6}")
    if "plan" in metrics:
        m = metrics["plan"]
        lines.append(f"planning: {m['n_episodes']} episodes, gap<2m in {100 * m['low_gap_fraction']:.2f}% of steps, "
                     f"{100 * m['peak_occupancy']:.1f}% post-warm-up occupancy of cell {m['peak_state']}")
    sweep = root / "sweep" / "sweep.csv"
    if sweep.exists():
        lines.append("sweep (n_simulations: reward / cost):")
        with open(sweep, newline="", encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                lines.append(f"  {r['n_simulations']}: {float(r['mean_reward']):.2f} +- {float(r['sd_reward']):.2f}"
                             f" / {float(r['mean_cost']):.2f} +- {float(r['sd_cost']):.2f}")
    idx = _write_json(root / "report" / "index.json", index)
    txt = _write(root / "report" / "summary.txt", "\n".join(lines) + "\n")
    return RunReport(str(idx), str(txt), artifacts, metrics)
