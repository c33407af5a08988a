"""Car-following data pipeline.

Ingests trajectory CSV files (or synthesizes them), cuts car-following
events, aggregates them to 3-second points and maps the points onto the
25-state / 5-action grid the reward learner works on.

Trajectories and events are stored column-wise as NumPy arrays rather than
lists of per-sample records.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from ._accel import njit

CSV_HEADER = (
    "driver_id",
    "timestamp_s",
    "ego_speed_mps",
    "ego_accel_mps2",
    "rel_distance_m",
    "rel_speed_mps",
)

SAMPLE_PERIOD = 0.1
MIN_EVENT_DURATION = 30.0
WINDOW_SECONDS = 3.0
N_STATES = 25
N_ACTIONS = 5
ACTION_NAMES = ("high_brake", "mild_brake", "minimal", "mild_accel", "high_accel")


class TrajectoryFormatError(ValueError):
    """Raised for malformed trajectory files; carries the offending row."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DiscretizationRangeError(ValueError):
    pass


@dataclass(frozen=True)
class DiscretizationSpec:
    speed_edges: tuple[float, ...] = (18.0, 23.0, 28.0, 33.0, 38.0, 43.0)
    distance_edges: tuple[float, ...] = (0.0, 24.0, 48.0, 72.0, 96.0, 120.0)
    accel_edges: tuple[float, ...] = (-1.46, -0.18, 0.18, 1.46)

    def __post_init__(self):
        for name in ("speed_edges", "distance_edges", "accel_edges"):
            edges = np.asarray(getattr(self, name), dtype=float)
            if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
        if len(self.speed_edges) != 6 or len(self.distance_edges) != 6:
            raise ValueError("state grid must be 5 x 5")
        if len(self.accel_edges) != 4:
            raise ValueError("action grid needs 4 thresholds (5 classes)")

    @property
    def n_speed_bins(self) -> int:
        return len(self.speed_edges) - 1

    @property
    def n_distance_bins(self) -> int:
        return len(self.distance_edges) - 1

    @property
    def speed_range(self) -> tuple[float, float]:
        return self.speed_edges[0], self.speed_edges[-1]

    @property
    def distance_range(self) -> tuple[float, float]:
        return self.distance_edges[0], self.distance_edges[-1]

    def cell_center(self, state_index: int) -> tuple[float, float]:
        """(speed, distance) at the middle of a state's grid cell."""
        if not 0 <= state_index < N_STATES:
            raise DiscretizationRangeError(f"state index {state_index} outside [0, 24]")
        i, j = divmod(int(state_index), self.n_distance_bins)
        s, d = self.speed_edges, self.distance_edges
        return 0.5 * (s[i] + s[i + 1]), 0.5 * (d[j] + d[j + 1])

    def to_dict(self) -> dict:
        return {
            "speed_edges": list(self.speed_edges),
            "distance_edges": list(self.distance_edges),
            "accel_edges": list(self.accel_edges),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscretizationSpec":
        return cls(**{k: tuple(float(x) for x in v) for k, v in d.items()})


DEFAULT_SPEC = DiscretizationSpec()


class RawSample(NamedTuple):
    timestamp: float
    ego_speed: float
    ego_accel: float
    rel_distance: float
    rel_speed: float


@dataclass
class Trajectory:
    """One contiguous block of samples from one driver.

    ``rel_distance`` is NaN where no lead vehicle was present and
    ``rel_speed`` is NaN where it was not recorded.
    """

    driver_id: str
    timestamp: np.ndarray
    ego_speed: np.ndarray
    ego_accel: np.ndarray
    rel_distance: np.ndarray
    rel_speed: np.ndarray

    def __len__(self) -> int:
        return len(self.timestamp)

    @property
    def samples(self) -> list[RawSample]:
        return [
            RawSample(*map(float, row))
            for row in zip(
                self.timestamp, self.ego_speed, self.ego_accel,
                self.rel_distance, self.rel_speed,
            )
        ]

    @property
    def duration(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(self.timestamp[-1] - self.timestamp[0]) + SAMPLE_PERIOD

    def slice(self, start: int, stop: int) -> "Trajectory":
        return type(self)(
            self.driver_id,
            self.timestamp[start:stop].copy(),
            self.ego_speed[start:stop].copy(),
            self.ego_accel[start:stop].copy(),
            self.rel_distance[start:stop].copy(),
            self.rel_speed[start:stop].copy(),
        )


class CarFollowingEvent(Trajectory):
    """A trajectory segment that passed the car-following criteria."""

    def to_dict(self) -> dict:
        rel_speed = [None if math.isnan(x) else float(x) for x in self.rel_speed]
        return {
            "timestamp": self.timestamp.tolist(),
            "ego_speed": self.ego_speed.tolist(),
            "ego_accel": self.ego_accel.tolist(),
            "rel_distance": self.rel_distance.tolist(),
            "rel_speed": rel_speed,
        }

    @classmethod
    def from_dict(cls, driver_id: str, d: dict) -> "CarFollowingEvent":
        rel_speed = [np.nan if x is None else x for x in d["rel_speed"]]
        return cls(
            driver_id,
            np.asarray(d["timestamp"], dtype=float),
            np.asarray(d["ego_speed"], dtype=float),
            np.asarray(d["ego_accel"], dtype=float),
            np.asarray(d["rel_distance"], dtype=float),
            np.asarray(rel_speed, dtype=float),
        )


@dataclass(frozen=True)
class DriverProfile:
    """Style parameters of a synthetic driver."""

    preferred_state_index: int
    speed_noise_sd: float = 1.0
    gap_noise_sd: float = 3.0
    policy_temperature: float = 0.3

    def __post_init__(self):
        if not 0 <= self.preferred_state_index < N_STATES:
            raise ValueError("preferred_state_index must be in [0, 24]")
        if self.speed_noise_sd <= 0 or self.gap_noise_sd <= 0:
            raise ValueError("noise standard deviations must be positive")
        if self.policy_temperature <= 0:
            raise ValueError("policy_temperature must be positive")


@dataclass
class Demonstration:
    """Discretized (state, action) steps of one event."""

    states: np.ndarray
    actions: np.ndarray = field(default=None)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        if self.states.ndim != 1 or self.states.shape != self.actions.shape:
            raise ValueError("states and actions must be 1-D and equally long")
        if self.states.size == 0:
            raise ValueError("demonstration is empty")
        if self.states.min() < 0 or self.states.max() >= N_STATES:
            raise ValueError("state index out of range")
        if self.actions.min() < 0 or self.actions.max() >= N_ACTIONS:
            raise ValueError("action index out of range")

    def __len__(self) -> int:
        return self.states.size


# --------------------------------------------------------------------------
# ingestion


def _parse_float(text: str, column: str, row: int, allow_empty: bool = False) -> float:
    text = text.strip()
    if text == "":
        if allow_empty:
            return np.nan
        raise TrajectoryFormatError(f"missing value for {column}", row)
    try:
        value = float(text)
    except ValueError:
        raise TrajectoryFormatError(f"cannot parse {column}={text!r}", row) from None
    if not math.isfinite(value):
        raise TrajectoryFormatError(f"non-finite {column}", row)
    return value


def load_trajectories(path: str | Path) -> list[Trajectory]:
    """Read a trajectory CSV file.

    Rows are partitioned by ``driver_id`` (in order of first appearance) and
    then split into contiguous-time blocks wherever consecutive timestamps
    are more than one sample period apart. Timestamps must increase within
    a driver; the first violating row is reported.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return []
    reader = csv.reader(text.splitlines())
    header = next(reader)
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise TrajectoryFormatError(f"unexpected header {header!r}", 1)

    rows: dict[str, list[tuple[float, ...]]] = {}
    last_time: dict[str, tuple[float, int]] = {}
    for row_number, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(CSV_HEADER):
            raise TrajectoryFormatError(
                f"expected {len(CSV_HEADER)} fields, got {len(row)}", row_number
            )
        driver_id = row[0].strip()
        if not driver_id:
            raise TrajectoryFormatError("empty driver_id", row_number)
        t = _parse_float(row[1], "timestamp_s", row_number)
        v = _parse_float(row[2], "ego_speed_mps", row_number)
        a = _parse_float(row[3], "ego_accel_mps2", row_number)
        d = _parse_float(row[4], "rel_distance_m", row_number, allow_empty=True)
        dv = _parse_float(row[5], "rel_speed_mps", row_number, allow_empty=True)
        if v < 0:
            raise TrajectoryFormatError("negative ego speed", row_number)
        if not np.isnan(d) and d <= 0:
            raise TrajectoryFormatError("rel_distance must be positive", row_number)
        if driver_id in last_time and t <= last_time[driver_id][0]:
            raise TrajectoryFormatError(
                f"timestamp {t} not after {last_time[driver_id][0]} "
                f"(row {last_time[driver_id][1]}) for driver {driver_id}",
                row_number,
            )
        last_time[driver_id] = (t, row_number)
        rows.setdefault(driver_id, []).append((t, v, a, d, dv))

    out = []
    for driver_id, records in rows.items():
        arr = np.asarray(records, dtype=float)
        breaks = np.flatnonzero(np.diff(arr[:, 0]) > 2 * SAMPLE_PERIOD + 1e-6) + 1
        for block in np.split(arr, breaks):
            out.append(Trajectory(driver_id, *(block[:, i].copy() for i in range(5))))
    return out


def write_trajectories(path: str | Path, trajectories: Iterable[Trajectory]) -> None:
    """Write trajectories in the CSV schema read by :func:`load_trajectories`."""

    def fmt(x: float) -> str:
        return "" if math.isnan(x) else repr(float(x))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for traj in trajectories:
            for s in traj.samples:
                writer.writerow([traj.driver_id, *map(fmt, s)])


# --------------------------------------------------------------------------
# event extraction and aggregation


def _valid_mask(traj: Trajectory, spec: DiscretizationSpec) -> np.ndarray:
    lo_v, hi_v = spec.speed_range
    d = traj.rel_distance
    with np.errstate(invalid="ignore"):
        ok = (
            ~np.isnan(d)
            & (d > 0)
            & (d < spec.distance_range[1])
            & (traj.ego_speed >= lo_v)
            & (traj.ego_speed <= hi_v)
        )
    return ok


def extract_events(
    trajectory: Trajectory, spec: DiscretizationSpec = DEFAULT_SPEC
) -> list[CarFollowingEvent]:
    """Cut maximal runs of qualifying samples lasting at least 30 s.

    A sample qualifies when a lead vehicle is present closer than the top
    distance edge and the ego speed lies inside the speed grid. A run is
    also broken wherever the sampling period jumps by more than one sample.
    """
    n = len(trajectory)
    if n == 0:
        return []
    ok = _valid_mask(trajectory, spec)
    gap_break = np.zeros(n, dtype=bool)
    gap_break[1:] = np.diff(trajectory.timestamp) > 2 * SAMPLE_PERIOD + 1e-6

    events = []
    start = None
    for i in range(n + 1):
        good = i < n and ok[i] and not (start is not None and gap_break[i])
        if start is None:
            if good:
                start = i
            continue
        if not good:
            seg = trajectory.slice(start, i)
            if seg.duration >= MIN_EVENT_DURATION - 1e-9:
                events.append(CarFollowingEvent(**vars(seg)))
            start = i if (i < n and ok[i]) else None
    return events


def window_length(sample_period: float = SAMPLE_PERIOD) -> int:
    return int(round(WINDOW_SECONDS / sample_period))


def aggregate(event: Trajectory) -> np.ndarray:
    """Mean (speed, distance, accel) over consecutive 3 s windows.

    Returns an ``(n_windows, 3)`` array; a trailing partial window is
    dropped.
    """
    w = window_length()
    n = len(event) // w
    if n == 0:
        return np.empty((0, 3))
    cols = np.stack([event.ego_speed, event.rel_distance, event.ego_accel], axis=1)
    return cols[: n * w].reshape(n, w, 3).mean(axis=1)


# --------------------------------------------------------------------------
# discretization


def _bin(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, x, side="right") - 1
    return np.minimum(idx, len(edges) - 2)


def discretize_states(speed, distance, spec: DiscretizationSpec = DEFAULT_SPEC) -> np.ndarray:
    """Vectorized :func:`discretize_state`."""
    speed = np.asarray(speed, dtype=float)
    distance = np.asarray(distance, dtype=float)
    sv, dv = np.asarray(spec.speed_edges), np.asarray(spec.distance_edges)
    bad = (
        ~np.isfinite(speed) | ~np.isfinite(distance)
        | (speed < sv[0]) | (speed > sv[-1])
        | (distance < dv[0]) | (distance > dv[-1])
    )
    if np.any(bad):
        i = int(np.flatnonzero(np.ravel(bad))[0])
        raise DiscretizationRangeError(
            f"(speed={np.ravel(speed)[i] if speed.ndim else speed}, "
            f"distance={np.ravel(distance)[i] if distance.ndim else distance}) "
            "outside the state grid"
        )
    return _bin(speed, sv) * (len(dv) - 1) + _bin(distance, dv)


def discretize_state(speed: float, distance: float, spec: DiscretizationSpec = DEFAULT_SPEC) -> int:
    """Grid cell index ``5 * speed_bin + distance_bin``.

    Bins are ``[edge_i, edge_{i+1})`` with the top edge inclusive.
    """
    return int(discretize_states(speed, distance, spec))


def classify_actions(accel, spec: DiscretizationSpec = DEFAULT_SPEC) -> np.ndarray:
    accel = np.asarray(accel, dtype=float)
    if not np.all(np.isfinite(accel)):
        raise ValueError("acceleration must be finite")
    return np.searchsorted(np.asarray(spec.accel_edges), accel, side="left")


def classify_action(accel: float, spec: DiscretizationSpec = DEFAULT_SPEC) -> int:
    """Acceleration class 0..4 (high brake .. high accel), right-inclusive bounds."""
    return int(classify_actions(accel, spec))


def demonstration_from_points(points: np.ndarray, spec: DiscretizationSpec = DEFAULT_SPEC) -> Demonstration:
    return Demonstration(
        discretize_states(points[:, 0], points[:, 1], spec),
        classify_actions(points[:, 2], spec),
    )


def demonstrations(events: Iterable[Trajectory], spec: DiscretizationSpec = DEFAULT_SPEC) -> list[Demonstration]:
    """One demonstration per event (events shorter than a window are skipped)."""
    out = []
    for ev in events:
        pts = aggregate(ev)
        if len(pts):
            out.append(demonstration_from_points(pts, spec))
    return out


# --------------------------------------------------------------------------
# synthetic drivers


@dataclass(frozen=True)
class GeneratorSettings:
    """Knobs of the synthetic car-following generator."""

    min_epochs: int = 10
    max_epochs: int = 20
    start_near_prob: float = 0.5
    speed_gain: float = 0.15
    gap_gain: float = 0.02
    accel_levels: tuple[float, ...] = (-2.0, -0.8, 0.0, 0.8, 2.0)
    accel_jitter: float = 0.1
    lead_speed_spread: float = 2.0
    lead_context_sd: float = 0.0
    lead_accel_noise: float = 0.1
    lead_relax: float = 0.02
    max_tries: int = 200


DEFAULT_GENERATOR = GeneratorSettings()


def planted_weights(preferred_state_index: int, spec: DiscretizationSpec = DEFAULT_SPEC) -> np.ndarray:
    """Reward a synthetic driver is built around: minus the grid distance
    (in bins) from each cell to the preferred cell."""
    nd = spec.n_distance_bins
    i0, j0 = divmod(int(preferred_state_index), nd)
    i, j = np.divmod(np.arange(N_STATES), nd)
    return -np.hypot(i - i0, j - j0)


def action_preferences(
    profile: DriverProfile,
    spec: DiscretizationSpec = DEFAULT_SPEC,
    settings: GeneratorSettings = DEFAULT_GENERATOR,
) -> np.ndarray:
    """Per-cell action-class probabilities of a synthetic driver (25 x 5).

    The driver evaluates a proportional controller toward the preferred
    cell centre at the centre of its current cell and picks an
    acceleration class with probability ``exp(-(level - desired)^2 / T)``.
    """
    v_star, d_star = spec.cell_center(profile.preferred_state_index)
    levels = np.asarray(settings.accel_levels)
    probs = np.empty((N_STATES, N_ACTIONS))
    for s in range(N_STATES):
        v_c, d_c = spec.cell_center(s)
        desired = settings.speed_gain * (v_star - v_c) + settings.gap_gain * (d_c - d_star)
        u = -((levels - desired) ** 2) / profile.policy_temperature
        p = np.exp(u - u.max())
        probs[s] = p / p.sum()
    return probs


@njit
def _simulate_event(
    v0, g0, vl0, v_ctx, n_epochs, per_epoch, dt,
    cum_probs, levels, speed_edges, distance_edges,
    epoch_uniforms, jitter, lead_noise, accel_jitter, lead_relax, lead_accel_noise,
):
    n = n_epochs * per_epoch
    speed = np.empty(n)
    accel = np.empty(n)
    gap = np.empty(n)
    rel_speed = np.empty(n)
    nd = distance_edges.shape[0] - 1
    ns = speed_edges.shape[0] - 1
    v = v0
    vl = vl0
    g = g0
    a_lead = 0.0
    k = 0
    for e in range(n_epochs):
        i = 0
        while i < ns - 1 and v >= speed_edges[i + 1]:
            i += 1
        j = 0
        while j < nd - 1 and g >= distance_edges[j + 1]:
            j += 1
        s = i * nd + j
        c = 0
        while c < levels.shape[0] - 1 and epoch_uniforms[e] > cum_probs[s, c]:
            c += 1
        # drivers do not leave the speed band on purpose
        window = per_epoch * dt
        while c < levels.shape[0] - 1 and v + levels[c] * window < speed_edges[0] + 0.5:
            c += 1
        while c > 0 and v + levels[c] * window > speed_edges[-1] - 0.5:
            c -= 1
        # nor close the gap to a crash or open it past free driving
        while c > 0 and g + (vl - v) * window - 0.5 * levels[c] * window * window < 2.0:
            c -= 1
        while (c < levels.shape[0] - 1
               and g + (vl - v) * window - 0.5 * levels[c] * window * window
               > distance_edges[-1] - 2.0):
            c += 1
        # the class level is ramped through the window so that the window
        # mean speed equals the speed at which the class was chosen
        mid = 0.5 * (per_epoch - 1)
        for q in range(per_epoch):
            a = levels[c] * (1.0 + 6.0 * (q - mid) / (per_epoch + 1)) + accel_jitter * jitter[k]
            speed[k] = v
            accel[k] = a
            gap[k] = g
            rel_speed[k] = vl - v
            a_lead = 0.9 * a_lead + lead_relax * (v_ctx - vl) + lead_accel_noise * lead_noise[k]
            if a_lead > 0.5:
                a_lead = 0.5
            elif a_lead < -0.5:
                a_lead = -0.5
            g += (vl - v) * dt + 0.5 * (a_lead - a) * dt * dt
            v += a * dt
            vl += a_lead * dt
            k += 1
    return speed, accel, gap, rel_speed


def synthesize_driver(
    profile: DriverProfile,
    n_events: int,
    seed: int,
    driver_id: str = "synthetic",
    spec: DiscretizationSpec = DEFAULT_SPEC,
    settings: GeneratorSettings = DEFAULT_GENERATOR,
) -> list[CarFollowingEvent]:
    """Generate car-following events for a synthetic driver.

    Every 3 s the ego picks an acceleration class from
    :func:`action_preferences` for its current cell and drives a linear
    acceleration ramp whose window mean is the class level (plus small
    jitter); the lead vehicle drifts with bounded
    random-walk acceleration in [-0.5, 0.5] m/s^2. Events start either near
    the preferred cell or anywhere on the grid. Draws that leave the
    car-following envelope are rejected and redrawn.
    """
    if n_events < 1:
        raise ValueError("n_events must be >= 1")
    rng = np.random.default_rng(seed)
    v_star, d_star = spec.cell_center(profile.preferred_state_index)
    lo_v, hi_v = spec.speed_range
    hi_d = spec.distance_range[1]
    s = settings
    cum = np.cumsum(action_preferences(profile, spec, s), axis=1)
    levels = np.asarray(s.accel_levels, dtype=float)
    sv = np.asarray(spec.speed_edges, dtype=float)
    dv = np.asarray(spec.distance_edges, dtype=float)
    per_epoch = window_length()
    events = []
    t_event = 0.0
    while len(events) < n_events:
        for _ in range(s.max_tries):
            n_epochs = int(rng.integers(s.min_epochs, s.max_epochs + 1))
            if rng.random() < s.start_near_prob:
                v0 = v_star + rng.normal(0.0, profile.speed_noise_sd)
                g0 = d_star + rng.normal(0.0, profile.gap_noise_sd)
            else:
                v0 = rng.uniform(lo_v + 0.5, hi_v - 0.5)
                g0 = rng.uniform(2.0, hi_d - 2.0)
            v0 = float(np.clip(v0, lo_v + 0.5, hi_v - 0.5))
            g0 = float(np.clip(g0, 2.0, hi_d - 2.0))
            v_ctx = v_star + rng.normal(0.0, s.lead_context_sd) if s.lead_context_sd > 0 else v_star
            vl0 = v0 + rng.normal(0.0, s.lead_speed_spread)
            n = n_epochs * per_epoch
            speed, accel, gap, rel_speed = _simulate_event(
                v0, g0, vl0, v_ctx, n_epochs, per_epoch, SAMPLE_PERIOD,
                cum, levels, sv, dv,
                rng.random(n_epochs), rng.standard_normal(n), rng.standard_normal(n),
                s.accel_jitter, s.lead_relax, s.lead_accel_noise,
            )
            bad = (speed < lo_v) | (speed > hi_v) | (gap <= 0) | (gap >= hi_d)
            if bad.any():
                n = (int(np.argmax(bad)) // per_epoch) * per_epoch
                speed, accel, gap, rel_speed = speed[:n], accel[:n], gap[:n], rel_speed[:n]
            if n >= s.min_epochs * per_epoch:
                break
        else:
            raise RuntimeError(
                f"generator could not keep state {profile.preferred_state_index} "
                f"inside the car-following envelope after {s.max_tries} tries"
            )
        timestamp = np.round(t_event + SAMPLE_PERIOD * np.arange(n), 6)
        events.append(CarFollowingEvent(driver_id, timestamp, speed, accel, gap, rel_speed))
        t_event = float(timestamp[-1]) + 60.0
    return events


# --------------------------------------------------------------------------
# event documents


def events_to_json(driver_id: str, events: list[CarFollowingEvent]) -> str:
    doc = {"driver_id": driver_id, "events": [ev.to_dict() for ev in events]}
    return json.dumps(doc, separators=(",", ":"))


def events_from_json(text: str) -> tuple[str, list[CarFollowingEvent]]:
    doc = json.loads(text)
    driver_id = str(doc["driver_id"])
    return driver_id, [CarFollowingEvent.from_dict(driver_id, e) for e in doc["events"]]
