"""Car-following POMDP with a hidden lead-driver intention.

The state is the longitudinal kinematics of ego and lead vehicle plus the
lead driver's intention, which only shows through the lead's acceleration.
Rewards come from a learned 5 x 5 (speed, gap) weight grid; a fixed cost is
charged whenever the gap drops below a safety threshold.

Everything the planner needs per step is packed into two flat arrays (see
:meth:`PaccModel.packed`) so the search kernel can run under numba.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from ._accel import njit
from .data import DEFAULT_SPEC, N_STATES, DiscretizationSpec
from .irl import normalize_weights


class Intention(IntEnum):
    HESITATING = 0
    NORMAL = 1
    AGGRESSIVE = 2


EGO_ACCELS = (-0.6, 0.0, 0.6)
LEAD_ACCELS = (-0.5, 0.0, 0.5)
INTENTION_TABLE = (
    (0.3, 0.4, 0.3),  # hesitating
    (0.1, 0.8, 0.1),  # normal
    (0.4, 0.2, 0.4),  # aggressive
)


@dataclass(frozen=True)
class PaccState:
    v_ego: float
    y_ego: float
    v_lead: float
    y_lead: float
    intention: Intention = Intention.NORMAL

    @property
    def gap(self) -> float:
        return self.y_lead - self.y_ego

    def as_array(self) -> np.ndarray:
        return np.array([self.v_ego, self.y_ego, self.v_lead, self.y_lead, float(self.intention)])

    @classmethod
    def from_array(cls, x) -> "PaccState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]), Intention(int(x[4])))


class KinObservation(NamedTuple):
    v_ego: float
    y_ego: float
    v_lead: float
    y_lead: float


@dataclass
class ModelConfig:
    """Every tunable of the POMDP; the defaults are the reference setup."""

    speed_edges: list = field(default_factory=lambda: list(DEFAULT_SPEC.speed_edges))
    distance_edges: list = field(default_factory=lambda: list(DEFAULT_SPEC.distance_edges))
    ego_accels: list = field(default_factory=lambda: list(EGO_ACCELS))
    lead_accels: list = field(default_factory=lambda: list(LEAD_ACCELS))
    intention_table: list = field(default_factory=lambda: [list(r) for r in INTENTION_TABLE])
    cost_value: float = 10.0
    cost_threshold: float = 2.0
    offgrid_reward: float = -1.0
    discount: float = 0.95
    dt: float = 1.0
    horizon: int = 120
    initial_v_ego: float = 30.0
    initial_v_lead: float = 30.0
    initial_gap: float = 40.0

    def __post_init__(self):
        table = np.asarray(self.intention_table, dtype=float)
        if table.shape != (3, len(self.lead_accels)):
            raise ValueError("intention_table must have one row per intention and one column per lead accel")
        if np.any(table < 0) or not np.allclose(table.sum(axis=1), 1.0):
            raise ValueError("intention_table rows must be probability vectors")
        if self.cost_threshold <= 0 or self.dt <= 0 or self.horizon < 1:
            raise ValueError("cost_threshold, dt and horizon must be positive")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        return cls(**doc)


# --------------------------------------------------------------------------
# packed layout used by the kernels
#
# pf = [dt, cost_value, cost_threshold, offgrid_reward,
#       ego_accels (A), lead_accels (L), intention cumulative table (3 * L),
#       speed_edges (ns + 1), distance_edges (nd + 1), weights (ns * nd)]
# pi = [A, L, ns, nd]

_F_DT, _F_COST, _F_THRESH, _F_OFFGRID, _F_BASE = 0, 1, 2, 3, 4


@njit
def _find_bin(x, edges):
    n = edges.shape[0] - 1
    if x < edges[0] or x > edges[n]:
        return -1
    i = 0
    while i < n - 1 and x >= edges[i + 1]:
        i += 1
    return i


@njit
def _advance(v, y, a, dt):
    """Constant-acceleration step that stops at zero speed instead of reversing."""
    v_new = v + a * dt
    if v_new >= 0.0:
        return v_new, y + v * dt + 0.5 * a * dt * dt
    t_stop = v / -a
    return 0.0, y + v * t_stop + 0.5 * a * t_stop * t_stop


@njit
def pacc_reward_cost(pf, pi, v_ego, gap):
    n_act = pi[0]
    n_lead = pi[1]
    ns = pi[2]
    nd = pi[3]
    off = _F_BASE + n_act + n_lead + 3 * n_lead
    speed_edges = pf[off:off + ns + 1]
    dist_edges = pf[off + ns + 1:off + ns + nd + 2]
    weights = pf[off + ns + nd + 2:off + ns + nd + 2 + ns * nd]
    i = _find_bin(v_ego, speed_edges)
    j = _find_bin(gap, dist_edges)
    if i < 0 or j < 0:
        reward = pf[_F_OFFGRID]
    else:
        reward = weights[i * nd + j]
    cost = pf[_F_COST] if gap < pf[_F_THRESH] else 0.0
    return reward, cost


@njit
def pacc_step(pf, pi, state, action, u, out):
    """One model step for the planner.

    ``u`` in [0, 1) selects the lead acceleration from the intention row.
    Writes the next state to ``out`` and returns (observation bucket,
    reward, cost, terminal); reward and cost are those of the next state.
    """
    n_act = pi[0]
    n_lead = pi[1]
    dt = pf[_F_DT]
    a = pf[_F_BASE + action]
    intent = int(state[4])
    cum0 = _F_BASE + n_act + n_lead + intent * n_lead
    k = 0
    while k < n_lead - 1 and u >= pf[cum0 + k]:
        k += 1
    a_lead = pf[_F_BASE + n_act + k]
    v_e, y_e = _advance(state[0], state[1], a, dt)
    v_l, y_l = _advance(state[2], state[3], a_lead, dt)
    out[0] = v_e
    out[1] = y_e
    out[2] = v_l
    out[3] = y_l
    out[4] = state[4]
    gap = y_l - y_e
    reward, cost = pacc_reward_cost(pf, pi, v_e, gap)
    return k, reward, cost, gap <= 0.0


class PaccModel:
    """Immutable POMDP: kinematics, lead-intention model, reward grid and cost."""

    state_dim = 5

    def __init__(self, weights, config: ModelConfig | None = None, normalize: bool = True):
        self.config = config or ModelConfig()
        c = self.config
        w = np.asarray(weights, dtype=float)
        ns, nd = len(c.speed_edges) - 1, len(c.distance_edges) - 1
        if w.shape != (ns * nd,):
            raise ValueError(f"expected {ns * nd} reward weights, got shape {w.shape}")
        self.weights = normalize_weights(w) if normalize else w.copy()
        self.spec = DiscretizationSpec(tuple(c.speed_edges), tuple(c.distance_edges))
        self.ego_accels = np.asarray(c.ego_accels, dtype=float)
        self.lead_accels = np.asarray(c.lead_accels, dtype=float)
        self.intention_table = np.asarray(c.intention_table, dtype=float)
        cum = np.cumsum(self.intention_table, axis=1)
        cum[:, -1] = 1.0
        self._pf = np.concatenate([
            [c.dt, c.cost_value, c.cost_threshold, c.offgrid_reward],
            self.ego_accels, self.lead_accels, cum.ravel(),
            np.asarray(c.speed_edges, dtype=float), np.asarray(c.distance_edges, dtype=float),
            self.weights,
        ])
        self._pi = np.array([len(self.ego_accels), len(self.lead_accels), ns, nd], dtype=np.int64)
        self._pf.setflags(write=False)
        self._pi.setflags(write=False)

    # -- planner interface -------------------------------------------------
    @property
    def n_actions(self) -> int:
        return len(self.ego_accels)

    @property
    def n_observations(self) -> int:
        return len(self.lead_accels)

    @property
    def discount(self) -> float:
        return self.config.discount

    def packed(self):
        return self._pf, self._pi

    step_kernel = staticmethod(pacc_step)

    # -- model operations --------------------------------------------------
    def initial_state(self, intention: Intention = Intention.NORMAL) -> PaccState:
        c = self.config
        return PaccState(c.initial_v_ego, 0.0, c.initial_v_lead, c.initial_gap, Intention(intention))

    def sample_lead_accel(self, intention: Intention, rng: np.random.Generator) -> float:
        return float(self.lead_accels[self._lead_index(intention, rng.random())])

    def _lead_index(self, intention, u: float) -> int:
        cum = np.cumsum(self.intention_table[int(intention)])
        return int(min(np.searchsorted(cum, u, side="right"), len(cum) - 1))

    def transition(self, state: PaccState, action: int, rng: np.random.Generator,
                   dt: float | None = None) -> PaccState:
        a_lead = self.sample_lead_accel(state.intention, rng)
        return self.transition_with(state, action, a_lead, dt)

    def transition_with(self, state: PaccState, action: int, a_lead: float,
                        dt: float | None = None) -> PaccState:
        """Deterministic kinematics for a given lead acceleration."""
        dt = self.config.dt if dt is None else dt
        if dt <= 0:
            raise ValueError("dt must be > 0")
        v_e, y_e = _advance(state.v_ego, state.y_ego, float(self.ego_accels[action]), dt)
        v_l, y_l = _advance(state.v_lead, state.y_lead, float(a_lead), dt)
        return PaccState(v_e, y_e, v_l, y_l, state.intention)

    @staticmethod
    def observe(state: PaccState) -> KinObservation:
        return KinObservation(state.v_ego, state.y_ego, state.v_lead, state.y_lead)

    def reward_of_state(self, state: PaccState) -> float:
        return float(pacc_reward_cost(self._pf, self._pi, state.v_ego, state.gap)[0])

    def cost_of_state(self, state: PaccState) -> float:
        return self.config.cost_value if state.gap < self.config.cost_threshold else 0.0

    def is_terminal(self, state: PaccState, elapsed_steps: int, horizon: int | None = None):
        """``(terminal, collision)`` for a state reached after ``elapsed_steps``."""
        horizon = self.config.horizon if horizon is None else horizon
        collision = state.gap <= 0.0
        return bool(collision or elapsed_steps >= horizon), bool(collision)


def sample_lead_accel(intention: Intention, rng: np.random.Generator,
                      table=INTENTION_TABLE, accels=LEAD_ACCELS) -> float:
    """Lead acceleration drawn from the intention's row of the table."""
    p = np.asarray(table, dtype=float)[int(intention)]
    return float(np.asarray(accels)[rng.choice(len(p), p=p)])


def peak_state(weights) -> int:
    return int(np.argmax(np.asarray(weights)[:N_STATES]))
