"""Cost-constrained POMCP.

Monte-Carlo tree search over a particle belief that keeps separate
discounted reward and cost estimates per (node, action). Actions are
selected by UCB on ``Q_R - lambda * Q_C``; after every simulation the
Lagrange multiplier moves by dual ascent on the root cost excess.

The search itself is a kernel over flat arrays, built once per model step
function. All randomness is drawn up front (one row of uniforms per
simulation: the particle, then an action and a transition draw per depth),
so compiled and interpreted runs give identical trees.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import json
import logging
import math
import time
import warnings

import numpy as np

from ._accel import njit
from .model import Intention, KinObservation, PaccModel, PaccState

log = logging.getLogger(__name__)


class PlanningError(RuntimeError):
    pass


@dataclass
class PlannerConfig:
    n_simulations: int = 1000
    uct_c: float = 2.0
    cost_limit: float = 0.5
    discount: float = 0.95
    max_depth: int = 10
    lambda_init: float = 1.0
    lambda_step: float = 0.1
    lambda_max: float = 100.0
    time_budget: float = 1.0
    n_particles: int = 500
    reuse_tree: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_simulations < 1 or self.max_depth < 1 or self.n_particles < 1:
            raise ValueError("n_simulations, max_depth and n_particles must be >= 1")
        if self.uct_c <= 0 or self.lambda_step <= 0 or self.lambda_max <= 0:
            raise ValueError("uct_c, lambda_step and lambda_max must be > 0")
        if self.cost_limit < 0 or self.lambda_init < 0:
            raise ValueError("cost_limit and lambda_init must be >= 0")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if self.reuse_tree:
            raise NotImplementedError("tree reuse across decisions is not supported")

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["cost_limit"]):
            d["cost_limit"] = "inf"
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "PlannerConfig":
        doc = dict(doc)
        if isinstance(doc.get("cost_limit"), str):
            doc["cost_limit"] = float(doc["cost_limit"])
        return cls(**doc)


# --------------------------------------------------------------------------
# search kernel
#
# Tree arrays: node_n[node], act_n[node, a], q_r[node, a], q_c[node, a] and
# child[node, a, obs] (-1 when absent). Node 0 is the root.


@njit
def _ucb_action(node, n_actions, node_n, act_n, q_r, q_c, lam, uct_c):
    best = 0
    best_score = -np.inf
    log_n = math.log(max(node_n[node], 1))
    for a in range(n_actions):
        n_a = act_n[node, a]
        if n_a == 0:
            return a
        score = q_r[node, a] - lam * q_c[node, a] + uct_c * math.sqrt(log_n / n_a)
        if score > best_score:
            best_score = score
            best = a
    return best


@njit
def _greedy_action(n_actions, act_n, q_r, q_c, lam):
    best = -1
    best_score = -np.inf
    for a in range(n_actions):
        if act_n[0, a] == 0:
            continue
        score = q_r[0, a] - lam * q_c[0, a]
        if best < 0 or score > best_score:
            best_score = score
            best = a
    return best


def _build_search(step):
    def run_simulations(pf, pi, particles, uniforms, sim_start, sim_stop, max_depth,
                        gamma, uct_c, cost_limit, lam_state, kappa, lam_max,
                        n_actions, node_n, act_n, q_r, q_c, child, n_nodes_state):
        n_part = particles.shape[0]
        dim = particles.shape[1]
        capacity = node_n.shape[0]
        state = np.empty(dim)
        nxt = np.empty(dim)
        path_node = np.empty(max_depth, dtype=np.int64)
        path_act = np.empty(max_depth, dtype=np.int64)
        rew = np.empty(max_depth)
        cst = np.empty(max_depth)
        constrained = cost_limit < np.inf
        lam = lam_state[0]
        n_nodes = n_nodes_state[0]
        for sim in range(sim_start, sim_stop):
            u = uniforms[sim]
            p = int(u[0] * n_part)
            if p >= n_part:
                p = n_part - 1
            for i in range(dim):
                state[i] = particles[p, i]
            node = 0
            depth = 0
            n_tree = 0
            while depth < max_depth:
                if node >= 0:
                    a = _ucb_action(node, n_actions, node_n, act_n, q_r, q_c, lam, uct_c)
                    path_node[n_tree] = node
                    path_act[n_tree] = a
                    n_tree += 1
                else:
                    a = int(u[1 + 2 * depth] * n_actions)
                    if a >= n_actions:
                        a = n_actions - 1
                obs, r, c, term = step(pf, pi, state, a, u[2 + 2 * depth], nxt)
                rew[depth] = r
                cst[depth] = c
                for i in range(dim):
                    state[i] = nxt[i]
                depth += 1
                if term:
                    break
                if node >= 0:
                    ch = child[node, a, obs]
                    if ch < 0:
                        # grow the tree by one node, then finish with a rollout
                        if n_nodes < capacity:
                            child[node, a, obs] = n_nodes
                            n_nodes += 1
                        node = -1
                    else:
                        node = ch
            g_r = 0.0
            g_c = 0.0
            for d in range(depth - 1, -1, -1):
                g_r = rew[d] + gamma * g_r
                g_c = cst[d] + gamma * g_c
                if d < n_tree:
                    nd = path_node[d]
                    a = path_act[d]
                    node_n[nd] += 1
                    act_n[nd, a] += 1
                    q_r[nd, a] += (g_r - q_r[nd, a]) / act_n[nd, a]
                    q_c[nd, a] += (g_c - q_c[nd, a]) / act_n[nd, a]
            if constrained:
                a_g = _greedy_action(n_actions, act_n, q_r, q_c, lam)
                lam = lam + kappa * (q_c[0, a_g] - cost_limit)
                if lam < 0.0:
                    lam = 0.0
                elif lam > lam_max:
                    lam = lam_max
        lam_state[0] = lam
        n_nodes_state[0] = n_nodes

    # a closure over a compiled step function cannot use the on-disk cache
    return njit(cache=False)(run_simulations)


_KERNELS: dict = {}


def search_kernel(step):
    """Compiled simulation loop for a model step function, built once per step."""
    key = id(step)
    if key not in _KERNELS:
        _KERNELS[key] = (_build_search(step), step)
    return _KERNELS[key][0]


# --------------------------------------------------------------------------
# tabular toy model (used to check the search against exact values)
#
# pf = [cumulative P (S*A*S), R (S*A), C (S*A), obs_of (S), terminal (S)]
# pi = [S, A, O]


@njit
def tabular_step(pf, pi, state, action, u, out):
    n_s = pi[0]
    n_a = pi[1]
    s = int(state[0])
    base = (s * n_a + action) * n_s
    k = 0
    while k < n_s - 1 and u >= pf[base + k]:
        k += 1
    out[0] = k
    off_r = n_s * n_a * n_s
    off_c = off_r + n_s * n_a
    off_o = off_c + n_s * n_a
    off_t = off_o + n_s
    reward = pf[off_r + s * n_a + action]
    cost = pf[off_c + s * n_a + action]
    return int(pf[off_o + k]), reward, cost, pf[off_t + k] > 0.5


class TabularModel:
    """Small discrete MDP/POMDP with rewards and costs on (state, action)."""

    state_dim = 1
    step_kernel = staticmethod(tabular_step)

    def __init__(self, transitions, rewards, costs, obs_of=None, terminal=None):
        p = np.asarray(transitions, dtype=float)
        n_s, n_a, _ = p.shape
        if p.shape != (n_s, n_a, n_s) or not np.allclose(p.sum(axis=2), 1.0):
            raise ValueError("transitions must be (S, A, S) with rows summing to 1")
        r = np.asarray(rewards, dtype=float).reshape(n_s, n_a)
        c = np.asarray(costs, dtype=float).reshape(n_s, n_a)
        obs = np.arange(n_s) if obs_of is None else np.asarray(obs_of, dtype=int)
        term = np.zeros(n_s) if terminal is None else np.asarray(terminal, dtype=float)
        cum = np.cumsum(p, axis=2)
        cum[:, :, -1] = 1.0
        self.transitions, self.rewards, self.costs = p, r, c
        self.obs_of, self.terminal = obs, term
        self._pf = np.concatenate([cum.ravel(), r.ravel(), c.ravel(), obs.astype(float), term])
        self._pi = np.array([n_s, n_a, int(obs.max()) + 1], dtype=np.int64)

    @property
    def n_actions(self) -> int:
        return int(self._pi[1])

    @property
    def n_observations(self) -> int:
        return int(self._pi[2])

    def packed(self):
        return self._pf, self._pi

    @classmethod
    def deterministic_tree(cls, rewards, costs=None):
        """Depth-2 tree: ``rewards[a]`` at the root, ``rewards[a, b]`` below.

        ``rewards`` is ``(r1, r2)`` with ``r1`` of shape (A,) and ``r2`` of
        shape (A, A); the episode ends after two steps.
        """
        r1, r2 = (np.asarray(x, dtype=float) for x in rewards)
        n_a = r1.shape[0]
        if costs is None:
            c1, c2 = np.zeros(n_a), np.zeros((n_a, n_a))
        else:
            c1, c2 = (np.asarray(x, dtype=float) for x in costs)
        # states: 0 root, 1..A after the first action, A+1 absorbing end
        n_s = n_a + 2
        p = np.zeros((n_s, n_a, n_s))
        r = np.zeros((n_s, n_a))
        c = np.zeros((n_s, n_a))
        for a in range(n_a):
            p[0, a, 1 + a] = 1.0
            r[0, a], c[0, a] = r1[a], c1[a]
            for b in range(n_a):
                p[1 + a, b, n_s - 1] = 1.0
                r[1 + a, b], c[1 + a, b] = r2[a, b], c2[a, b]
        p[n_s - 1, :, n_s - 1] = 1.0
        term = np.zeros(n_s)
        term[n_s - 1] = 1.0
        return cls(p, r, c, terminal=term)

    @classmethod
    def one_step(cls, rewards, costs):
        """Single decision followed by termination."""
        r = np.asarray(rewards, dtype=float)
        c = np.asarray(costs, dtype=float)
        n_a = r.shape[0]
        p = np.zeros((2, n_a, 2))
        p[:, :, 1] = 1.0
        rr = np.zeros((2, n_a))
        cc = np.zeros((2, n_a))
        rr[0], cc[0] = r, c
        return cls(p, rr, cc, terminal=[0.0, 1.0])


# --------------------------------------------------------------------------
# planning


@dataclass
class Diagnostics:
    action: int
    q_r: list
    q_c: list
    counts: list
    lam: float
    n_simulations: int
    n_nodes: int
    planning_time: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _root_particles(belief) -> np.ndarray:
    particles = belief.particles if hasattr(belief, "particles") else belief
    particles = np.ascontiguousarray(np.atleast_2d(np.asarray(particles, dtype=float)))
    if particles.shape[0] == 0 or particles.size == 0:
        raise PlanningError("cannot plan from an empty belief")
    return particles


def plan(belief, config: PlannerConfig, model, seed: int | None = None,
         max_depth: int | None = None) -> tuple[int, Diagnostics]:
    """Run the search from ``belief`` and return (action, diagnostics).

    ``max_depth`` overrides the configured depth, e.g. to stop at the
    episode horizon. The time budget is checked between chunks of
    simulations; at least one simulation always runs before it is consulted.
    """
    particles = _root_particles(belief)
    if config.time_budget <= 0:
        raise PlanningError("time budget exhausted before the first simulation")
    seed = config.seed if seed is None else seed
    depth = config.max_depth if max_depth is None else max(1, min(max_depth, config.max_depth))
    n_sims = config.n_simulations
    n_a = model.n_actions
    n_o = model.n_observations
    pf, pi = model.packed()
    kernel = search_kernel(model.step_kernel)

    rng = np.random.default_rng(seed)
    uniforms = rng.random((n_sims, 1 + 2 * depth))
    capacity = n_sims + 1
    node_n = np.zeros(capacity, dtype=np.int64)
    act_n = np.zeros((capacity, n_a), dtype=np.int64)
    q_r = np.zeros((capacity, n_a))
    q_c = np.zeros((capacity, n_a))
    child = np.full((capacity, n_a, n_o), -1, dtype=np.int64)
    n_nodes = np.ones(1, dtype=np.int64)
    cost_limit = float(config.cost_limit)
    # without a constraint the multiplier plays no role and is held at zero
    lam = np.array([config.lambda_init if math.isfinite(cost_limit) else 0.0])

    t0 = time.perf_counter()
    done = 0
    chunk = 1
    while done < n_sims:
        stop = min(n_sims, done + chunk)
        kernel(pf, pi, particles, uniforms, done, stop, depth, config.discount, config.uct_c,
               cost_limit, lam, config.lambda_step, config.lambda_max, n_a,
               node_n, act_n, q_r, q_c, child, n_nodes)
        elapsed = time.perf_counter() - t0
        per_sim = elapsed / stop
        done = stop
        if done < n_sims and elapsed + per_sim * min(chunk * 2, n_sims - done) >= config.time_budget:
            # the next chunk would overrun the budget
            break
        chunk = min(chunk * 2, 256)
    elapsed = time.perf_counter() - t0

    action = _greedy_action(n_a, act_n, q_r, q_c, lam[0])
    diag = Diagnostics(
        action=int(action),
        q_r=[float(x) for x in q_r[0]],
        q_c=[float(x) for x in q_c[0]],
        counts=[int(x) for x in act_n[0]],
        lam=float(lam[0]),
        n_simulations=int(done),
        n_nodes=int(n_nodes[0]),
        planning_time=float(elapsed),
    )
    return int(action), diag


def warm_up(model) -> None:
    """Compile the search kernel for ``model`` outside any timed region."""
    n = model.state_dim
    particles = np.zeros((1, n))
    if isinstance(model, PaccModel):
        particles = model.initial_state().as_array()[None, :]
    plan(particles, PlannerConfig(n_simulations=2, max_depth=2, time_budget=1e9), model)


# --------------------------------------------------------------------------
# belief over the lead intention


@dataclass
class Belief:
    """Unweighted particles; each row is a PaccState array."""

    particles: np.ndarray

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        if self.particles.shape[0] < 1:
            raise ValueError("belief needs at least one particle")

    def __len__(self) -> int:
        return self.particles.shape[0]

    @property
    def intentions(self) -> np.ndarray:
        return self.particles[:, 4].astype(int)

    @classmethod
    def uniform(cls, state: PaccState, n_particles: int) -> "Belief":
        """Intentions assigned round-robin, so the split is as even as possible."""
        p = np.tile(state.as_array(), (n_particles, 1))
        p[:, 4] = np.arange(n_particles) % len(Intention)
        return cls(p)


def intention_posterior(belief: Belief) -> np.ndarray:
    counts = np.bincount(belief.intentions, minlength=len(Intention)).astype(float)
    return counts / counts.sum()


def belief_update(belief: Belief, action: int, observation: KinObservation, model: PaccModel,
                  rng: np.random.Generator, snap_tol: float = 1e-6) -> Belief:
    """Bayes update on the realized lead acceleration, then resampling."""
    if len(belief) == 0:
        raise ValueError("empty belief")
    dt = model.config.dt
    prior = belief.particles[0]
    a_lead = (observation.v_lead - prior[2]) / dt
    accels = model.lead_accels
    k = int(np.argmin(np.abs(accels - a_lead)))
    stopped = observation.v_lead == 0.0 and a_lead >= accels[k] - snap_tol
    if abs(accels[k] - a_lead) > snap_tol and not stopped:
        warnings.warn(f"lead acceleration {a_lead:.4f} is not in the model's action set; "
                      f"snapping to {accels[k]}", RuntimeWarning, stacklevel=2)
    if stopped and abs(accels[k] - a_lead) > snap_tol:
        # the lead was clamped at zero speed; any braking is consistent
        lik = model.intention_table[:, accels <= 0].sum(axis=1)
    else:
        lik = model.intention_table[:, k]
    n = len(belief)
    w = lik[belief.intentions]
    if w.sum() <= 0.0:
        new_int = rng.integers(len(Intention), size=n)
    else:
        new_int = belief.intentions[rng.choice(n, size=n, p=w / w.sum())]
    particles = np.empty((n, 5))
    particles[:, 0] = observation.v_ego
    particles[:, 1] = observation.y_ego
    particles[:, 2] = observation.v_lead
    particles[:, 3] = observation.y_lead
    particles[:, 4] = new_int
    return Belief(particles)


# --------------------------------------------------------------------------
# closed-loop episode


@dataclass
class EpisodeStep:
    t: int
    state: PaccState
    action: int
    observation: KinObservation
    reward: float
    cost: float
    planning_time: float
    lam: float
    n_simulations: int


@dataclass
class Episode:
    intention: Intention
    steps: list
    collision: bool

    @property
    def cumulative_reward(self) -> float:
        return float(sum(s.reward for s in self.steps))

    @property
    def cumulative_cost(self) -> float:
        return float(sum(s.cost for s in self.steps))

    def discounted(self, gamma: float) -> tuple[float, float]:
        r = sum(s.reward * gamma ** i for i, s in enumerate(self.steps))
        c = sum(s.cost * gamma ** i for i, s in enumerate(self.steps))
        return float(r), float(c)

    def rows(self):
        """Per-step records: t, state before the step, action, outcome."""
        for s in self.steps:
            st, ob = s.state, s.observation
            yield (s.t, st.v_ego, st.y_ego, st.v_lead, st.y_lead, st.gap, int(st.intention),
                   s.action, ob.v_ego, ob.y_ego, ob.v_lead, ob.y_lead, ob.y_lead - ob.y_ego,
                   s.reward, s.cost, s.planning_time, s.lam, s.n_simulations)

    CSV_HEADER = ("t,v_ego,y_ego,v_lead,y_lead,gap,intention,action,obs_v_ego,obs_y_ego,"
                  "obs_v_lead,obs_y_lead,obs_gap,reward,cost,planning_time,lambda,n_simulations")


def run_episode(model: PaccModel, config: PlannerConfig, seed: int,
                intention: Intention | None = None, horizon: int | None = None) -> Episode:
    """Plan, act, observe and update the belief until the episode ends.

    Deterministic given ``seed`` as long as the time budget never binds.
    """
    horizon = model.config.horizon if horizon is None else horizon
    env_ss, belief_ss, plan_ss = np.random.SeedSequence(seed).spawn(3)
    env_rng = np.random.default_rng(env_ss)
    belief_rng = np.random.default_rng(belief_ss)
    plan_seeds = np.random.default_rng(plan_ss).integers(0, 2**63 - 1, size=horizon)
    if intention is None:
        intention = Intention(int(env_rng.integers(len(Intention))))
    state = model.initial_state(intention)
    belief = Belief.uniform(state, config.n_particles)
    steps = []
    collision = False
    for t in range(horizon):
        action, diag = plan(belief, config, model, seed=int(plan_seeds[t]), max_depth=horizon - t)
        nxt = model.transition(state, action, env_rng)
        obs = model.observe(nxt)
        steps.append(EpisodeStep(t, state, action, obs, model.reward_of_state(nxt),
                                 model.cost_of_state(nxt), diag.planning_time, diag.lam,
                                 diag.n_simulations))
        terminal, collision = model.is_terminal(nxt, t + 1, horizon)
        state = nxt
        if terminal:
            break
        belief = belief_update(belief, action, obs, model, belief_rng)
    return Episode(Intention(intention), steps, collision)
