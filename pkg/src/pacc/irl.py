"""Model-free reward learning by Q-averaging.

The reward is linear in 25 state-indicator features, so the empirical
Q-value of every demonstrated (state, action) pair is ``F[s, a] @ w`` where
``F[s, a]`` is the average discounted feature count of the reward-to-go
following each occurrence of the pair. The weights are fit by maximizing
the likelihood of the demonstrated actions under a Boltzmann policy over
those Q-values.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import json
import logging

import numpy as np

from ._accel import njit
from .data import N_ACTIONS, N_STATES, Demonstration

log = logging.getLogger(__name__)


class IrlError(RuntimeError):
    pass


@dataclass(frozen=True)
class IrlConfig:
    discount: float = 0.9
    temperature: float = 1.0
    learning_rate: float = 0.05
    max_iterations: int = 500
    convergence_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if self.temperature <= 0 or self.learning_rate <= 0 or self.convergence_tol <= 0:
            raise ValueError("temperature, learning_rate and convergence_tol must be > 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass
class LearnedReward:
    weights: np.ndarray
    log_likelihood: float
    n_iterations: int
    converged: bool
    trace: list = field(default_factory=list, repr=False)

    def to_json(self, driver_id: str, config: IrlConfig) -> str:
        return json.dumps({
            "driver_id": driver_id,
            "weights": [float(x) for x in self.weights],
            "log_likelihood": float(self.log_likelihood),
            "config": asdict(config),
        })


def reward_of(state_index: int, weights) -> float:
    """Reward of a state: the weight of its indicator feature."""
    return float(np.asarray(weights, dtype=float)[state_index])


@njit
def _feature_sums(states, actions, starts, gamma, n_states, n_actions):
    # starts: offsets of each episode into states/actions, with a final sentinel
    sums = np.zeros((n_states, n_actions, n_states))
    counts = np.zeros((n_states, n_actions), dtype=np.int64)
    tail = np.zeros(n_states)
    for e in range(starts.shape[0] - 1):
        tail[:] = 0.0
        for t in range(starts[e + 1] - 1, starts[e] - 1, -1):
            for m in range(n_states):
                tail[m] *= gamma
            s = states[t]
            a = actions[t]
            tail[s] += 1.0
            counts[s, a] += 1
            for m in range(n_states):
                sums[s, a, m] += tail[m]
    return sums, counts


def _concat(demos: list[Demonstration]):
    if not demos or sum(len(d) for d in demos) == 0:
        raise IrlError("no demonstrated steps")
    states = np.concatenate([d.states for d in demos]).astype(np.int64)
    actions = np.concatenate([d.actions for d in demos]).astype(np.int64)
    starts = np.concatenate([[0], np.cumsum([len(d) for d in demos])]).astype(np.int64)
    return states, actions, starts


class QAveraging:
    """Discounted feature expectations of a demonstration set.

    Building this once per demonstration set makes every later Q-table a
    single matrix product with the weights.
    """

    def __init__(self, demos: list[Demonstration], discount: float):
        states, actions, starts = _concat(demos)
        sums, counts = _feature_sums(states, actions, starts, float(discount), N_STATES, N_ACTIONS)
        self.discount = discount
        self.counts = counts
        self.visited = counts > 0
        self.features = np.zeros_like(sums)
        self.features[self.visited] = sums[self.visited] / counts[self.visited][:, None]
        self.state_counts = counts.sum(axis=1)
        self.n_steps = int(counts.sum())

    def q_table(self, weights) -> tuple[np.ndarray, np.ndarray]:
        """Q-table and, per (s, a), the (s, a') whose features it copies."""
        w = np.asarray(weights, dtype=float)
        q = self.features @ w
        source = np.tile(np.arange(N_ACTIONS), (N_STATES, 1))
        if not self.visited.any():
            return q, source
        floor = q[self.visited].min() - 1.0
        for s in range(N_STATES):
            vis = self.visited[s]
            if vis.all():
                continue
            if vis.any():
                idx = np.flatnonzero(vis)
                amin = idx[np.argmin(q[s, idx])]
                q[s, ~vis] = q[s, amin] - 1.0
                source[s, ~vis] = amin
            else:
                q[s] = floor
        return q, source

    def log_likelihood(self, weights, temperature: float, with_grad: bool = False):
        q, source = self.q_table(weights)
        z = temperature * q
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        logp = z - lse[:, None]
        ll = float((self.counts * logp).sum())
        if not with_grad:
            return ll
        pi = np.exp(logp)
        rows = np.arange(N_STATES)[:, None]
        feats = self.features[rows, source]  # (25, 5, 25)
        expected = np.einsum("sa,sam->sm", pi, feats)
        grad = temperature * (
            np.einsum("sa,sam->m", self.counts, self.features)
            - self.state_counts @ expected
        )
        return ll, grad


def estimate_q(demos: list[Demonstration], weights, discount: float) -> tuple[np.ndarray, np.ndarray]:
    """Average discounted reward-to-go for every (state, action).

    Returns ``(q, counts)``, both 25 x 5. Reward-to-go is truncated at the
    end of each demonstration. At a visited state, unvisited actions get
    the lowest visited Q of that state minus one; at unvisited states every
    action gets the global visited minimum minus one.
    """
    qa = QAveraging(demos, discount)
    q, _ = qa.q_table(weights)
    return q, qa.counts.copy()


def log_likelihood(demos: list[Demonstration], weights, config: IrlConfig = IrlConfig()) -> float:
    """Log-probability of the demonstrated actions under a softmax policy over Q."""
    return QAveraging(demos, config.discount).log_likelihood(weights, config.temperature)


def learn_reward(demos: list[Demonstration], config: IrlConfig = IrlConfig()) -> LearnedReward:
    """Gradient ascent on the action log-likelihood, starting from zero weights.

    Steps follow the analytic gradient of the per-step mean likelihood, so
    the learning rate does not depend on how much data a driver has. A
    step that would lower the likelihood is rejected and the step size
    halved, so accepted iterates never lose likelihood. Stops when the mean
    per-step gain drops below ``convergence_tol`` or after
    ``max_iterations`` accepted steps.
    """
    qa = QAveraging(demos, config.discount)
    beta = config.temperature
    w = np.zeros(N_STATES)
    ll, grad = qa.log_likelihood(w, beta, with_grad=True)
    lr = config.learning_rate
    n = qa.n_steps
    converged = False
    trace = [ll]
    it = 0
    while it < config.max_iterations:
        for _ in range(60):
            w_new = w + lr * grad / n
            ll_new, grad_new = qa.log_likelihood(w_new, beta, with_grad=True)
            if not np.isfinite(ll_new):
                raise IrlError(f"non-finite log-likelihood at iteration {it}")
            if ll_new >= ll:
                break
            lr *= 0.5
        else:
            converged = True
            break
        it += 1
        gain = (ll_new - ll) / n
        w, ll, grad = w_new, ll_new, grad_new
        trace.append(ll)
        if gain < config.convergence_tol:
            converged = True
            break
    log.debug("irl: %d iterations, ll=%.4f", it, ll)
    return LearnedReward(w, ll, it, converged, trace)


def normalize_weights(weights) -> np.ndarray:
    """Affine map of the weights onto [-1, 1] (min to -1, max to +1)."""
    w = np.asarray(weights, dtype=float)
    lo, hi = w.min(), w.max()
    if not hi > lo:
        raise ValueError("cannot normalize a constant weight vector")
    if lo == -1.0 and hi == 1.0:
        return w.copy()
    out = 2.0 * (w - lo) / (hi - lo) - 1.0
    out[w == lo] = -1.0
    out[w == hi] = 1.0
    return out
