"""Driving-style prediction from a handful of events.

A driver with little data is summarized by a Gaussian mixture over its
aggregated (speed, distance) points; each style cluster gets a mixture fit
on the pooled points of its member drivers. The driver is assigned to the
cluster whose mixture is closest in Monte-Carlo KL divergence and inherits
that cluster's centroid reward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import io
import json
import logging
import warnings

import numpy as np

from .clustering import ClusterModel, _kmeanspp
from .data import CarFollowingEvent, Trajectory, aggregate, demonstration_from_points
from .irl import IrlConfig, learn_reward, normalize_weights

log = logging.getLogger(__name__)

REG_EPS = 1e-4
EM_TOL = 1e-6
EM_MAX_ITER = 300
DENSITY_FLOOR = 1e-300
DEFAULT_COMPONENTS = 3
DEFAULT_KL_SAMPLES = 10_000


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


class GmmError(ValueError):
    pass


@dataclass
class Gmm:
    weights: np.ndarray  # (M,)
    means: np.ndarray  # (M, d)
    covs: np.ndarray  # (M, d, d)
    log_likelihood_trace: list[float] = field(default_factory=list, repr=False)
    stopped_on_decrease: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covs = np.asarray(self.covs, dtype=float).reshape(len(self.weights), self.dim, self.dim)
        if abs(self.weights.sum() - 1.0) > 1e-9 or np.any(self.weights < 0):
            raise GmmError("mixture weights must be non-negative and sum to 1")
        try:
            self._chol = np.linalg.cholesky(self.covs)
        except np.linalg.LinAlgError as exc:
            raise GmmError("covariances must be positive definite") from exc

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_pdf(self, x) -> np.ndarray:
        """log N(x | mu_i, cov_i) for every sample and component, shape (n, M)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        diff = x[None, :, :] - self.means[:, None, :]
        z = np.linalg.solve(self._chol, diff.transpose(0, 2, 1))
        logdet = 2.0 * np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1)
        return -0.5 * ((z * z).sum(axis=1).T + logdet + self.dim * np.log(2 * np.pi))

    def log_pdf(self, x) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return _logsumexp_rows(self.component_log_pdf(x) + np.log(self.weights))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[comp] + np.einsum("nij,nj->ni", self._chol[comp], z)

    def to_dict(self) -> dict:
        return {"components": [
            {"weight": float(w), "mean": m.tolist(), "cov": c.tolist()}
            for w, m, c in zip(self.weights, self.means, self.covs)
        ]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "Gmm":
        comps = doc["components"]
        return cls(
            np.array([c["weight"] for c in comps]),
            np.array([c["mean"] for c in comps]),
            np.array([c["cov"] for c in comps]),
        )


def _m_step(x, resp, eps):
    nk = resp.sum(axis=0) + 1e-300
    weights = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    d = x.shape[1]
    covs = np.empty((len(nk), d, d))
    for i in range(len(nk)):
        diff = x - means[i]
        covs[i] = (resp[:, i, None] * diff).T @ diff / nk[i] + eps * np.eye(d)
    return weights, means, covs


def fit_gmm(samples, n_components: int = DEFAULT_COMPONENTS, seed: int = 0,
            reg: float = REG_EPS, tol: float = EM_TOL, max_iter: int = EM_MAX_ITER) -> Gmm:
    """Expectation-maximization fit of a Gaussian mixture.

    Components start from a k-means++ draw of centres with hard assignment
    to the nearest centre. ``reg`` is added to every covariance diagonal in
    each M-step. Iteration stops once the log-likelihood gain drops below
    ``tol`` or after ``max_iter`` iterations. Samples are put in a canonical
    order first, so the fit does not depend on how they were listed.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2:
        raise GmmError("samples must be an (n, d) array")
    if len(x) < 2 * n_components:
        raise GmmError(f"need at least {2 * n_components} samples for {n_components} components, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise GmmError("samples must be finite")
    x = x[np.lexsort(x.T[::-1])]
    rng = np.random.default_rng(seed)
    centres = _kmeanspp(x, n_components, rng)
    nearest = np.argmin(((x[:, None, :] - centres[None]) ** 2).sum(axis=2), axis=1)
    resp = np.zeros((len(x), n_components))
    resp[np.arange(len(x)), nearest] = 1.0
    gmm = Gmm(*_m_step(x, resp, reg))
    trace = []
    previous = gmm
    stopped_on_decrease = False
    for _ in range(max_iter):
        joint = gmm.component_log_pdf(x) + np.log(np.maximum(gmm.weights, 1e-300))
        norm = _logsumexp_rows(joint)
        ll = float(norm.sum())
        if not np.isfinite(ll):
            raise GmmError(f"non-finite log-likelihood after {len(trace)} EM iterations")
        if trace and ll < trace[-1]:
            # the eps*I term makes an M-step only approximately an EM step;
            # a loss counts as a gain below tol and the previous fit is kept
            gmm = previous
            stopped_on_decrease = True
            break
        trace.append(ll)
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            break
        previous = gmm
        gmm = Gmm(*_m_step(x, np.exp(joint - norm[:, None]), reg))
    gmm.log_likelihood_trace = trace
    gmm.stopped_on_decrease = stopped_on_decrease
    return gmm


@dataclass(frozen=True)
class KlEstimate:
    value: float
    n_samples: int
    std_error: float
    density_floor: float = DENSITY_FLOOR


def kl_divergence_mc(f: Gmm, g: Gmm, n_samples: int = DEFAULT_KL_SAMPLES, seed: int = 0) -> KlEstimate:
    """Monte-Carlo estimate of D(f || g) from samples of f."""
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    x = f.sample(n_samples, np.random.default_rng(seed))
    log_g = np.maximum(g.log_pdf(x), np.log(DENSITY_FLOOR))
    terms = f.log_pdf(x) - log_g
    return KlEstimate(float(terms.mean()), n_samples, float(terms.std(ddof=1) / np.sqrt(n_samples)))


@dataclass
class PredictionOutcome:
    driver_id: str
    kl: np.ndarray
    predicted_cluster: int
    reward: np.ndarray | None


def event_windows(event) -> np.ndarray:
    """(speed, distance, accel) window means of an event.

    Accepts a raw event or its already aggregated ``(n, 3)`` array.
    """
    if isinstance(event, Trajectory):
        return aggregate(event)
    return np.asarray(event, dtype=float).reshape(-1, 3)


def event_points(events) -> np.ndarray:
    """Aggregated (speed, distance) points of a list of events."""
    pts = [event_windows(ev)[:, :2] for ev in events]
    pts = [p for p in pts if len(p)]
    return np.concatenate(pts) if pts else np.empty((0, 2))


def predict_cluster(driver_samples, cluster_gmms: list[Gmm], n_components: int = DEFAULT_COMPONENTS,
                    n_samples: int = DEFAULT_KL_SAMPLES, seed: int = 0,
                    centroids=None, driver_id: str = "") -> PredictionOutcome:
    """Cluster whose mixture is closest in KL to the driver's own mixture.

    Every cluster is scored with the same Monte-Carlo draw, so identical
    cluster mixtures score identically and the lowest index wins the tie.
    """
    f = fit_gmm(driver_samples, n_components, seed)
    kl = np.array([kl_divergence_mc(f, g, n_samples, seed + 1).value for g in cluster_gmms])
    best = int(np.argmin(kl))
    reward = None if centroids is None else np.asarray(centroids)[best].copy()
    return PredictionOutcome(driver_id, kl, best, reward)


def cluster_gmms(model: ClusterModel, driver_points: dict[str, np.ndarray],
                 n_components: int = DEFAULT_COMPONENTS, seed: int = 0) -> list[Gmm]:
    """One mixture per cluster, fit on the pooled points of its members."""
    out = []
    for c in range(model.k):
        members = [d for d, lab in model.assignments.items() if lab == c]
        pooled = np.concatenate([driver_points[d] for d in members]) if members else np.empty((0, 2))
        out.append(fit_gmm(pooled, n_components, seed + c))
    return out


@dataclass
class TargetDriver:
    driver_id: str
    test_events: list[CarFollowingEvent]
    validation_events: list[CarFollowingEvent]


@dataclass
class AccuracyReport:
    n_events: np.ndarray
    accuracy: np.ndarray
    sd: np.ndarray
    truth: dict[str, int]
    rows: list[dict]
    n_clusters: int

    def curve_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n_events,accuracy,sd\n")
        for n, a, s in zip(self.n_events, self.accuracy, self.sd):
            buf.write(f"{int(n)},{float(a)!r},{float(s)!r}\n")
        return buf.getvalue()

    def rows_csv(self) -> str:
        buf = io.StringIO()
        kl_cols = ",".join(f"kl_c{c + 1}" for c in range(self.n_clusters))
        buf.write(f"driver_id,n_events,{kl_cols},predicted,truth,correct\n")
        for r in self.rows:
            kls = ",".join(repr(float(v)) for v in r["kl"])
            buf.write(f"{r['driver_id']},{r['n_events']},{kls},{r['predicted'] + 1},"
                      f"{r['truth'] + 1},{int(r['correct'])}\n")
        return buf.getvalue()


def ground_truth_cluster(events: list[CarFollowingEvent], model: ClusterModel,
                         irl_config: IrlConfig = IrlConfig()) -> int:
    """Nearest centroid of the normalized reward learned from ``events``."""
    demos = [demonstration_from_points(w) for w in map(event_windows, events) if len(w)]
    w = normalize_weights(learn_reward(demos, irl_config).weights)
    return int(model.predict(w)[0])


def evaluate_accuracy(targets: list[TargetDriver], model: ClusterModel, gmms: list[Gmm],
                      n_events_range=range(1, 11), trials: int = 20, seed: int = 0,
                      irl_config: IrlConfig = IrlConfig(), n_components: int = DEFAULT_COMPONENTS,
                      n_samples: int = DEFAULT_KL_SAMPLES) -> AccuracyReport:
    """Prediction accuracy as a function of how many events a driver has.

    For every trial and every n, each target driver contributes a random
    subset of n test events; accuracy is the fraction of drivers predicted
    into their ground-truth cluster, averaged over trials (SD across
    trials reported alongside).
    """
    truth = {}
    usable = []
    for t in targets:
        if not t.validation_events:
            warnings.warn(f"driver {t.driver_id} has no validation events; excluded")
            continue
        truth[t.driver_id] = ground_truth_cluster(t.validation_events, model, irl_config)
        usable.append(t)
    ns = np.asarray(list(n_events_range), dtype=int)
    hits = np.zeros((trials, len(ns)))
    rows = []
    seeds = np.random.SeedSequence(seed).spawn(trials)
    for trial in range(trials):
        rng = np.random.default_rng(seeds[trial])
        for j, n in enumerate(ns):
            correct = []
            for t in usable:
                if n > len(t.test_events):
                    raise ValueError(f"driver {t.driver_id} has fewer than {n} test events")
                pick = np.sort(rng.choice(len(t.test_events), size=n, replace=False))
                pts = event_points([t.test_events[i] for i in pick])
                out = predict_cluster(pts, gmms, n_components, n_samples,
                                      int(rng.integers(2**31 - 1)), driver_id=t.driver_id)
                ok = out.predicted_cluster == truth[t.driver_id]
                correct.append(ok)
                rows.append({"driver_id": t.driver_id, "n_events": int(n), "kl": out.kl,
                             "predicted": out.predicted_cluster, "truth": truth[t.driver_id],
                             "correct": ok})
            hits[trial, j] = np.mean(correct) if correct else np.nan
    return AccuracyReport(ns, hits.mean(axis=0), hits.std(axis=0), truth, rows, model.k)
