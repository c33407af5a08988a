"""K-means clustering of reward vectors with elbow diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
import io
import json

import numpy as np


class ClusteringError(ValueError):
    pass


class NoElbowError(ClusteringError):
    """The inertia curve has no convex bend; pick k by hand."""


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    driver_ids: list[str] = field(default_factory=list)
    inertia_trace: list[float] = field(default_factory=list)

    @property
    def assignments(self) -> dict[str, int]:
        ids = self.driver_ids or [str(i) for i in range(len(self.labels))]
        return {d: int(c) for d, c in zip(ids, self.labels)}

    def predict(self, points) -> np.ndarray:
        return _assign(np.atleast_2d(np.asarray(points, dtype=float)), self.centroids)[0]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "assignments": self.assignments,
            "inertia": float(self.inertia),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "ClusterModel":
        ids = list(doc["assignments"])
        return cls(
            k=int(doc["k"]),
            centroids=np.asarray(doc["centroids"], dtype=float),
            labels=np.asarray([doc["assignments"][d] for d in ids], dtype=int),
            inertia=float(doc["inertia"]),
            driver_ids=ids,
        )


@dataclass
class ElbowReport:
    ks: np.ndarray
    inertia: np.ndarray
    n_points: int

    @property
    def distortion(self) -> np.ndarray:
        return self.inertia / self.n_points

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,inertia,distortion\n")
        for k, i, d in zip(self.ks, self.inertia, self.distortion):
            buf.write(f"{int(k)},{float(i)!r},{float(d)!r}\n")
        return buf.getvalue()


def _sq_dists(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _assign(points, centroids):
    d2 = _sq_dists(points, centroids)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(points)), labels]


def _kmeanspp(points, k, rng):
    n = len(points)
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def lloyd(points, centroids, max_iter: int = 300):
    """Lloyd iterations until the assignment stops changing.

    Returns ``(centroids, labels, inertia, trace)`` where ``trace`` holds the
    inertia after every assignment step.
    """
    centroids = np.array(centroids, dtype=float)
    k = len(centroids)
    labels, d2 = _assign(points, centroids)
    trace = [float(d2.sum())]
    for _ in range(max_iter):
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
            else:
                # reseed an empty cluster at the point worst served so far
                far = int(np.argmax(d2))
                centroids[c] = points[far]
                labels[far] = c
                d2[far] = 0.0
        new_labels, d2 = _assign(points, centroids)
        inertia = float(d2.sum())
        if inertia > trace[-1] * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"inertia increased from {trace[-1]} to {inertia}")
        trace.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids, labels, trace[-1], trace


def kmeans(points, k: int, seed: int = 0, n_restarts: int = 10, driver_ids=None) -> ClusterModel:
    """Best of ``n_restarts`` k-means++ seeded Lloyd runs (lowest inertia).

    Restart ``r`` draws from its own stream spawned from ``seed``, so the
    result does not depend on the order in which restarts are evaluated.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise ClusteringError("points must be a 2-D array")
    n = len(x)
    if k < 1 or n < k:
        raise ClusteringError(f"need n >= k >= 1, got n={n}, k={k}")
    if not np.all(np.isfinite(x)):
        raise ClusteringError("points must be finite")
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, n_restarts)):
        rng = np.random.default_rng(child)
        cents, labels, inertia, trace = lloyd(x, _kmeanspp(x, k, rng))
        if best is None or inertia < best[2] - 1e-12:
            best = (cents, labels, inertia, trace)
    cents, labels, inertia, trace = best
    ids = [str(d) for d in driver_ids] if driver_ids is not None else []
    return ClusterModel(k, cents, labels, inertia, ids, trace)


def elbow_scan(points, k_range, seed: int = 0, n_restarts: int = 10) -> ElbowReport:
    x = np.asarray(points, dtype=float)
    ks = np.asarray(list(k_range), dtype=int)
    if len(ks) == 0 or ks.min() < 1 or ks.max() > len(x):
        raise ClusteringError("k_range must lie within [1, n]")
    inertia = np.array([kmeans(x, int(k), seed, n_restarts).inertia for k in ks])
    return ElbowReport(ks, inertia, len(x))


def select_k(report: ElbowReport) -> int:
    """Elbow of the inertia curve: the k with the largest discrete curvature.

    Curvature at an interior k is ``I(k-1) - 2 I(k) + I(k+1)``; ties go to
    the smallest k. A curve without positive curvature has no elbow.
    """
    inertia = np.asarray(report.inertia, dtype=float)
    if len(inertia) < 3:
        raise ClusteringError("select_k needs at least three k values")
    curvature = inertia[:-2] - 2 * inertia[1:-1] + inertia[2:]
    scale = max(float(np.abs(inertia).max()), 1e-300)
    best = float(curvature.max())
    if best <= 1e-9 * scale:
        raise NoElbowError("inertia curve has no elbow; choose k manually (--k)")
    idx = int(np.flatnonzero(curvature >= best - 1e-12 * scale)[0])
    return int(report.ks[idx + 1])


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two labelings (1 = identical partitions)."""
    a = np.unique(np.asarray(labels_a), return_inverse=True)[1]
    b = np.unique(np.asarray(labels_b), return_inverse=True)[1]
    if a.shape != b.shape:
        raise ValueError("labelings must have the same length")
    n = a.size
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1)
    pairs = lambda x: (x * (x - 1) / 2).sum()
    index = pairs(table)
    rows, cols = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = rows * cols / total if total else 0.0
    top = 0.5 * (rows + cols)
    if top == expected:
        return 1.0
    return float((index - expected) / (top - expected))
