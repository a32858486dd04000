"""Voronoi-geometric analysis of generated samples and trajectories.

Classification is query based: for each point the nearest and second-nearest
data points are found by a brute-force O(N) scan (no spatial index; the data
sets here have N <= 10^4).  No Voronoi diagram is built except for plotting
in d = 2, where cells are obtained by clipping a bounding box with bisector
half-planes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from . import _kernels
from .errors import InvalidDatasetError, NotCollapsedError
from .scores import Dataset, _as_batch

BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class Cell:
    n: int


@dataclass(frozen=True)
class Boundary:
    n: int
    l: int
    gap: float


class VoronoiIndex:
    """Query-time Voronoi classifier over a distinct data set."""

    def __init__(self, dataset: Dataset, boundary_tol=BOUNDARY_TOL):
        dataset.require_distinct()
        if dataset.N < 2:
            raise InvalidDatasetError("Voronoi classification needs N >= 2")
        self.dataset = dataset
        self.boundary_tol = float(boundary_tol)
        self._pts = np.ascontiguousarray(dataset.points)

    def nearest_two(self, X):
        X, _ = _as_batch(X, self.dataset.d)
        return _kernels.nearest_two(X, self._pts)

    def classify(self, x):
        i1, d1, i2, d2 = self.nearest_two(x)
        gap = float(d2[0] - d1[0])
        if gap > self.boundary_tol:
            return Cell(int(i1[0]))
        return Boundary(int(i1[0]), int(i2[0]), gap)

    def classify_batch(self, X):
        """Vectorized classification: ``(nearest, second, gap, is_cell)``."""
        i1, d1, i2, d2 = self.nearest_two(X)
        gap = d2 - d1
        return i1, i2, gap, gap > self.boundary_tol

    def boundary_distance(self, X):
        """Euclidean distance from each query to the boundary of its own cell.

        Cells are intersections of half-spaces, so this is the minimum over
        l != n of the distance to the bisector of ``x0^n`` and ``x0^l``:
        ``(|x - x0^l|^2 - |x - x0^n|^2) / (2 |x0^n - x0^l|)``.
        """
        X, _ = _as_batch(X, self.dataset.d)
        P = self._pts
        d2 = ((X[:, None, :] - P[None]) ** 2).sum(-1)
        n = np.argmin(d2, axis=1)
        rows = np.arange(X.shape[0])
        sep = np.sqrt(((P[n][:, None, :] - P[None]) ** 2).sum(-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = (d2 - d2[rows, n][:, None]) / (2.0 * sep)
        dist[rows, n] = np.inf
        return dist.min(axis=1)


def cell_margin(dataset: Dataset, x) -> float:
    """Largest eps with x in the eps-shrunk cell of its nearest data point.

    ``eps^2 = min_{l != n} (|x - x0^l|^2 - |x - x0^n|^2)``; 0 on a boundary.
    """
    index = VoronoiIndex(dataset)
    _, d1, _, d2 = index.nearest_two(np.asarray(x, float))
    gap = float(d2[0] - d1[0])
    return math.sqrt(gap) if gap > index.boundary_tol else 0.0


def pairwise_extremes(dataset: Dataset):
    """``(D_minus, D_plus)``: min and max pairwise Euclidean distances."""
    if dataset.N < 2:
        raise InvalidDatasetError("pairwise extremes need N >= 2")
    dataset.require_distinct()
    dist = pdist(dataset.points)
    return float(dist.min()), float(dist.max())


@dataclass
class RateFit:
    sample_id: int
    limit_index: int
    slope_s: float
    slope_sigma: float
    r2: float


@dataclass
class MemorizationReport:
    tau: float
    fraction_collapsed: float
    nearest_index: np.ndarray
    distance: np.ndarray
    boundary_distance: np.ndarray
    near_boundary: np.ndarray
    cell_histogram: np.ndarray
    rate_fits: list = field(default_factory=list)

    @property
    def total(self):
        return int(self.distance.shape[0])

    @property
    def collapsed(self):
        return self.distance < self.tau

    @property
    def boundary_proximal_count(self):
        """Samples not near data but within tau of a Voronoi boundary."""
        return int(np.sum(~self.collapsed & self.near_boundary))

    @property
    def unclassified_count(self):
        """Samples neither near data nor near a boundary."""
        return int(np.sum(~self.collapsed & ~self.near_boundary))

    def summary(self):
        return {
            "tau": self.tau,
            "total": self.total,
            "fraction_collapsed": self.fraction_collapsed,
            "collapsed": int(self.collapsed.sum()),
            "boundary_proximal": self.boundary_proximal_count,
            "unclassified": self.unclassified_count,
            "cell_histogram": self.cell_histogram.tolist(),
        }


def memorization_fraction(samples, dataset: Dataset, tau: float) -> MemorizationReport:
    """Fraction of samples within Euclidean distance tau of the training data."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    X, _ = _as_batch(samples, dataset.d)
    if X.shape[0] == 0:
        raise ValueError("samples must be non-empty")
    pts = np.ascontiguousarray(dataset.points)
    if dataset.N >= 2:
        index = VoronoiIndex(dataset)
        i1, d1, _, _ = index.nearest_two(X)
        bdist = index.boundary_distance(X)
    else:
        diff = X - pts[0]
        i1 = np.zeros(X.shape[0], dtype=np.int64)
        d1 = (diff * diff).sum(-1)
        bdist = np.full(X.shape[0], np.inf)
    dist = np.sqrt(d1)
    collapsed = dist < tau
    return MemorizationReport(
        tau=float(tau),
        fraction_collapsed=float(collapsed.mean()),
        nearest_index=np.asarray(i1, dtype=np.int64),
        distance=dist,
        boundary_distance=bdist,
        near_boundary=bdist < tau,
        cell_histogram=np.bincount(np.asarray(i1)[collapsed], minlength=dataset.N),
    )


def _linfit(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def convergence_rate_fit(trajectory, dataset: Dataset, schedule, window=0.3,
                         skip_last=3, tau=1e-2, sample_id=0) -> RateFit:
    """Fit the decay of ``log|x(t) - x0^n|`` over the tail of a trajectory.

    Regresses the log-distance to the limiting data point on
    ``s = -log sigma(t)`` (expected slope -1) and on ``log sigma(t)``
    (expected slope +1) over the last ``window`` fraction of nodes, dropping
    the final ``skip_last`` nodes.
    """
    states = np.asarray(trajectory.states)
    if states.ndim != 2:
        raise ValueError("convergence_rate_fit expects a single trajectory")
    term = states[-1]
    dist = np.sqrt(((dataset.points - term) ** 2).sum(-1))
    n = int(np.argmin(dist))
    if not dist[n] < tau:
        raise NotCollapsedError(f"terminal is {dist[n]:.3g} from the nearest data point (tau={tau})")
    if trajectory.s is not None:
        s = np.asarray(trajectory.s, dtype=float)
    else:
        s = -0.5 * np.log(np.asarray(schedule.variance(trajectory.times), dtype=float))
    K = len(s)
    start = int(math.floor(K * (1.0 - window)))
    stop = K - skip_last
    sel = slice(start, stop)
    logd = np.log(np.sqrt(((states[sel] - dataset.points[n]) ** 2).sum(-1)))
    ss = s[sel]
    ok = np.isfinite(logd) & np.isfinite(ss)
    if ok.sum() < 3:
        raise ValueError("rate-fit window holds fewer than 3 usable nodes")
    slope_s, r2 = _linfit(ss[ok], logd[ok])
    slope_sigma, _ = _linfit(-ss[ok], logd[ok])
    return RateFit(sample_id, n, slope_s, slope_sigma, r2)


def voronoi_edges_2d(dataset: Dataset, bbox):
    """Voronoi edges of a planar data set clipped to ``bbox = (xmin, xmax, ymin, ymax)``.

    Returns a list of ``(x1, y1, x2, y2, n, l)`` segments separating cells n < l.
    """
    if dataset.d != 2:
        raise ValueError("Voronoi edges are only exported for d = 2")
    dataset.require_distinct()
    P = dataset.points
    xmin, xmax, ymin, ymax = bbox
    box = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    edges = {}
    for n in range(dataset.N):
        # polygon vertices tagged with the index of the bisector that created
        # the edge leaving them (-1 for a bounding-box edge)
        poly = [(v, -1) for v in box]
        for l in range(dataset.N):
            if l == n or not poly:
                continue
            a = P[l] - P[n]
            b = 0.5 * (P[l] @ P[l] - P[n] @ P[n])
            poly = _clip(poly, a, b, l)
        for k, (v, tag) in enumerate(poly):
            if tag < 0:
                continue
            w = poly[(k + 1) % len(poly)][0]
            if math.hypot(w[0] - v[0], w[1] - v[1]) <= 1e-12:
                continue
            key = (min(n, tag), max(n, tag))
            seg = (v[0], v[1], w[0], w[1])
            # each bisector edge is produced by both neighbouring cells; keep one
            if key not in edges or n < tag:
                edges[key] = seg
    return [(*seg, key[0], key[1]) for key, seg in sorted(edges.items())]


def _clip(poly, a, b, tag):
    """Clip polygon to ``a . x <= b`` (Sutherland-Hodgman), tracking edge tags."""
    out = []
    m = len(poly)
    for k in range(m):
        (p, ptag), (q, _qtag) = poly[k], poly[(k + 1) % m]
        fp = a @ np.asarray(p) - b
        fq = a @ np.asarray(q) - b
        if fp <= 0:
            if fq <= 0:
                out.append((p, ptag))
            else:
                r = _cross(p, q, fp, fq)
                out.append((p, ptag))
                out.append((r, tag))
        elif fq <= 0:
            r = _cross(p, q, fp, fq)
            out.append((r, ptag))
    return out


def _cross(p, q, fp, fq):
    lam = fp / (fp - fq)
    return (p[0] + lam * (q[0] - p[0]), p[1] + lam * (q[1] - p[1]))
