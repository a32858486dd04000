"""Closed-form score families built on the empirical Gaussian mixture.

Pushing the empirical measure ``(1/N) sum_n delta(x0^n)`` through the linear
forward SDE gives the mixture ``p^N(x, t) = (1/N) sum_n N(x; m x0^n, sigma^2 I)``.
Its score, the exact minimizer of the empirical score-matching loss, is

    s^N(x, t) = -(x - m(t) xbar(x, t)) / sigma^2(t),
    xbar(x, t) = sum_n w_n(x, t) x0^n,

with softmax weights ``w_n`` of ``-|x - m x0^n|^2 / (2 sigma^2)``.  All
evaluations here run in log space with max subtraction, so exponents far
below the double-precision underflow threshold only zero out weights instead
of producing NaNs.

Functions accept a single point of shape ``(d,)`` or a batch ``(M, d)`` and
return arrays of matching leading shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidDatasetError, SingularTimeError, UndefinedObservationError
from .schedules import Schedule


@dataclass(frozen=True, eq=False)
class Dataset:
    """Training points ``x0^n`` in R^d, optionally paired with observations ``y^n``."""

    points: np.ndarray
    observations: np.ndarray | None = None
    name: str = "dataset"
    _index_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidDatasetError("points must be a non-empty (N, d) array")
        if not np.all(np.isfinite(pts)):
            raise InvalidDatasetError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.observations is not None:
            obs = np.array(self.observations, dtype=float, copy=True)
            if obs.ndim == 1:
                obs = obs[:, None]
            if obs.shape[0] != pts.shape[0]:
                raise InvalidDatasetError("observations must pair one-to-one with points")
            obs.setflags(write=False)
            object.__setattr__(self, "observations", obs)

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def m(self):
        return 0 if self.observations is None else self.observations.shape[1]

    @property
    def is_distinct(self):
        """Pairwise-distinct under exact equality."""
        if "distinct" not in self._index_cache:
            uniq = np.unique(self.points, axis=0)
            self._index_cache["distinct"] = uniq.shape[0] == self.N
        return self._index_cache["distinct"]

    def require_distinct(self):
        if not self.is_distinct:
            raise InvalidDatasetError("dataset contains duplicate points")

    def index_set(self, y) -> np.ndarray:
        """Indices n with ``y^n == y`` (exact, elementwise)."""
        if self.observations is None:
            raise UndefinedObservationError("dataset carries no observations")
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != self.m:
            raise UndefinedObservationError(f"observation must have length {self.m}")
        idx = np.flatnonzero(np.all(self.observations == y, axis=1))
        if idx.size == 0:
            raise UndefinedObservationError(
                f"observation {y.tolist()} is not in the dataset; the conditional "
                "empirical score is undefined there")
        return idx

    def distinct_observations(self):
        if self.observations is None:
            return np.empty((0, 0))
        return np.unique(self.observations, axis=0)

    def subset(self, idx, name=None):
        obs = None if self.observations is None else self.observations[idx]
        return Dataset(self.points[idx], obs, name or f"{self.name}[sub]")


def _as_batch(x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {x.shape}")
    return np.ascontiguousarray(X), single


def _moments(schedule: Schedule, t):
    m = float(schedule.mean_coeff(t))
    var = float(schedule.variance(t))
    return m, var


def _require_positive(var, t):
    if not var > 0.0:
        raise SingularTimeError(f"sigma^2(t) = 0 at t={t}; score is singular")


def _posterior_mean(dataset, m, var, X):
    """Weighted mean ``sum_n w_n x0^n`` and the log-sum of unnormalized weights."""
    centers = np.ascontiguousarray(m * dataset.points)
    if var > 0.0:
        cbar, lse = _kernels.mixture_stats(X, centers, var)
        return cbar / m if m != 1.0 else cbar, lse
    # sigma = 0: weights degenerate to the nearest centre (ties shared equally)
    diff2 = ((X[:, None, :] - centers[None]) ** 2).sum(-1)
    hit = diff2 == diff2.min(axis=1, keepdims=True)
    w = hit / hit.sum(axis=1, keepdims=True)
    return w @ dataset.points, np.zeros(X.shape[0])


def mixture_weights(dataset: Dataset, schedule: Schedule, x, t):
    """Normalized Gaussian weights ``w_n(x, t)``; shape ``(N,)`` or ``(M, N)``."""
    m, var = _moments(schedule, t)
    _require_positive(var, t)
    X, single = _as_batch(x, dataset.d)
    w = _kernels.mixture_weights(X, np.ascontiguousarray(m * dataset.points), var)
    return w[0] if single else w


def posterior_mean(dataset: Dataset, schedule: Schedule, x, t):
    """The weight-convex combination ``xbar(x, t)`` of the data points."""
    m, var = _moments(schedule, t)
    _require_positive(var, t)
    X, single = _as_batch(x, dataset.d)
    xbar, _ = _posterior_mean(dataset, m, var, X)
    return xbar[0] if single else xbar


def empirical_score(dataset: Dataset, schedule: Schedule, x, t):
    m, var = _moments(schedule, t)
    _require_positive(var, t)
    X, single = _as_batch(x, dataset.d)
    xbar, _ = _posterior_mean(dataset, m, var, X)
    s = -(X - m * xbar) / var
    return s[0] if single else s


def mixture_log_density(dataset: Dataset, schedule: Schedule, x, t):
    """``log p^N(x, t)`` including the ``(2 pi sigma^2)^(-d/2) / N`` factor."""
    m, var = _moments(schedule, t)
    _require_positive(var, t)
    X, single = _as_batch(x, dataset.d)
    _, lse = _posterior_mean(dataset, m, var, X)
    logp = lse - math.log(dataset.N) - 0.5 * dataset.d * math.log(2.0 * math.pi * var)
    return logp[0] if single else logp


def tikhonov_score(dataset: Dataset, schedule: Schedule, x, t, c):
    """Minimizer of the Tikhonov-penalized loss with ``Gamma(t) = c / sigma^2(t) I``.

    Equals ``sigma^2 / (sigma^2 + c)`` times the empirical score and stays
    bounded as t -> 0 when ``c > 0``; at ``sigma = 0`` the weights become the
    nearest-point indicator.
    """
    c = float(c)
    if c < 0:
        raise ValueError("c must be non-negative")
    m, var = _moments(schedule, t)
    if c == 0.0:
        _require_positive(var, t)
    X, single = _as_batch(x, dataset.d)
    xbar, _ = _posterior_mean(dataset, m, var, X)
    s = -(X - m * xbar) / (c + var)
    return s[0] if single else s


def empirical_bayes_score(dataset: Dataset, schedule: Schedule, x, t, c):
    """``grad p^N / max(p^N, c)`` with ``p^N`` the normalized mixture density.

    Because the cutoff is compared with an actual density value, the
    effective strength of a given ``c`` depends on d and sigma(t).
    """
    c = float(c)
    if c < 0:
        raise ValueError("c must be non-negative")
    m, var = _moments(schedule, t)
    _require_positive(var, t)
    X, single = _as_batch(x, dataset.d)
    xbar, lse = _posterior_mean(dataset, m, var, X)
    s = -(X - m * xbar) / var
    if c > 0.0:
        logp = lse - math.log(dataset.N) - 0.5 * dataset.d * math.log(2.0 * math.pi * var)
        s = s * np.exp(np.minimum(logp - math.log(c), 0.0))[:, None]
    return s[0] if single else s


def conditional_empirical_score(dataset: Dataset, schedule: Schedule, x, y, t):
    """Empirical score of the sub-mixture sharing observation ``y``.

    Uses the same sign convention as the unconditional score.
    """
    idx = dataset.index_set(y)
    return empirical_score(dataset.subset(idx), schedule, x, t)


# ---------------------------------------------------------------------------
# Score models: a small tagged family consumed by the reverse dynamics.
# ---------------------------------------------------------------------------

class ScoreModel:
    """Callable ``(X, t) -> score`` over a batch ``X`` of shape (M, d)."""

    tag = "abstract"
    schedule: Schedule

    def __call__(self, X, t):
        raise NotImplementedError

    def regular_at_zero(self) -> bool:
        """Whether the score may be evaluated at t = 0."""
        return False

    @property
    def label(self):
        return self.tag

    @property
    def dim(self) -> int:
        return self.dataset.d


@dataclass(eq=False)
class ExactScore(ScoreModel):
    dataset: Dataset
    schedule: Schedule
    tag = "exact"

    def __call__(self, X, t):
        return empirical_score(self.dataset, self.schedule, X, t)

    @property
    def c(self):
        return 0.0


@dataclass(eq=False)
class TikhonovScore(ScoreModel):
    dataset: Dataset
    schedule: Schedule
    c: float
    tag = "tikhonov"

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("Tikhonov model needs c > 0 (use ExactScore for c = 0)")

    def __call__(self, X, t):
        return tikhonov_score(self.dataset, self.schedule, X, t, self.c)

    def regular_at_zero(self):
        return True

    @property
    def label(self):
        return f"tikhonov(c={self.c:g})"


@dataclass(eq=False)
class EmpiricalBayesScore(ScoreModel):
    dataset: Dataset
    schedule: Schedule
    c: float
    tag = "empirical_bayes"

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be non-negative")

    def __call__(self, X, t):
        return empirical_bayes_score(self.dataset, self.schedule, X, t, self.c)

    @property
    def label(self):
        return f"empirical_bayes(c={self.c:g})"


@dataclass(eq=False)
class ConditionalScore(ScoreModel):
    dataset: Dataset
    schedule: Schedule
    y: np.ndarray
    tag = "conditional"

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self._sub = self.dataset.subset(self.dataset.index_set(self.y))

    @property
    def members(self):
        return self.dataset.index_set(self.y)

    def __call__(self, X, t):
        return empirical_score(self._sub, self.schedule, X, t)

    @property
    def label(self):
        return f"conditional(y={self.y.tolist()})"
