"""Reverse-time generative dynamics for any score model.

The probability-flow ODE

    dx/dt = -beta(t) x / 2 - g(t) s(x, t) / 2

is integrated backwards from t = T with classical RK4 on a fixed grid.  The
default grid is geometric in t, which resolves the ``1/sigma^2`` stiffness of
the exact score near t = 0.

For the exact and Tikhonov scores the same flow can be written in the
variable ``s = -log(sigma^2(t) + c) / 2``, where it becomes the contraction
``dy/ds = -(y - y_N(y, s))`` toward a moving convex combination of the data;
``integrate_transformed_ode`` integrates that form directly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, DomainError, SingularTimeError
from .schedules import Kind, Schedule
from .scores import ExactScore, ScoreModel, TikhonovScore, _as_batch

DIVERGENCE_BOUND = 1e6
ZERO_FLOOR = 1e-6

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (all arithmetic mod 2^64)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def sample_seed(master_seed: int, index: int) -> int:
    """Per-sample seed: ``splitmix64(splitmix64(master) ^ index)``."""
    return splitmix64(splitmix64(int(master_seed) & _MASK64) ^ (int(index) & _MASK64))


class GridKind(str, enum.Enum):
    GEOMETRIC_IN_T = "geometric_in_t"
    UNIFORM_IN_S = "uniform_in_s"


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly decreasing nodes from T down to t_min."""

    kind: GridKind
    T: float
    t_min: float
    steps: int
    times: np.ndarray = field(repr=False)

    @classmethod
    def geometric(cls, T=1.0, t_min=1e-4, steps=400):
        """Nodes ``T (t_min/T)^(i/steps)``.

        With ``t_min = 0`` the geometric part stops at ``ZERO_FLOOR * T`` after
        ``steps - 1`` intervals and a final node at exactly 0 is appended.
        """
        if steps < 2:
            raise DomainError("steps must be >= 2")
        if t_min < 0 or t_min >= T:
            raise DomainError("need 0 <= t_min < T")
        if t_min == 0.0:
            lo = ZERO_FLOOR * T
            i = np.arange(steps) / (steps - 1)
            times = np.append(T * (lo / T) ** i, 0.0)
        else:
            i = np.arange(steps + 1) / steps
            times = T * (t_min / T) ** i
        times[0] = T
        return cls(GridKind.GEOMETRIC_IN_T, float(T), float(t_min), int(steps), times)

    @classmethod
    def uniform_in_s(cls, schedule: Schedule, t_min, steps=400, c=0.0):
        """Nodes equally spaced in ``s = -log(sigma^2 + c)/2`` and mapped back to t."""
        if steps < 2:
            raise DomainError("steps must be >= 2")
        s0 = time_transform(schedule, schedule.T, c)
        s1 = time_transform(schedule, t_min, c)
        s = np.linspace(s0, s1, steps + 1)
        times = time_transform_inverse(schedule, s, c)
        times[0] = schedule.T
        times[-1] = t_min
        return cls(GridKind.UNIFORM_IN_S, float(schedule.T), float(t_min), int(steps), times)

    @property
    def nodes(self):
        return self.times


@dataclass(eq=False)
class Trajectory:
    """Reverse-process path; ``states`` has shape (K+1, d) or (K+1, M, d)."""

    times: np.ndarray
    states: np.ndarray
    s: np.ndarray | None = None
    weights: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def terminal(self):
        return self.states[-1]

    def __len__(self):
        return len(self.times)


# -- time transform ----------------------------------------------------------

def time_transform(schedule: Schedule, t, c=0.0):
    """``s = h(t; c) = -log(sigma^2(t) + c) / 2``."""
    c = float(c)
    if c < 0:
        raise DomainError("c must be non-negative")
    var = np.asarray(schedule.variance(t))
    if c == 0.0 and np.any(var <= 0.0):
        raise DomainError("t = 0 maps to s = infinity when c = 0")
    return (-0.5 * np.log(var + c))[()]


def time_transform_inverse(schedule: Schedule, s, c=0.0):
    """``t = (sigma^2)^{-1}(exp(-2 s) - c)``; returns 0 exactly at ``s_inf``."""
    c = float(c)
    s = np.asarray(s, dtype=float)
    v = np.exp(-2.0 * s) - c
    vT = schedule.variance_T()
    # tolerate rounding at the two ends of the admissible interval
    v = np.where(np.abs(v) <= 1e-15 * max(c, 1.0), 0.0, v)
    v = np.where(np.abs(v - vT) <= 1e-13 * vT, vT, v)
    if np.any(v < 0.0) or np.any(v > vT) or (c == 0.0 and np.any(v == 0.0)):
        raise DomainError("s outside the range of the time transform")
    out = np.zeros_like(v)
    pos = v > 0.0
    if np.any(pos):
        out[pos] = schedule.invert_variance(v[pos])
    return out[()]


def s_infinity(c):
    """Terminal transformed time ``-log(c)/2`` for c > 0 (infinite for c = 0)."""
    return math.inf if c == 0 else -0.5 * math.log(c)


# -- right-hand sides --------------------------------------------------------

def reverse_ode_rhs(model: ScoreModel, schedule: Schedule, x, t):
    """``-beta(t) x / 2 - g(t) s(x, t) / 2``."""
    if float(t) == 0.0 and not model.regular_at_zero():
        raise SingularTimeError("score model is singular at t = 0")
    X = np.asarray(x, dtype=float)
    beta = float(schedule.beta(t))
    g = float(schedule.g(t))
    return -0.5 * beta * X - 0.5 * g * model(X, t)


def _check_states(X, node, t):
    norms = np.sqrt((X * X).sum(axis=-1))
    bad = ~np.isfinite(norms) | (norms > DIVERGENCE_BOUND)
    if np.any(bad):
        ids = np.flatnonzero(np.atleast_1d(bad)).tolist()
        raise DivergenceError(f"trajectory diverged before t={t:g} (samples {ids[:10]})",
                              node=node, t=t, sample_ids=ids)


def _integrate(rhs, X0, times, method="rk4", record=True, on_step=None):
    X = np.array(X0, dtype=float)
    out = [X.copy()] if record else None
    for k in range(len(times) - 1):
        t0, t1 = float(times[k]), float(times[k + 1])
        h = t1 - t0
        if method == "rk4":
            k1 = rhs(X, t0)
            tm = t0 + 0.5 * h
            k2 = rhs(X + 0.5 * h * k1, tm)
            k3 = rhs(X + 0.5 * h * k2, tm)
            k4 = rhs(X + h * k3, t1)
            Xn = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        elif method == "euler":
            Xn = X + h * rhs(X, t0)
        else:
            raise ValueError(f"unknown method {method!r}")
        if on_step is not None:
            Xn = on_step(Xn, k + 1)
        try:
            _check_states(Xn, k, t0)
        except DivergenceError as err:
            err.state = X
            raise
        X = Xn
        if record:
            out.append(X.copy())
    return np.stack(out) if record else X


def _validate_grid(model, times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 3 or np.any(np.diff(times) >= 0):
        raise DomainError("time grid must be strictly decreasing with >= 2 steps")
    if times[-1] == 0.0 and not model.regular_at_zero():
        raise SingularTimeError(f"{model.label} is singular at t = 0; use t_min > 0")
    return times


def integrate_reverse_ode(model: ScoreModel, schedule: Schedule, xT, grid,
                          method="rk4", record=True, metadata=None):
    """Integrate the reverse ODE over ``grid`` (a TimeGrid or node array).

    ``xT`` may be a single point (d,) or a batch (M, d); batches are stepped
    together and every row follows exactly the single-trajectory recursion.
    """
    times = _validate_grid(model, grid.times if isinstance(grid, TimeGrid) else grid)
    X, single = _as_batch(xT, model_dim(model, xT))
    _check_states(X, 0, times[0])

    def rhs(Y, t):
        return reverse_ode_rhs(model, schedule, Y, t)

    states = _integrate(rhs, X, times, method=method, record=record)
    if single:
        states = states[:, 0] if record else states[0]
    meta = {"schedule": schedule.label, "model": model.label, "method": method}
    meta.update(metadata or {})
    if not record:
        return states
    return Trajectory(times=times, states=states, metadata=meta)


def model_dim(model, x):
    try:
        return model.dim
    except AttributeError:
        return np.asarray(x).shape[-1]


def integrate_transformed_ode(model: ScoreModel, schedule: Schedule, xT, s_grid,
                              record_weights=True, method="rk4"):
    """Integrate the flow in transformed time ``s``.

    VE (exact or Tikhonov):  dy/ds = -(y - y_N(y, s)),
        weights use variance ``exp(-2 s) - c``.
    VP (exact only):         dy/ds = -(y - y_N(y, s) / m),  m = sqrt(1 - exp(-2 s)),
        weights centred at ``m x0``.
    """
    if isinstance(model, TikhonovScore):
        c = float(model.c)
    elif isinstance(model, ExactScore):
        c = 0.0
    else:
        raise TypeError("transformed dynamics need an ExactScore or TikhonovScore")
    if schedule.kind is Kind.VP and c > 0:
        raise DomainError("transformed VP dynamics are implemented for c = 0 only")
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.ndim != 1 or len(s_grid) < 3 or np.any(np.diff(s_grid) <= 0):
        raise DomainError("s grid must be strictly increasing with >= 2 steps")
    s0 = time_transform(schedule, schedule.T, c)
    if abs(s_grid[0] - s0) > 1e-12 * max(1.0, abs(s0)):
        raise DomainError(f"s grid must start at h(T; c) = {s0}")
    if c > 0 and s_grid[-1] > s_infinity(c) * (1 + 1e-14):
        raise DomainError(f"s grid extends beyond s_inf = {s_infinity(c)}")

    data = model.dataset.points
    from . import _kernels

    def centers_var(s):
        e2 = math.exp(-2.0 * s)
        if schedule.kind is Kind.VP:
            m = math.sqrt(-math.expm1(-2.0 * s))
            return m, e2
        return 1.0, max(e2 - c, 0.0)

    def y_n(Y, s):
        m, var = centers_var(s)
        centers = np.ascontiguousarray(m * data)
        if var > 0.0:
            cbar, _ = _kernels.mixture_stats(Y, centers, var)
            return cbar / m, m
        diff2 = ((Y[:, None, :] - centers[None]) ** 2).sum(-1)
        hit = diff2 == diff2.min(axis=1, keepdims=True)
        return (hit / hit.sum(axis=1, keepdims=True)) @ data, m

    def rhs(Y, s):
        yn, m = y_n(Y, s)
        if schedule.kind is Kind.VP:
            return -(Y - yn / m)
        return -(Y - yn)

    X, single = _as_batch(xT, model.dataset.d)
    states = _integrate(rhs, X, s_grid, method=method, record=True)
    times = time_transform_inverse(schedule, s_grid, c)
    weights = None
    if record_weights:
        weights = []
        for k, s in enumerate(s_grid):
            m, var = centers_var(s)
            if var > 0:
                weights.append(_kernels.mixture_weights(
                    np.ascontiguousarray(states[k]), np.ascontiguousarray(m * data), var))
            else:
                diff2 = ((states[k][:, None, :] - (m * data)[None]) ** 2).sum(-1)
                hit = (diff2 == diff2.min(axis=1, keepdims=True)).astype(float)
                weights.append(hit / hit.sum(axis=1, keepdims=True))
        weights = np.stack(weights)
    if single:
        states = states[:, 0]
        weights = None if weights is None else weights[:, 0]
    return Trajectory(times=np.asarray(times), states=states, s=s_grid, weights=weights,
                      metadata={"schedule": schedule.label, "model": model.label,
                                "c": c, "frame": "transformed"})


def integrate_reverse_sde(model: ScoreModel, schedule: Schedule, xT, alpha2, grid,
                          rng: np.random.Generator, record=True):
    """Euler-Maruyama for the reverse SDE family indexed by ``alpha2 >= 0``.

    Each backward step of size ``dt`` applies
    ``x <- x - dt * F(x, t) + sqrt(alpha2 g(t) dt) * eta`` with
    ``F = -beta x / 2 - (1 + alpha2) g s / 2``.  With ``alpha2 = 0`` no
    noise is drawn and the step is the explicit Euler step of the ODE.
    """
    alpha2 = float(alpha2)
    if alpha2 < 0:
        raise DomainError("alpha2 must be non-negative")
    times = _validate_grid(model, grid.times if isinstance(grid, TimeGrid) else grid)
    X, single = _as_batch(xT, model_dim(model, xT))
    _check_states(X, 0, times[0])

    def drift(Y, t):
        beta = float(schedule.beta(t))
        g = float(schedule.g(t))
        return -0.5 * beta * Y - 0.5 * (1.0 + alpha2) * g * model(Y, t)

    if alpha2 == 0.0:
        states = _integrate(drift, X, times, method="euler", record=record)
    else:
        def add_noise(Y, k):
            t_prev, t_new = float(times[k - 1]), float(times[k])
            dt = t_prev - t_new
            amp = math.sqrt(alpha2 * float(schedule.g(t_prev)) * dt)
            return Y + amp * rng.standard_normal(Y.shape)

        states = _integrate(drift, X, times, method="euler", record=record, on_step=add_noise)
    if single:
        states = states[:, 0] if record else states[0]
    if not record:
        return states
    return Trajectory(times=times, states=states,
                      metadata={"schedule": schedule.label, "model": model.label,
                                "alpha2": alpha2})


def initial_states(schedule: Schedule, count: int, d: int, seed: int):
    """Draw ``x_T`` from the reference Gaussian, one sub-seeded stream per sample."""
    sd = schedule.reference_std()
    out = np.empty((count, d))
    for i in range(count):
        rng = np.random.default_rng(sample_seed(seed, i))
        out[i] = sd * rng.standard_normal(d)
    return out


def generate_samples(model: ScoreModel, schedule: Schedule, count: int, t_min=1e-4,
                     seed=0, steps=400, grid: TimeGrid | None = None, d=None,
                     return_initial=False):
    """Draw ``count`` reference samples and push them through the reverse ODE.

    Sample i starts from ``default_rng(sample_seed(seed, i))``, so results
    are ordered by sample index and independent of batch composition.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    if d is None:
        d = model.dim
    if grid is None:
        grid = TimeGrid.geometric(schedule.T, t_min, steps)
    xT = initial_states(schedule, count, d, seed)
    try:
        out = integrate_reverse_ode(model, schedule, xT, grid, record=False)
    except DivergenceError as err:
        err.args = (f"{len(err.sample_ids)} of {count} trajectories diverged "
                    f"(sample ids {err.sample_ids[:10]})",)
        raise
    return (out, xT) if return_initial else out
