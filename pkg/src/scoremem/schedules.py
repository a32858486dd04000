"""Noise schedules and Gaussian marginals of the linear forward SDE.

The forward process is ``dx = -beta(t) x / 2 dt + sqrt(g(t)) dW`` with either
``beta = 0`` (variance exploding, VE) or ``beta = g`` (variance preserving, VP).
Conditioned on ``x(0) = x0`` the marginal at time t is
``N(m(t) x0, sigma^2(t) I)``.  Both kinds only ever need the cumulative
integral ``G(t) = int_0^t g``:

    VE:  m = 1,             sigma^2 = G
    VP:  m = exp(-G / 2),   sigma^2 = 1 - exp(-G)

so every catalog diffusion coefficient ships ``G`` and its inverse in closed
form; user-supplied coefficients fall back to adaptive quadrature and
bracketing root finding.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError

QUAD_RTOL = 1e-10
LN10 = math.log(10.0)


class Kind(str, enum.Enum):
    VE = "VE"
    VP = "VP"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str) and value.upper() in ("VE", "VP"):
            return cls(value.upper())
        return None


@dataclass(frozen=True)
class Diffusion:
    """Named diffusion coefficient ``g`` with its cumulative integral.

    ``cumulative`` and ``cumulative_inverse`` may be None, in which case
    quadrature (``scipy.integrate.quad``) and Brent's method are used.
    """

    name: str
    params: dict
    g: Callable
    cumulative: Callable | None = None
    cumulative_inverse: Callable | None = None

    def __call__(self, t):
        return self.g(t)


def _two_t():
    return Diffusion("two_t", {}, lambda t: 2.0 * np.asarray(t, float),
                     lambda t: np.asarray(t, float) ** 2,
                     lambda v: np.sqrt(np.asarray(v, float)))


def _exp10():
    return Diffusion(
        "exp10", {},
        lambda t: 10.0 ** np.asarray(t, float),
        lambda t: np.expm1(LN10 * np.asarray(t, float)) / LN10,
        lambda v: np.log1p(LN10 * np.asarray(v, float)) / LN10,
    )


def _constant(value=1.0):
    value = float(value)
    if value <= 0:
        raise DomainError("constant diffusion must be positive")
    return Diffusion(
        "constant", {"value": value},
        lambda t: np.full_like(np.asarray(t, float), value),
        lambda t: value * np.asarray(t, float),
        lambda v: np.asarray(v, float) / value,
    )


def _linear(beta_min=0.001, beta_max=3.0):
    a, b = float(beta_min), float(beta_max) - float(beta_min)
    if a < 0 or a + b <= 0:
        raise DomainError("linear diffusion needs beta_min >= 0 and beta_max > 0")

    def inverse(v):
        v = np.asarray(v, float)
        if b == 0.0:
            return v / a
        # positive root of (b/2) t^2 + a t - v, written to avoid cancellation
        return 2.0 * v / (a + np.sqrt(a * a + 2.0 * b * v))

    return Diffusion(
        "linear", {"beta_min": float(beta_min), "beta_max": float(beta_max)},
        lambda t: a + b * np.asarray(t, float),
        lambda t: a * np.asarray(t, float) + 0.5 * b * np.asarray(t, float) ** 2,
        inverse,
    )


CATALOG = {
    "two_t": _two_t,
    "exp10": _exp10,
    "constant": _constant,
    "linear": _linear,
}


def diffusion(name: str, **params) -> Diffusion:
    """Look up a catalog diffusion coefficient by name."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise DomainError(f"unknown diffusion {name!r}; catalog: {sorted(CATALOG)}") from None
    return factory(**params)


def custom_diffusion(g: Callable[[float], float], name="custom") -> Diffusion:
    """Wrap an arbitrary positive coefficient; integrals use quadrature."""
    return Diffusion(name, {}, np.vectorize(g, otypes=[float]))


@dataclass(frozen=True)
class GaussianMarginal:
    mean_coeff: float
    std: float


@dataclass(frozen=True)
class Schedule:
    """Forward-process specification ``(kind, g, T)``."""

    kind: Kind
    g: Diffusion
    T: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not self.T > 0:
            raise DomainError("T must be positive")

    # -- constructors -----------------------------------------------------
    @classmethod
    def ve(cls, g="exp10", T=1.0, **params):
        return cls(Kind.VE, diffusion(g, **params) if isinstance(g, str) else g, float(T))

    @classmethod
    def vp(cls, g="linear", T=1.0, **params):
        return cls(Kind.VP, diffusion(g, **params) if isinstance(g, str) else g, float(T))

    # -- serialization ----------------------------------------------------
    def to_dict(self):
        if self.g.name not in CATALOG:
            raise DomainError("only catalog diffusions can be serialized")
        return {"kind": self.kind.value, "g.name": self.g.name,
                "g.params": dict(self.g.params), "T": self.T}

    @classmethod
    def from_dict(cls, block):
        try:
            kind = Kind(block["kind"])
            name = block["g.name"]
        except (KeyError, ValueError) as exc:
            raise DomainError(f"bad schedule block {block!r}: {exc}") from None
        params = block.get("g.params", {}) or {}
        return cls(kind, diffusion(name, **params), float(block.get("T", 1.0)))

    @property
    def label(self):
        p = ",".join(f"{k}={v}" for k, v in sorted(self.g.params.items()))
        return f"{self.kind.value}:{self.g.name}" + (f"({p})" if p else "") + f":T={self.T}"

    # -- core quantities --------------------------------------------------
    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > self.T):
            raise DomainError(f"time outside [0, T={self.T}]")
        return t

    def beta(self, t):
        t = self._check_t(t)
        if self.kind is Kind.VE:
            return np.zeros_like(t)[()]
        return self.g(t)[()]

    def cumulative(self, t):
        """``G(t) = int_0^t g(s) ds``."""
        t = self._check_t(t)
        if self.g.cumulative is not None:
            return np.asarray(self.g.cumulative(t))[()]
        flat = [integrate.quad(self.g.g, 0.0, float(tt), epsabs=0.0,
                               epsrel=QUAD_RTOL, limit=200)[0] for tt in t.ravel()]
        return np.asarray(flat).reshape(t.shape)[()]

    def _cumulative_inverse(self, G):
        G = np.asarray(G, dtype=float)
        if self.g.cumulative_inverse is not None:
            return np.minimum(np.asarray(self.g.cumulative_inverse(G)), self.T)[()]
        out = np.empty(G.shape)
        for i, v in np.ndenumerate(G):
            if v == 0.0:
                out[i] = 0.0
                continue
            out[i] = optimize.brentq(lambda tt: self.cumulative(tt) - v, 0.0, self.T,
                                     xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        return out[()]

    def mean_coeff(self, t):
        """Conditional mean coefficient ``m(t) = exp(-1/2 int_0^t beta)``."""
        t = self._check_t(t)
        if self.kind is Kind.VE:
            return np.ones_like(t)[()]
        return np.exp(-0.5 * np.asarray(self.cumulative(t)))[()]

    def variance(self, t):
        """Conditional variance ``sigma^2(t)``."""
        G = np.asarray(self.cumulative(t))
        if self.kind is Kind.VE:
            return G[()]
        return -np.expm1(-G)[()]

    def std(self, t):
        return np.sqrt(self.variance(t))

    def variance_T(self):
        if "varT" not in self._cache:
            self._cache["varT"] = float(self.variance(self.T))
        return self._cache["varT"]

    def invert_variance(self, v):
        """Return t in (0, T] with ``sigma^2(t) = v``."""
        v = np.asarray(v, dtype=float)
        vT = self.variance_T()
        if np.any(~np.isfinite(v)) or np.any(v <= 0.0) or np.any(v > vT * (1 + 1e-14)):
            raise DomainError(f"variance outside (0, sigma^2(T)={vT}]")
        v = np.minimum(v, vT)
        G = v if self.kind is Kind.VE else -np.log1p(-v)
        return self._cumulative_inverse(G)

    def marginal(self, t) -> GaussianMarginal:
        return GaussianMarginal(float(self.mean_coeff(t)), float(self.std(t)))

    def sample_forward_marginal(self, x0, t, rng: np.random.Generator):
        """Draw ``m(t) x0 + sigma(t) eta`` with ``eta ~ N(0, I)`` from ``rng``."""
        x0 = np.asarray(x0, dtype=float)
        m, s = self.mean_coeff(t), self.std(t)
        eta = rng.standard_normal(x0.shape)
        return m * x0 + s * eta

    def reference_std(self):
        """Standard deviation of the reference Gaussian at time T."""
        return math.sqrt(self.variance_T()) if self.kind is Kind.VE else 1.0


def singular_integral(schedule: Schedule, eps: float, delta: float) -> float:
    """``int_eps^delta g(t) / sigma^2(t) dt`` evaluated by quadrature.

    Diverges like ``log(1/eps)`` as eps -> 0 for the VE catalog schedules.
    """
    def f(t):
        return float(schedule.g(t)) / float(schedule.variance(t))

    # substitute t = exp(u) so the 1/t singularity becomes a smooth integrand
    val, _ = integrate.quad(lambda u: f(math.exp(u)) * math.exp(u),
                            math.log(eps), math.log(delta),
                            epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    return val
