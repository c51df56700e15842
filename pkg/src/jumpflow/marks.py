"""Mark laws for the jump measure, and a power-law Levy density that needs truncation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate


class QuadratureError(RuntimeError):
    """Raised when a mark-law quadrature does not reach its tolerance."""


# relative accuracy required from every mark-law integral
QUAD_RTOL = 1e-10


def _quad(fn, lo, hi, what="integrand", points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if points is not None and np.isfinite(hi):
                value, abserr = integrate.quad(fn, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=400, points=points)
            else:
                value, abserr = integrate.quad(fn, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=400)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature of {what} did not converge: {exc}") from exc
    if not np.isfinite(value) or abserr > max(QUAD_RTOL * abs(value), 1e-13):
        raise QuadratureError(f"quadrature of {what} did not converge (value={value!r}, abserr={abserr:.3g})")
    return value


@dataclass(frozen=True)
class Exponential:
    """Exponential marks ``loc + Exp(mean)``."""

    mean_excess: float
    loc: float = 0.0

    def __post_init__(self):
        if not self.mean_excess > 0:
            raise ValueError("exponential mark law needs mean > 0")
        if self.loc < 0:
            raise ValueError("exponential mark law needs loc >= 0")

    @property
    def mean(self) -> float:
        return self.loc + self.mean_excess

    @property
    def second_moment(self) -> float:
        return self.mean_excess**2 + self.mean**2

    @property
    def support(self):
        return (self.loc, math.inf)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.loc + rng.exponential(self.mean_excess, size=n)

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u < self.loc, 0.0, -np.expm1(-(u - self.loc) / self.mean_excess))

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u < self.loc, 0.0, np.exp(-(u - self.loc) / self.mean_excess) / self.mean_excess)

    def expect(self, fn, what="integrand") -> float:
        scale = self.mean_excess
        # substitute u = loc + scale*v so the weight is exp(-v) on [0, inf)
        return _quad(lambda v: float(fn(self.loc + scale * v)) * math.exp(-v), 0.0, math.inf, what)

    def above(self, eps: float):
        if eps <= self.loc:
            return 1.0, self
        return math.exp(-(eps - self.loc) / self.mean_excess), Exponential(self.mean_excess, loc=eps)

    def describe(self) -> dict:
        return {"exponential": {"mean": self.mean_excess, "loc": self.loc}}


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise ValueError("uniform mark law needs 0 <= lo < hi")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def second_moment(self) -> float:
        return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3.0

    @property
    def support(self):
        return (self.lo, self.hi)

    def sample(self, rng, n):
        return self.lo + (self.hi - self.lo) * rng.random(n)

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        return np.clip((u - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        return np.where((u >= self.lo) & (u <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def expect(self, fn, what="integrand") -> float:
        width = self.hi - self.lo
        return _quad(lambda u: float(fn(u)), self.lo, self.hi, what) / width

    def above(self, eps):
        if eps <= self.lo:
            return 1.0, self
        if eps >= self.hi:
            return 0.0, None
        return (self.hi - eps) / (self.hi - self.lo), Uniform(eps, self.hi)

    def describe(self):
        return {"uniform": {"lo": self.lo, "hi": self.hi}}


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("constant mark must be nonnegative")

    @property
    def mean(self):
        return self.value

    @property
    def second_moment(self):
        return self.value**2

    @property
    def support(self):
        return (self.value, self.value)

    def sample(self, rng, n):
        return np.full(n, self.value)

    def cdf(self, u):
        return np.where(np.asarray(u, dtype=float) < self.value, 0.0, 1.0)

    def expect(self, fn, what="integrand"):
        return float(fn(self.value))

    def above(self, eps):
        return (1.0, self) if self.value >= eps else (0.0, None)

    def describe(self):
        return {"constant": {"value": self.value}}


@dataclass(frozen=True)
class TruncatedPowerLaw:
    """Probability law proportional to ``u**(-1-alpha)`` on ``[lo, hi]``."""

    alpha: float
    lo: float
    hi: float

    def _tail(self, u):
        return u ** (-self.alpha)

    @property
    def _norm(self):
        return self._tail(self.lo) - self._tail(self.hi)

    def _raw_moment(self, p):
        # integral of u**p * u**(-1-alpha) over [lo, hi], divided by the normaliser
        e = p - self.alpha
        if abs(e) < 1e-14:
            raw = math.log(self.hi / self.lo)
        else:
            raw = (self.hi**e - self.lo**e) / e
        return raw * self.alpha / self._norm

    @property
    def mean(self):
        return self._raw_moment(1)

    @property
    def second_moment(self):
        return self._raw_moment(2)

    @property
    def support(self):
        return (self.lo, self.hi)

    def sample(self, rng, n):
        v = rng.random(n)
        return (self._tail(self.lo) - v * self._norm) ** (-1.0 / self.alpha)

    def cdf(self, u):
        u = np.clip(np.asarray(u, dtype=float), self.lo, self.hi)
        return (self._tail(self.lo) - u ** (-self.alpha)) / self._norm

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u >= self.lo) & (u <= self.hi)
        return np.where(inside, self.alpha * np.where(inside, u, 1.0) ** (-1 - self.alpha) / self._norm, 0.0)

    def expect(self, fn, what="integrand"):
        # log-spaced substitution tames the u**(-1-alpha) weight near lo
        a, b = math.log(self.lo), math.log(self.hi)
        w = self.alpha / self._norm

        def integrand(s):
            u = math.exp(s)
            return float(fn(u)) * w * u ** (-self.alpha)

        return _quad(integrand, a, b, what)

    def above(self, eps):
        if eps <= self.lo:
            return 1.0, self
        if eps >= self.hi:
            return 0.0, None
        law = TruncatedPowerLaw(self.alpha, eps, self.hi)
        return law._norm / self._norm, law

    def describe(self):
        return {"truncated_power_law": {"alpha": self.alpha, "lo": self.lo, "hi": self.hi}}


@dataclass(frozen=True)
class PowerLawDensity:
    """Levy density ``scale * u**(-1-alpha)`` on ``(0, upper]``.

    Infinite activity for every ``alpha > 0``; only its restriction to
    ``[floor, upper]`` can be simulated event by event.
    """

    scale: float
    alpha: float
    upper: float

    def __post_init__(self):
        if not (self.scale > 0 and 0 < self.alpha < 2 and self.upper > 0):
            raise ValueError("power-law density needs scale > 0, 0 < alpha < 2, upper > 0")

    @property
    def second_moment(self) -> float:
        return self.scale * self.upper ** (2 - self.alpha) / (2 - self.alpha)

    def truncate(self, floor: float):
        if not 0 < floor < self.upper:
            raise ValueError("truncation floor must lie in (0, upper)")
        rate = self.scale * (floor ** (-self.alpha) - self.upper ** (-self.alpha)) / self.alpha
        return rate, TruncatedPowerLaw(self.alpha, floor, self.upper)


def law_from_document(doc: dict):
    """Build a mark law from a single-key tagged document such as ``{"exponential": {"mean": 1}}``."""
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ValueError("mark_law must be a single-key mapping")
    (tag, params), = doc.items()
    params = dict(params or {})
    if tag == "exponential":
        return Exponential(float(params.pop("mean")), loc=float(params.pop("loc", 0.0)))
    if tag == "uniform":
        return Uniform(float(params["lo"]), float(params["hi"]))
    if tag == "constant":
        return Constant(float(params["value"]))
    raise ValueError(f"unknown mark law {tag!r}")
