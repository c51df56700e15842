"""Coefficients of the jump-diffusion equation, their truncations, and condition validators.

The equation simulated is

    x(t) = x(0) + int_0^t (b(s) + beta x(s)) ds + int_0^t sigma(x(s)) dB(s)
           + int_0^t int_U g(x(s-), u) Ntilde(ds, du)

with real marks ``u`` and a finite (possibly truncated) jump measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import marks
from .marks import Constant, Exponential, PowerLawDensity, QuadratureError, Uniform
from .yamada import ModulusFamily, check_divergence


class ValidationError(ValueError):
    """A model ingredient violates one of the standing assumptions."""


# integer codes understood by the compiled kernels
SIGMA_ZERO, SIGMA_SQRT, SIGMA_CUSTOM = 0, 1, 2
KERNEL_ZERO, KERNEL_CAPPED, KERNEL_LINEAR, KERNEL_CUSTOM = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# drift and initial value


@dataclass(frozen=True)
class DriftProcess:
    """Nonnegative drift ``b``.

    ``kind == "deterministic"`` carries a rate function (and optionally its
    antiderivative); ``kind == "adapted"`` carries a sampler
    ``sampler(rng, times) -> values`` returning one nonnegative value per
    master interval, held constant on that interval.
    """

    kind: str
    rate: Callable | None = None
    antiderivative: Callable | None = None
    sampler: Callable | None = None
    breakpoints: tuple = ()
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("deterministic", "adapted"):
            raise ValidationError(f"unknown drift kind {self.kind!r}")
        if self.kind == "deterministic" and self.rate is None:
            raise ValidationError("deterministic drift needs a rate function")
        if self.kind == "adapted" and self.sampler is None:
            raise ValidationError("adapted drift needs a path sampler")

    @classmethod
    def constant(cls, value: float) -> "DriftProcess":
        value = float(value)
        if not value >= 0:
            raise ValidationError(f"drift b must be nonnegative, got {value}")
        return cls(
            "deterministic",
            rate=lambda t: np.full_like(np.asarray(t, dtype=float), value),
            antiderivative=lambda t: value * np.asarray(t, dtype=float),
            description={"constant": {"value": value}},
        )

    @classmethod
    def table(cls, times, values) -> "DriftProcess":
        """Piecewise-constant drift: ``values[i]`` on ``[times[i], times[i+1])``."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size == 0:
            raise ValidationError("drift table needs equal-length 1-d times and values")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValidationError("drift table times must start at 0 and increase strictly")
        if np.any(values < 0):
            raise ValidationError("drift table values must be nonnegative")
        cum = np.concatenate([[0.0], np.cumsum(values[:-1] * np.diff(times))])

        def rate(t):
            i = np.searchsorted(times, np.asarray(t, dtype=float), side="right") - 1
            return values[np.clip(i, 0, None)]

        def antiderivative(t):
            t = np.asarray(t, dtype=float)
            i = np.clip(np.searchsorted(times, t, side="right") - 1, 0, None)
            return cum[i] + values[i] * (t - times[i])

        return cls(
            "deterministic",
            rate=rate,
            antiderivative=antiderivative,
            breakpoints=tuple(times[1:]),
            description={"table": {"times": times.tolist(), "values": values.tolist()}},
        )

    @classmethod
    def function(cls, rate, antiderivative=None) -> "DriftProcess":
        return cls("deterministic", rate=rate, antiderivative=antiderivative, description={"function": {}})

    @classmethod
    def adapted(cls, sampler) -> "DriftProcess":
        return cls("adapted", sampler=sampler, description={"adapted": {}})

    @property
    def is_deterministic(self) -> bool:
        return self.kind == "deterministic"

    def integral(self, s: float, t: float) -> float:
        """Exact (or quadrature) value of the deterministic integral of b over [s, t]."""
        if not self.is_deterministic:
            raise ValidationError("integral() needs a deterministic drift; use sample_integrals")
        if self.antiderivative is not None:
            return float(self.antiderivative(t) - self.antiderivative(s))
        inner = [p for p in self.breakpoints if s < p < t]
        return marks._quad(lambda v: float(self.rate(v)), s, t, "drift", points=inner or None)

    def interval_integrals(self, times: np.ndarray) -> np.ndarray:
        """Integral of b over each interval of ``times`` (deterministic drift).

        Exact when an antiderivative is known, left-endpoint rule otherwise.
        """
        times = np.asarray(times, dtype=float)
        if self.antiderivative is not None:
            return np.diff(self.antiderivative(times))
        return np.asarray(self.rate(times[:-1]), dtype=float) * np.diff(times)

    def sample_integrals(self, rng: np.random.Generator, times: np.ndarray) -> np.ndarray:
        if self.is_deterministic:
            return self.interval_integrals(times)
        values = np.asarray(self.sampler(rng, times), dtype=float)
        if values.shape != (len(times) - 1,):
            raise ValidationError("adapted drift sampler must return one value per master interval")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValidationError("adapted drift path must be finite and nonnegative")
        return values * np.diff(times)


@dataclass(frozen=True)
class InitialLaw:
    """Law of x(0); ``constant`` or ``lognormal`` (log-mean ``mu``, log-sd ``sigma``)."""

    kind: str
    value: float = 0.0
    mu: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind == "constant":
            if not self.value >= 0:
                raise ValidationError("x(0) must be nonnegative")
        elif self.kind == "lognormal":
            if not self.sigma >= 0:
                raise ValidationError("lognormal x(0) needs sigma >= 0")
        else:
            raise ValidationError(f"unknown initial law {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> "InitialLaw":
        return cls("constant", value=float(value))

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "InitialLaw":
        return cls("lognormal", mu=float(mu), sigma=float(sigma))

    @property
    def mean(self) -> float:
        if self.kind == "constant":
            return self.value
        return math.exp(self.mu + 0.5 * self.sigma**2)

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.value
        return float(rng.lognormal(self.mu, self.sigma))

    def describe(self) -> dict:
        if self.kind == "constant":
            return {"constant": {"value": self.value}}
        return {"lognormal": {"mu": self.mu, "sigma": self.sigma}}


# ---------------------------------------------------------------------------
# jump measure


@dataclass(frozen=True)
class JumpMeasure:
    """Finite jump measure ``mu = rate * law``.

    ``truncation_floor`` records the cut applied to an infinite-activity
    density (marks below it were discarded; their compensator is not folded
    into the drift).  ``full_second_moment`` is the second moment of the
    untruncated measure when one was supplied.
    """

    rate: float
    law: object | None = None
    truncation_floor: float | None = None
    full_second_moment: float | None = None

    def __post_init__(self):
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise ValidationError(f"jump rate must be finite and nonnegative, got {self.rate}")
        if self.rate > 0 and self.law is None:
            raise ValidationError("a positive jump rate needs a mark law")
        if not math.isfinite(self.second_moment):
            raise ValidationError("jump measure needs a finite second moment")

    @classmethod
    def none(cls) -> "JumpMeasure":
        return cls(0.0)

    @classmethod
    def from_law(cls, rate: float, law, truncation: float | None = None) -> "JumpMeasure":
        if truncation is None or rate == 0:
            return cls(float(rate), law if rate > 0 else None, truncation)
        if not truncation > 0:
            raise ValidationError("truncation floor must be positive")
        p, kept = law.above(truncation)
        if p == 0.0 or kept is None:
            return cls(0.0, None, truncation)
        return cls(float(rate) * p, kept, truncation)

    @classmethod
    def from_density(cls, density: PowerLawDensity, floor: float) -> "JumpMeasure":
        rate, law = density.truncate(floor)
        return cls(rate, law, floor, density.second_moment)

    @property
    def total_rate(self) -> float:
        return self.rate

    @property
    def first_moment(self) -> float:
        return 0.0 if self.rate == 0 else self.rate * self.law.mean

    @property
    def second_moment(self) -> float:
        return 0.0 if self.rate == 0 else self.rate * self.law.second_moment

    def integrate(self, fn, what="integrand") -> float:
        """``int fn(u) mu(du)`` by quadrature against the mark law."""
        if self.rate == 0:
            return 0.0
        return self.rate * self.law.expect(fn, what)

    def describe(self) -> dict:
        return {
            "rate": self.rate,
            "mark_law": None if self.law is None else self.law.describe(),
            "truncation": self.truncation_floor,
        }


# ---------------------------------------------------------------------------
# the model


@dataclass(frozen=True)
class ModulusSpec:
    """Modulus ``rho_m`` (and optional mark weight ``f_m``) for the uniqueness conditions."""

    rho: Callable
    f: Callable | None = None
    concave_square: bool = False

    def rho_sq(self, z):
        if isinstance(self.rho, ModulusFamily):
            return self.rho.rho_sq(z)
        return np.asarray(self.rho(z), dtype=float) ** 2


@dataclass(frozen=True)
class ModelSpec:
    """Complete coefficient bundle.

    ``sigma``, ``kernel`` and ``compensator`` are numpy-vectorised and only
    consulted on nonnegative states; ``compensator`` may be ``None``, in
    which case it is computed by quadrature against the mark law.
    ``codes`` lets the compiled kernels evaluate builtin coefficient
    families without calling back into Python.
    """

    beta: float
    sigma: Callable
    kernel: Callable
    compensator: Callable | None
    drift: DriftProcess
    measure: JumpMeasure
    growth_constant: float | None
    initial_law: InitialLaw
    family: str = "custom"
    kernel_name: str = "g"
    phi: Callable | None = None
    modulus: ModulusSpec | None = None
    codes: tuple | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.beta < 0:
            raise ValidationError(f"beta must be negative (beta<0 is a standing assumption), got {self.beta}")
        if self.growth_constant is not None and not self.growth_constant >= 0:
            raise ValidationError("growth constant K must be nonnegative")
        _check_coefficients(self)

    @property
    def jump_free(self) -> bool:
        return self.measure.rate == 0


def _probe_marks(measure: JumpMeasure, n=32):
    if measure.rate == 0:
        return np.array([0.0, 1.0])
    return np.asarray(measure.law.sample(np.random.default_rng(0), n), dtype=float)


def _check_coefficients(spec: ModelSpec):
    neg = np.array([-10.0, -1.0, -1e-6, 0.0])
    sig = np.asarray(spec.sigma(neg), dtype=float)
    if np.any(sig != 0):
        raise ValidationError("sigma must vanish for x <= 0")
    u = _probe_marks(spec.measure)
    g_neg = np.asarray(spec.kernel(neg[:, None], u[None, :]), dtype=float)
    if np.any(g_neg != 0):
        raise ValidationError(f"jump kernel {spec.kernel_name} must vanish for x <= 0")
    pos = np.geomspace(1e-6, 1e3, 19)
    g_pos = np.asarray(spec.kernel(pos[:, None], u[None, :]), dtype=float)
    if np.any(g_pos + pos[:, None] < 0):
        raise ValidationError(f"jump kernel {spec.kernel_name} must satisfy g(x,u) + x >= 0 for x > 0")


# ---------------------------------------------------------------------------
# truncated coefficients


def sigma_trunc(spec: ModelSpec, x):
    """sigma(x) on x >= 0, zero on negative states."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, np.asarray(spec.sigma(np.maximum(x, 0.0)), dtype=float), 0.0)
    return float(out) if out.ndim == 0 else out


def g_trunc(spec: ModelSpec, x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    val = np.asarray(spec.kernel(np.maximum(x, 0.0), u), dtype=float)
    out = np.where(x >= 0, val, 0.0)
    return float(out) if out.ndim == 0 else out


def compensator_trunc(spec: ModelSpec, x):
    """Drift correction ``int_U g'(x,u) mu(du)``.

    Uses the analytic compensator when the model carries one, otherwise
    adaptive quadrature against the mark law (relative accuracy 1e-10).
    """
    x = np.asarray(x, dtype=float)
    if spec.measure.rate == 0:
        out = np.zeros_like(x)
    elif spec.compensator is not None:
        out = np.where(x >= 0, np.asarray(spec.compensator(np.maximum(x, 0.0)), dtype=float), 0.0)
    else:
        flat = x.reshape(-1)
        vals = np.empty_like(flat)
        for i, xi in enumerate(flat):
            if xi < 0:
                vals[i] = 0.0
                continue
            try:
                vals[i] = spec.measure.integrate(lambda u: spec.kernel(xi, u), what=f"jump kernel {spec.kernel_name}")
            except QuadratureError as exc:
                raise QuadratureError(f"compensator of jump kernel {spec.kernel_name} at x={xi}: {exc}") from exc
        out = vals.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# validators


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), **_plain(self.detail)}


@dataclass
class ValidationReport:
    title: str
    checks: list
    notes: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "title": self.title,
            "passed": self.passed,
            "summary": _plain(self.summary),
            "checks": [c.to_dict() for c in self.checks],
            "notes": list(self.notes),
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


_TOL_REL = 1e-9
_TOL_ABS = 1e-12


def _leq(lhs, rhs):
    return lhs <= rhs + _TOL_REL * abs(rhs) + _TOL_ABS


def validate_growth(spec: ModelSpec, grid, K: float | None = None, strict: bool = False) -> ValidationReport:
    """Check ``sigma^2(x) + int g^2(x,u) mu(du) <= K(1+x)`` on every grid state.

    The printed condition takes a supremum over ``0 <= y <= x`` of an
    integrand that does not depend on ``y``; the default check uses
    ``g^2(x,u)`` literally, ``strict=True`` uses ``sup_y g^2(y,u)`` instead.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("validate_growth needs a nonempty grid")
    if np.any(grid < 0):
        raise ValueError("validate_growth grid states must be nonnegative")
    if K is None:
        K = spec.growth_constant
    if K is None:
        raise ValueError("no growth constant K supplied and the model carries none")
    checks = []
    tightest = 0.0
    for x in grid:
        sig2 = float(sigma_trunc(spec, x)) ** 2
        if strict:
            ys = np.linspace(0.0, x, 65)

            def integrand(u, ys=ys):
                return float(np.max(g_trunc(spec, ys, u) ** 2))
        else:

            def integrand(u, x=x):
                return float(g_trunc(spec, x, u)) ** 2

        jump2 = spec.measure.integrate(integrand, what=f"squared jump kernel {spec.kernel_name}")
        lhs = sig2 + jump2
        rhs = K * (1.0 + x)
        tightest = max(tightest, lhs / (1.0 + x))
        checks.append(
            CheckResult(f"growth@x={x:g}", _leq(lhs, rhs), {"x": x, "lhs": lhs, "rhs": rhs, "jump_part": jump2, "se": 0.0})
        )
    notes = [
        "growth integrand taken literally as g^2(x,u); the supremum over 0<=y<=x has no y-dependence as printed"
        if not strict
        else "strict mode: integrand sup_{0<=y<=x} g^2(y,u) sampled on 65 points"
    ]
    return ValidationReport("growth", checks, notes, {"K": K, "tightest_K": tightest})


_MODES = ("2c", "2d", "3a", "3b")


def _mod_rho(mod: ModulusSpec, z):
    return np.asarray(mod.rho(np.asarray(z, dtype=float)), dtype=float)


def validate_modulus(
    spec: ModelSpec,
    mod: ModulusSpec,
    mode: str,
    pair_grid,
    m: float,
    *,
    n_marks: int = 64,
    divergence_threshold: float = 1e3,
    divergence_floor: float = 1e-12,
) -> ValidationReport:
    """Check one of the modulus conditions on a list of state pairs in ``[0, m]``.

    Besides the pairwise inequality, the report carries monotonicity of
    ``x -> g(x,u)`` on sampled marks, the divergence proxy for the integral
    of ``rho^-2`` at zero, midpoint concavity of ``rho^2`` (modes 3a/3b) and
    finiteness of the mark-weight integral (modes 2d/3b).
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    pairs = np.asarray(pair_grid, dtype=float).reshape(-1, 2)
    if pairs.size == 0:
        raise ValueError("validate_modulus needs at least one pair")
    bad = (pairs < 0) | (pairs > m)
    if np.any(bad):
        i = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise ValueError(f"pair {tuple(pairs[i])} lies outside [0, {m}]")
    if mode in ("2d", "3b") and mod.f is None:
        raise ValueError(f"mode {mode} needs a mark weight f in the ModulusSpec")

    checks = []
    u_probe = _probe_marks(spec.measure, n_marks)
    for x, y in pairs:
        z = abs(x - y)
        dsig = float(sigma_trunc(spec, x)) - float(sigma_trunc(spec, y))
        rho = float(_mod_rho(mod, z))
        if mode in ("2c", "3a"):
            if mode == "3a":

                def integrand(u):
                    return (float(g_trunc(spec, x, u)) - float(g_trunc(spec, y, u))) ** 2
            else:

                def integrand(u):
                    l_ = float(g_trunc(spec, x, u)) - float(g_trunc(spec, y, u))
                    return min(abs(l_), l_ * l_)

            jump = spec.measure.integrate(integrand, what=f"jump kernel {spec.kernel_name} difference")
            lhs = dsig**2 + jump
            rhs = rho**2
            checks.append(CheckResult(f"modulus@({x:g},{y:g})", _leq(lhs, rhs), {"x": x, "y": y, "lhs": lhs, "rhs": rhs}))
        else:
            ok_sig = _leq(abs(dsig), rho)
            l_ = np.abs(g_trunc(spec, x, u_probe) - g_trunc(spec, y, u_probe))
            bound = rho * np.asarray(mod.f(u_probe), dtype=float)
            ratio_ok = bool(np.all(l_ <= bound * (1 + _TOL_REL) + _TOL_ABS))
            worst = float(np.max(l_ - bound)) if l_.size else 0.0
            checks.append(
                CheckResult(
                    f"modulus@({x:g},{y:g})",
                    ok_sig and ratio_ok,
                    {"x": x, "y": y, "sigma_diff": abs(dsig), "rho": rho, "worst_kernel_excess": worst},
                )
            )

    # monotonicity of x -> g(x, u) on sampled marks
    xs = np.unique(np.concatenate([pairs.ravel(), np.linspace(0.0, m, 33)]))
    gx = g_trunc(spec, xs[:, None], u_probe[None, :])
    dec = np.diff(gx, axis=0)
    checks.append(
        CheckResult(
            "kernel_nondecreasing",
            bool(np.all(dec >= -_TOL_ABS)),
            {"worst_decrease": float(-dec.min()) if dec.size else 0.0},
        )
    )

    div = check_divergence(mod.rho, divergence_threshold, divergence_floor)
    checks.append(CheckResult("rho_inverse_square_divergent", div.divergent, div.to_dict()))

    if mode in ("3a", "3b"):
        zs = np.linspace(0.0, 2.0 * m, 257)
        a, b = np.meshgrid(zs, zs, indexing="ij")
        mid = mod.rho_sq(0.5 * (a + b))
        avg = 0.5 * (mod.rho_sq(a) + mod.rho_sq(b))
        gap = float(np.max(avg - mid))
        checks.append(CheckResult("rho_square_concave", gap <= 1e-10 * max(1.0, float(np.max(np.abs(mid)))), {"worst_gap": gap}))
        if not mod.concave_square:
            checks[-1].detail["note"] = "concavity not asserted by the modulus spec; checked numerically"

    if mode in ("2d", "3b"):
        if mode == "2d":
            fn = lambda u: min(float(mod.f(u)), float(mod.f(u)) ** 2)  # noqa: E731
            label = "int (f ^ f^2) dmu"
        else:
            fn = lambda u: float(mod.f(u)) ** 2  # noqa: E731
            label = "int f^2 dmu"
        try:
            value = spec.measure.integrate(fn, what=label)
            finite = math.isfinite(value)
        except QuadratureError as exc:
            value, finite = str(exc), False
        checks.append(CheckResult("mark_weight_integrable", finite, {"integral": label, "value": value}))

    return ValidationReport(f"modulus[{mode}]", checks, summary={"mode": mode, "m": m, "n_pairs": len(pairs)})


def validate_levy(spec: ModelSpec, pair_grid, m: float, K_m: float | None = None) -> ValidationReport:
    """Condition for the Levy-driven form: phi nondecreasing and
    ``|sigma(x)-sigma(y)|^2 + |phi(x)-phi(y)|^2 <= K_m |x-y|`` on ``[0, m]``."""
    if spec.phi is None:
        raise ValueError("model has no phi; it is not a Levy-driven model")
    pairs = np.asarray(pair_grid, dtype=float).reshape(-1, 2)
    if np.any((pairs < 0) | (pairs > m)):
        raise ValueError(f"pairs must lie in [0, {m}]")
    ratios = []
    for x, y in pairs:
        if x == y:
            continue
        lhs = (float(sigma_trunc(spec, x)) - float(sigma_trunc(spec, y))) ** 2 + (float(spec.phi(x)) - float(spec.phi(y))) ** 2
        ratios.append(lhs / abs(x - y))
    tightest = max(ratios, default=0.0)
    xs = np.linspace(0.0, m, 257)
    phis = np.asarray(spec.phi(xs), dtype=float)
    checks = [
        CheckResult("phi_nonnegative", bool(np.all(phis >= 0)), {}),
        CheckResult("phi_zero_at_origin", float(spec.phi(0.0)) == 0.0, {}),
        CheckResult("phi_nondecreasing", bool(np.all(np.diff(phis) >= -_TOL_ABS)), {}),
    ]
    if K_m is not None:
        checks.append(CheckResult("holder_half", _leq(tightest, K_m), {"K_m": K_m, "tightest": tightest}))
    return ValidationReport("levy", checks, summary={"tightest_K_m": tightest, "m": m})


# ---------------------------------------------------------------------------
# builtin families


def _sqrt_sigma(sigma0):
    def sigma(x):
        x = np.asarray(x, dtype=float)
        return sigma0 * np.sqrt(np.maximum(x, 0.0))

    return sigma


def _zero_kernel(x, u):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(u)).shape)


def _capped_kernel(cap):
    def kernel(x, u):
        x = np.asarray(x, dtype=float)
        return np.asarray(u, dtype=float) * np.minimum(np.maximum(x, 0.0), cap)

    return kernel


def _linear_kernel(slope):
    def kernel(x, u):
        x = np.asarray(x, dtype=float)
        return slope * np.maximum(x, 0.0) * np.asarray(u, dtype=float)

    return kernel


def _as_drift(value) -> DriftProcess:
    if isinstance(value, DriftProcess):
        return value
    return DriftProcess.constant(value)


def _as_initial(value) -> InitialLaw:
    if isinstance(value, InitialLaw):
        return value
    return InitialLaw.constant(value)


def _measure_from_params(params) -> JumpMeasure:
    if "measure" in params:
        return params["measure"]
    rate = float(params.get("rate", params.get("jump_rate", 0.0)))
    if rate == 0:
        return JumpMeasure.none()
    law = params.get("mark_law")
    if law is None:
        raise ValidationError("a jump rate needs a mark_law")
    if isinstance(law, dict):
        law = marks.law_from_document(law)
    return JumpMeasure.from_law(rate, law, params.get("truncation"))


_REQUIRED = {
    "cir": ("sigma0",),
    "cir_jump": ("sigma0", "rate", "mark_law"),
    "levy_onesided": ("sigma0", "phi_slope"),
}


def builtin_model(name: str, params: dict) -> ModelSpec:
    """Construct one of the builtin families.

    ``cir``: ``sigma(x) = sigma0 sqrt(x+)`` without jumps.
    ``cir_jump``: adds jumps ``g(x,u) = u * min(x+, cap)`` (cap defaults to 1).
    ``levy_onesided``: ``g(x,u) = phi(x) u`` with ``phi(x) = phi_slope * x+``,
    the compensated-integral form of a diffusion driven by a centred
    one-sided pure-jump Levy process; ``measure`` may carry a truncated
    power-law density.
    """
    if name not in _REQUIRED:
        raise ValidationError(f"unknown builtin family {name!r}; expected one of {sorted(_REQUIRED)}")
    params = dict(params)
    missing = [k for k in _REQUIRED[name] if k not in params and not (k in ("rate", "mark_law") and "measure" in params)]
    if missing:
        raise ValidationError(f"{name} needs parameter(s) {missing}")
    beta = float(params.get("beta", -1.0))
    sigma0 = float(params["sigma0"])
    if sigma0 < 0:
        raise ValidationError("sigma0 must be nonnegative")
    drift = _as_drift(params.get("drift", 0.0))
    x0 = _as_initial(params.get("x0", 1.0))
    sigma_code = (SIGMA_SQRT, sigma0) if sigma0 > 0 else (SIGMA_ZERO, 0.0)

    if name == "cir":
        measure = JumpMeasure.none()
        K = params.get("growth_K", sigma0**2)
        return ModelSpec(
            beta=beta,
            sigma=_sqrt_sigma(sigma0),
            kernel=_zero_kernel,
            compensator=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            drift=drift,
            measure=measure,
            growth_constant=K,
            initial_law=x0,
            family=name,
            kernel_name="zero",
            modulus=ModulusSpec(ModulusFamily.power(sigma0 if sigma0 > 0 else 1.0, 0.5), concave_square=True),
            codes=(*sigma_code, KERNEL_ZERO, 0.0),
            params={"sigma0": sigma0, "beta": beta},
        )

    measure = _measure_from_params(params)
    m1, m2 = measure.first_moment, measure.second_moment

    if name == "cir_jump":
        cap = float(params.get("cap", 1.0))
        if not cap > 0:
            raise ValidationError("cap must be positive")
        K = params.get("growth_K", sigma0**2 + m2 * cap**2)
        rho_scale = math.sqrt(sigma0**2 + m2 * cap) if sigma0**2 + m2 * cap > 0 else 1.0
        return ModelSpec(
            beta=beta,
            sigma=_sqrt_sigma(sigma0),
            kernel=_capped_kernel(cap),
            compensator=lambda x: m1 * np.minimum(np.maximum(np.asarray(x, dtype=float), 0.0), cap),
            drift=drift,
            measure=measure,
            growth_constant=K,
            initial_law=x0,
            family=name,
            kernel_name=f"u*min(x,{cap:g})",
            modulus=ModulusSpec(ModulusFamily.power(rho_scale, 0.5), concave_square=True),
            codes=(*sigma_code, KERNEL_CAPPED, cap),
            params={"sigma0": sigma0, "beta": beta, "cap": cap, "m1": m1, "m2": m2},
        )

    slope = float(params["phi_slope"])
    if slope < 0:
        raise ValidationError("phi_slope must be nonnegative (phi is nonnegative and nondecreasing)")

    def phi(x):
        return slope * np.maximum(np.asarray(x, dtype=float), 0.0)

    # g = phi(x) u grows like x^2 in the growth condition, so no global K exists
    K = params.get("growth_K")
    return ModelSpec(
        beta=beta,
        sigma=_sqrt_sigma(sigma0),
        kernel=_linear_kernel(slope),
        compensator=lambda x: phi(x) * m1,
        drift=drift,
        measure=measure,
        growth_constant=K,
        initial_law=x0,
        family=name,
        kernel_name=f"{slope:g}*x*u",
        phi=phi,
        codes=(*sigma_code, KERNEL_LINEAR, slope),
        params={"sigma0": sigma0, "beta": beta, "phi_slope": slope, "m1": m1, "m2": m2},
    )


def custom_model(
    *,
    beta: float,
    sigma: Callable,
    kernel: Callable | None = None,
    compensator: Callable | None = None,
    measure: JumpMeasure | None = None,
    drift=0.0,
    x0=1.0,
    growth_K: float | None = None,
    kernel_name: str = "g",
    phi: Callable | None = None,
    modulus: ModulusSpec | None = None,
) -> ModelSpec:
    """Model with user-supplied vectorised coefficients.

    ``sigma`` and ``kernel`` are evaluated only at nonnegative states by the
    scheme; they are wrapped so that they vanish identically for ``x <= 0``.
    """

    def sigma_w(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, np.asarray(sigma(np.maximum(x, 0.0)), dtype=float), 0.0)

    if kernel is None:
        kernel_w = _zero_kernel
    else:

        def kernel_w(x, u):
            x = np.asarray(x, dtype=float)
            u = np.asarray(u, dtype=float)
            return np.where(x > 0, np.asarray(kernel(np.maximum(x, 0.0), u), dtype=float), 0.0)

    if float(np.asarray(sigma(0.0))) != 0.0:
        raise ValidationError("sigma must vanish at the origin (sigma(x)=0 for x<=0 with sigma continuous)")
    return ModelSpec(
        beta=float(beta),
        sigma=sigma_w,
        kernel=kernel_w,
        compensator=compensator,
        drift=_as_drift(drift),
        measure=measure if measure is not None else JumpMeasure.none(),
        growth_constant=growth_K,
        initial_law=_as_initial(x0),
        family="custom",
        kernel_name=kernel_name,
        phi=phi,
        modulus=modulus,
        codes=None,
    )


__all__ = [
    "Constant",
    "DriftProcess",
    "Exponential",
    "InitialLaw",
    "JumpMeasure",
    "ModelSpec",
    "ModulusSpec",
    "PowerLawDensity",
    "Uniform",
    "ValidationError",
    "builtin_model",
    "compensator_trunc",
    "custom_model",
    "g_trunc",
    "sigma_trunc",
    "validate_growth",
    "validate_levy",
    "validate_modulus",
]
