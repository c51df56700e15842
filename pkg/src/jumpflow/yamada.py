"""Smooth approximations of |z| built from a non-Lipschitz modulus.

Given a nondecreasing modulus ``rho`` with a divergent integral of
``rho^-2`` at zero, the levels ``a_0 > a_1 > ... > 0`` satisfy
``int_{a_k}^{a_{k-1}} rho^-2 = k``; a bump ``psi_k`` supported in
``(a_k, a_{k-1})`` integrates to one and is dominated by ``2/k rho^-2``;
and ``phi_k(z) = int_0^|z| dy int_0^y psi_k`` increases to ``|z|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

TINY = np.finfo(float).tiny

# Gauss-Legendre rule shared by every panel table
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


class MollifierRangeError(ArithmeticError):
    """The level sequence cannot be continued in double precision."""

    def __init__(self, message, max_k):
        super().__init__(message)
        self.max_k = max_k


class MollifierConstructionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# modulus families


@dataclass(frozen=True)
class ModulusFamily:
    """A modulus ``rho`` with (when known) a closed-form primitive of ``rho^-2``.

    The log families are real and increasing only below their maximiser
    ``z_star``; beyond it they are held constant, and mollifiers built from
    them start at ``a_0 = min(1, z_star)``.
    """

    kind: str
    scale: float = 1.0
    exponent: float = 0.5
    z_star: float = math.inf
    fn: Callable | None = None
    note: str = ""

    # -- constructors -----------------------------------------------------

    @classmethod
    def power(cls, scale: float = 1.0, exponent: float = 0.5) -> "ModulusFamily":
        if not (scale > 0 and exponent >= 0):
            raise ValueError("power modulus needs scale > 0 and exponent >= 0")
        kind = "sqrt" if exponent == 0.5 else "power"
        return cls(kind, float(scale), float(exponent))

    @classmethod
    def sqrt(cls, scale: float = 1.0) -> "ModulusFamily":
        return cls.power(scale, 0.5)

    @classmethod
    def constant(cls, value: float = 1.0) -> "ModulusFamily":
        return cls.power(value, 0.0)

    @classmethod
    def sqrt_log(cls, scale: float = 1.0) -> "ModulusFamily":
        # z log(1/z) peaks at 1/e
        return cls(
            "sqrt_log",
            float(scale),
            z_star=math.exp(-1.0),
            note="z^(1/2) log(1/z)^(1/2) is increasing only on (0, 1/e]; held constant beyond",
        )

    @classmethod
    def sqrt_log_log(cls, scale: float = 1.0) -> "ModulusFamily":
        # d/dz [z L log L] = L log L - log L - 1 with L = log(1/z); zero where (L-1) log L = 1
        L_star = optimize.brentq(lambda L: (L - 1.0) * math.log(L) - 1.0, 1.5, 5.0, xtol=1e-15, rtol=1e-15)
        return cls(
            "sqrt_log_log",
            float(scale),
            z_star=math.exp(-L_star),
            note="iterated-log modulus needs log log(1/z) > 0 (z < 1/e) and is increasing only up to "
            f"z*={math.exp(-L_star):.6g}; held constant beyond",
        )

    @classmethod
    def custom(cls, fn: Callable, z_star: float = math.inf) -> "ModulusFamily":
        return cls("custom", fn=fn, z_star=z_star)

    @classmethod
    def coerce(cls, rho) -> "ModulusFamily":
        if isinstance(rho, ModulusFamily):
            return rho
        if callable(rho):
            return cls.custom(rho)
        raise TypeError("modulus must be a ModulusFamily or a callable")

    # -- evaluation ------------------------------------------------------

    def _rho_sq_raw(self, z):
        c2 = self.scale**2
        if self.kind in ("sqrt", "power"):
            with np.errstate(divide="ignore", invalid="ignore"):
                return c2 * np.where(z > 0, np.power(np.where(z > 0, z, 1.0), 2 * self.exponent), 0.0 if self.exponent > 0 else 1.0)
        if self.kind == "sqrt_log":
            zz = np.clip(z, 1e-320, 1.0)
            return np.where(z > 0, c2 * zz * -np.log(zz), 0.0)
        if self.kind == "sqrt_log_log":
            zz = np.clip(z, 1e-320, self.z_star)
            L = -np.log(zz)
            return np.where(z > 0, c2 * zz * L * np.log(L), 0.0)
        return np.asarray(self.fn(z), dtype=float) ** 2

    def rho_sq(self, z):
        z = np.asarray(z, dtype=float)
        capped = np.minimum(z, self.z_star) if math.isfinite(self.z_star) else z
        out = self._rho_sq_raw(capped)
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, z):
        out = np.sqrt(np.asarray(self.rho_sq(z), dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def inv_rho_sq(self, z):
        with np.errstate(divide="ignore"):
            return 1.0 / np.asarray(self.rho_sq(z), dtype=float)

    @property
    def a0(self) -> float:
        return min(1.0, self.z_star)

    # -- primitive of rho^-2 (increasing in z) ----------------------------

    @property
    def has_primitive(self) -> bool:
        return self.kind != "custom"

    def primitive(self, z):
        """``P`` with ``P(b) - P(a) = int_a^b rho^-2`` for ``0 < a < b <= z_star``."""
        z = np.asarray(z, dtype=float)
        c2 = self.scale**2
        if self.kind in ("sqrt", "power"):
            e = 1.0 - 2.0 * self.exponent
            if e == 0.0:
                return np.log(z) / c2
            return np.power(z, e) / (e * c2)
        if self.kind == "sqrt_log":
            return -np.log(-np.log(z)) / c2
        if self.kind == "sqrt_log_log":
            return -np.log(np.log(-np.log(z))) / c2
        raise ValueError("custom modulus has no closed-form primitive")

    def primitive_inverse(self, v):
        v = np.asarray(v, dtype=float)
        c2 = self.scale**2
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            if self.kind in ("sqrt", "power"):
                e = 1.0 - 2.0 * self.exponent
                if e == 0.0:
                    return np.exp(c2 * v)
                base = e * c2 * v
                return np.where(base > 0, np.power(np.where(base > 0, base, 1.0), 1.0 / e), np.nan)
            if self.kind == "sqrt_log":
                return np.exp(-np.exp(-c2 * v))
            if self.kind == "sqrt_log_log":
                return np.exp(-np.exp(np.exp(-c2 * v)))
        raise ValueError("custom modulus has no closed-form primitive")

    def integral_inv_sq(self, lo: float, hi: float) -> float:
        """``int_lo^hi rho^-2(z) dz`` (closed form where available)."""
        if lo >= hi:
            return 0.0
        if self.has_primitive:
            total = 0.0
            top = min(hi, self.z_star)
            if lo < top:
                total += float(self.primitive(top) - self.primitive(lo))
            if hi > self.z_star:
                total += (hi - max(lo, self.z_star)) * float(self.inv_rho_sq(self.z_star))
            return total
        return _log_quad(lambda z: float(self.inv_rho_sq(z)), lo, hi)

    @property
    def divergence_law(self) -> str | None:
        """Closed-form growth of the integral of rho^-2 over [a, 1] as a -> 0, if known."""
        if self.kind in ("sqrt", "power"):
            e = 1.0 - 2.0 * self.exponent
            if e == 0.0:
                return f"{self.scale**-2:g} * log(1/a)  (diverges logarithmically)"
            if e < 0:
                return f"{self.scale**-2 / -e:g} * a^({e:g})  (diverges polynomially)"
            return f"bounded by {self.scale**-2 / e:g}  (converges)"
        if self.kind == "sqrt_log":
            return f"{self.scale**-2:g} * log log(1/a)  (diverges doubly-logarithmically)"
        if self.kind == "sqrt_log_log":
            return f"{self.scale**-2:g} * log log log(1/a)  (diverges triply-logarithmically)"
        return None

    @property
    def diverges(self) -> bool | None:
        if self.kind in ("sqrt", "power"):
            return 2.0 * self.exponent >= 1.0
        if self.kind in ("sqrt_log", "sqrt_log_log"):
            return True
        return None

    def describe(self) -> dict:
        d = {"kind": self.kind, "scale": self.scale}
        if self.kind == "power":
            d["exponent"] = self.exponent
        if math.isfinite(self.z_star):
            d["z_star"] = self.z_star
        return d


def _log_quad(fn, lo, hi):
    # integrate over log z: integrand fn(z) * z
    def g(s):
        z = math.exp(s)
        return fn(z) * z

    value, _ = integrate.quad(g, math.log(lo), math.log(hi), epsabs=0.0, epsrel=1e-13, limit=500)
    return value


# ---------------------------------------------------------------------------
# divergence proxy


@dataclass
class DivergenceReport:
    integral: float
    threshold: float
    floor: float
    exceeds_threshold: bool
    closed_form: str | None
    divergent: bool
    caveat: str = ""

    def to_dict(self):
        return {
            "integral": self.integral,
            "threshold": self.threshold,
            "floor": self.floor,
            "exceeds_threshold": self.exceeds_threshold,
            "closed_form": self.closed_form,
            "divergent": self.divergent,
            "caveat": self.caveat,
        }


def check_divergence(rho, threshold: float = 1e3, floor: float = 1e-12) -> DivergenceReport:
    """Proxy for ``int_{0+} rho^-2 = inf``: the partial integral over ``[floor, 1]``.

    When the modulus family has a known growth law the verdict comes from
    it, and the threshold comparison is reported alongside; otherwise the
    verdict is the threshold comparison itself, which is a proxy and not a
    proof.
    """
    if not floor > 0:
        raise ValueError("floor must be positive")
    fam = ModulusFamily.coerce(rho)
    try:
        value = fam.integral_inv_sq(floor, 1.0)
    except (ZeroDivisionError, FloatingPointError):
        value = math.inf
    if not math.isfinite(value):
        value = math.inf
    exceeds = value > threshold
    law = fam.divergence_law
    if fam.diverges is not None:
        divergent = fam.diverges
        caveat = ""
        if divergent and not exceeds:
            caveat = (
                f"partial integral {value:.6g} stays below the threshold {threshold:g} at floor {floor:g}; "
                f"growth law {law} diverges nonetheless"
            )
    else:
        divergent = exceeds
        caveat = "numerical proxy: threshold exceedance at a finite floor, not a proof of divergence"
    return DivergenceReport(value, threshold, floor, exceeds, law, divergent, caveat)


# ---------------------------------------------------------------------------
# level sequence


def compute_a(rho, K: int) -> np.ndarray:
    """Levels ``a_0, ..., a_K`` with ``int_{a_k}^{a_{k-1}} rho^-2 = k``.

    ``a_0 = 1`` (or the family's cap ``z_star`` when that is smaller).
    Closed forms are used when the family has a primitive; otherwise each
    level is found by bracketing and Brent's method on the partial
    integral, to relative accuracy 1e-12.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    fam = ModulusFamily.coerce(rho)
    a = [fam.a0]
    if fam.has_primitive:
        v0 = float(fam.primitive(fam.a0))
        for k in range(1, K + 1):
            # P(a_k) = P(a_0) - (1 + 2 + ... + k)
            ak = float(fam.primitive_inverse(v0 - k * (k + 1) / 2.0))
            if not (math.isfinite(ak) and ak >= TINY and ak < a[-1]):
                raise MollifierRangeError(
                    f"a_{k} underflows double precision for {fam.kind}; maximum achievable K is {k - 1}", k - 1
                )
            a.append(ak)
        return np.array(a)

    for k in range(1, K + 1):
        prev = a[-1]

        def excess(s, prev=prev, k=k):
            return _log_quad(lambda z: float(fam.inv_rho_sq(z)), prev * math.exp(-s), prev) - k

        hi = 1.0
        while excess(hi) < 0:
            hi *= 2.0
            if prev * math.exp(-hi) < TINY:
                raise MollifierRangeError(
                    f"partial integral cannot reach {k} before underflow; maximum achievable K is {k - 1}", k - 1
                )
        s = optimize.brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-13)
        a.append(prev * math.exp(-s))
    return np.array(a)


# ---------------------------------------------------------------------------
# bumps and their antiderivative tables


@dataclass
class Bump:
    """Tapered profile ``psi_k = c_k tau_k rho^-2 / k`` on ``(lo, hi) = (a_k, a_{k-1})``."""

    k: int
    lo: float
    hi: float
    delta: float
    norm: float
    rho: ModulusFamily
    shrinks: int
    edges: np.ndarray = field(repr=False)
    cum_mass: np.ndarray = field(repr=False)
    cum_moment: np.ndarray = field(repr=False)

    def taper(self, z):
        z = np.asarray(z, dtype=float)
        t = np.minimum((z - self.lo) / self.delta, (self.hi - z) / self.delta)
        return np.clip(t, 0.0, 1.0)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z > self.lo) & (z < self.hi)
        zi = np.where(inside, z, self.hi)
        out = np.where(inside, self.norm / self.k * self.taper(zi) * self.rho.inv_rho_sq(zi), 0.0)
        return float(out) if out.ndim == 0 else out

    @property
    def mass(self) -> float:
        return float(self.cum_mass[-1])

    @property
    def first_moment(self) -> float:
        """``int z psi_k(z) dz``; equals ``|z| - phi_k(z)`` once ``|z| >= a_{k-1}``."""
        return float(self.cum_moment[-1])

    def _partial(self, y, weight_moment):
        # integral of psi (or z*psi) from the panel start to y, per element
        p = np.clip(np.searchsorted(self.edges, y, side="right") - 1, 0, len(self.edges) - 2)
        start = self.edges[p]
        half = 0.5 * (y - start)
        nodes = start[:, None] + half[:, None] * (_GL_X[None, :] + 1.0)
        vals = self(nodes)
        if weight_moment:
            vals = vals * nodes
        return p, (vals @ _GL_W) * half

    def antiderivative(self, y):
        """``Psi_k(y) = int_0^y psi_k``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.where(y >= self.hi, self.mass, 0.0)
        mid = (y > self.lo) & (y < self.hi)
        if np.any(mid):
            p, part = self._partial(y[mid], False)
            out[mid] = self.cum_mass[p] + part
        return out

    def second_antiderivative(self, y):
        """``int_0^y Psi_k`` for ``y >= 0``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.where(y >= self.hi, y * self.mass - self.first_moment, 0.0)
        mid = (y > self.lo) & (y < self.hi)
        if np.any(mid):
            ym = y[mid]
            p, m0 = self._partial(ym, False)
            _, m1 = self._partial(ym, True)
            # int_lo^y (y - s) psi(s) ds
            out[mid] = ym * (self.cum_mass[p] + m0) - (self.cum_moment[p] + m1)
        return out


def _panel_edges(breaks):
    edges = [breaks[0]]
    for u, v in zip(breaks[:-1], breaks[1:]):
        if v <= u:
            continue
        n = max(2, int(math.ceil(math.log2(v / u))) if u > 0 else 2)
        pts = u * (v / u) ** (np.arange(1, n + 1) / n)
        pts[-1] = v
        edges.extend(pts.tolist())
    return np.array(edges)


def _panel_integrals(fn, edges):
    half = 0.5 * np.diff(edges)
    nodes = edges[:-1, None] + half[:, None] * (_GL_X[None, :] + 1.0)
    vals = fn(nodes)
    mass = (vals @ _GL_W) * half
    moment = ((vals * nodes) @ _GL_W) * half
    return mass, moment


def make_psi(rho, a, k: int, max_shrinks: int = 20) -> Bump:
    """Build ``psi_k`` on ``(a[k], a[k-1])``.

    The taper ramps linearly over ``delta_k = (a_{k-1} - a_k)/8`` at each
    end; ``delta_k`` is halved (at most ``max_shrinks`` times) until the
    normaliser ``c_k`` is at most 2, which is exactly the condition
    ``psi_k <= 2 rho^-2 / k``.
    """
    fam = ModulusFamily.coerce(rho)
    lo, hi = float(a[k]), float(a[k - 1])
    delta = (hi - lo) / 8.0
    for shrinks in range(max_shrinks + 1):
        edges = _panel_edges([lo, lo + delta, hi - delta, hi])
        trial = Bump(k, lo, hi, delta, 1.0, fam, shrinks, edges, np.zeros(1), np.zeros(1))
        mass, _ = _panel_integrals(trial, edges)
        raw = float(np.sum(mass))
        norm = 1.0 / raw
        if norm <= 2.0:
            break
        delta *= 0.5
    else:
        raise MollifierConstructionError(f"psi_{k}: normaliser {norm:.6g} > 2 after {max_shrinks} taper shrinks")
    bump = Bump(k, lo, hi, delta, norm, fam, shrinks, edges, np.zeros(1), np.zeros(1))
    mass, moment = _panel_integrals(bump, edges)
    bump.cum_mass = np.concatenate([[0.0], np.cumsum(mass)])
    bump.cum_moment = np.concatenate([[0.0], np.cumsum(moment)])
    return bump


# ---------------------------------------------------------------------------
# the sequence


@dataclass
class MollifierSequence:
    rho: ModulusFamily
    a: np.ndarray
    bumps: list

    @property
    def K(self) -> int:
        return len(self.bumps)

    def bump(self, k: int) -> Bump:
        if not 1 <= k <= self.K:
            raise ValueError(f"level {k} not constructed (have 1..{self.K})")
        return self.bumps[k - 1]

    @property
    def a0_note(self) -> str:
        if self.a[0] != 1.0:
            return f"a_0 = {self.a[0]:.12g} instead of 1: {self.rho.note}"
        return ""


def build_mollifier(rho, K: int) -> MollifierSequence:
    fam = ModulusFamily.coerce(rho)
    a = compute_a(fam, K)
    bumps = [make_psi(fam, a, k) for k in range(1, K + 1)]
    return MollifierSequence(fam, a, bumps)


def phi(seq: MollifierSequence, k: int, z):
    """``phi_k(z) = int_0^|z| dy int_0^y psi_k``."""
    z = np.asarray(z, dtype=float)
    out = seq.bump(k).second_antiderivative(np.abs(z).reshape(-1)).reshape(z.shape)
    return float(out) if out.ndim == 0 else out


def phi_prime(seq: MollifierSequence, k: int, z):
    z = np.asarray(z, dtype=float)
    out = (np.sign(z).reshape(-1) * seq.bump(k).antiderivative(np.abs(z).reshape(-1))).reshape(z.shape)
    return float(out) if out.ndim == 0 else out


def phi_second(seq: MollifierSequence, k: int, z):
    z = np.asarray(z, dtype=float)
    return seq.bump(k)(np.abs(z))


def second_difference(seq: MollifierSequence, k: int, zeta, h):
    """``D_h phi_k(zeta) = phi_k(zeta + h) - phi_k(zeta) - phi_k'(zeta) h``."""
    zeta = np.asarray(zeta, dtype=float)
    h = np.asarray(h, dtype=float)
    zeta, h = np.broadcast_arrays(zeta, h)
    out = phi(seq, k, zeta + h) - phi(seq, k, zeta) - phi_prime(seq, k, zeta) * h
    out = np.asarray(out)
    # h == 0 is exactly zero; avoid reporting rounding noise there
    out = np.where(h == 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# verification


@dataclass
class PropertyResult:
    name: str
    passed: bool
    stated_constant: bool
    worst_point: object = None
    magnitude: float = 0.0
    note: str = ""

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "stated_constant": self.stated_constant,
            "worst_point": self.worst_point,
            "magnitude": self.magnitude,
            "note": self.note,
        }


@dataclass
class MollifierReport:
    k: int
    a_k: float
    a_prev: float
    properties: list
    sup_psi: float
    max_dh_ratio: float
    ratio_k_rho_a: float

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties)

    @property
    def passed_sharp(self) -> bool:
        return all(p.passed for p in self.properties if not p.stated_constant)

    def passed_for(self, constants: str) -> bool:
        return self.passed if constants == "stated" else self.passed_sharp

    def failures(self, constants: str = "stated"):
        return [p for p in self.properties if not p.passed and (constants == "stated" or not p.stated_constant)]

    def to_dict(self):
        return {
            "k": self.k,
            "a_k": self.a_k,
            "a_prev": self.a_prev,
            "passed": self.passed,
            "passed_sharp": self.passed_sharp,
            "sup_psi": self.sup_psi,
            "max_dh_over_h2": self.max_dh_ratio,
            "k_inv_rho_inv_sq_a_k": self.ratio_k_rho_a,
            "properties": [p.to_dict() for p in self.properties],
        }


def _worst(values, points, sign=1.0):
    i = int(np.argmax(sign * values))
    pt = points[i]
    if isinstance(pt, np.ndarray):
        pt = pt.tolist()
    elif isinstance(pt, np.generic):
        pt = pt.item()
    return pt, float(values[i])


_ATOL = 1e-12


def support_grid(bump: Bump, n: int = 1000) -> np.ndarray:
    """Points strictly inside the support, including the taper knees (where psi peaks)."""
    inner = np.linspace(bump.lo, bump.hi, n + 2)[1:-1]
    knees = np.array([bump.lo + bump.delta, bump.hi - bump.delta])
    geo = np.geomspace(bump.lo, bump.hi, n + 2)[1:-1]
    return np.unique(np.concatenate([inner, knees, geo]))


def verify_mollifier(seq: MollifierSequence, k: int, grid=None, zeta_grid=None, h_grid=None) -> MollifierReport:
    """Check the properties of ``phi_k`` on sample grids.

    Properties flagged ``stated_constant`` use the numeric constants as
    printed (``k^-1 rho^-2(a_k) <= 2``, ``phi'' <= 4``, ``D_h phi <= 2h^2``);
    the remaining ones use the bounds that follow from the construction
    itself (``phi'' <= 2/k rho^-2(a_k)`` and ``D_h phi <= rho^-2(a_k) h^2 / k``).
    """
    bump = seq.bump(k)
    z = np.linspace(-2.0, 2.0, 1000) if grid is None else np.asarray(grid, dtype=float)
    zeta = np.linspace(-2.0, 2.0, 200) if zeta_grid is None else np.asarray(zeta_grid, dtype=float)
    hs = np.linspace(-2.0, 2.0, 200) if h_grid is None else np.asarray(h_grid, dtype=float)
    a_k, a_prev = float(seq.a[k]), float(seq.a[k - 1])
    props = []

    ph = phi(seq, k, z)
    absz = np.abs(z)
    low = np.minimum(ph, absz - ph)
    pt, mag = _worst(-low, z)
    props.append(PropertyResult("phi_between_0_and_abs", bool(np.all(low >= -_ATOL)), False, pt, max(mag, 0.0)))

    gap = absz - (a_prev + ph)
    pt, mag = _worst(gap, z)
    props.append(PropertyResult("abs_le_a_prev_plus_phi", bool(np.all(gap <= _ATOL)), False, pt, mag))

    # monotone in k needs the next level
    nxt = None
    if k + 1 <= seq.K:
        nxt = seq
    else:
        try:
            nxt = build_mollifier(seq.rho, k + 1)
        except (MollifierRangeError, MollifierConstructionError):
            nxt = None
    if nxt is not None:
        diff = ph - phi(nxt, k + 1, z)
        pt, mag = _worst(diff, z)
        props.append(PropertyResult("phi_nondecreasing_in_k", bool(np.all(diff <= _ATOL)), False, pt, mag))
    else:
        props.append(PropertyResult("phi_nondecreasing_in_k", True, False, note=f"level {k + 1} not representable; skipped"))

    dp = phi_prime(seq, k, z)
    viol = np.where(z >= 0, np.maximum(-dp, dp - 1.0), np.maximum(dp, -1.0 - dp))
    pt, mag = _worst(viol, z)
    props.append(PropertyResult("phi_prime_range", bool(np.all(viol <= _ATOL)), False, pt, max(mag, 0.0)))

    props.append(
        PropertyResult("psi_integral_one", abs(bump.mass - 1.0) <= 1e-10, False, None, abs(bump.mass - 1.0))
    )

    sg = support_grid(bump)
    psi_vals = bump(sg)
    env = 2.0 / k * seq.rho.inv_rho_sq(sg)
    pt, mag = _worst(psi_vals - env, sg)
    props.append(PropertyResult("psi_le_2_rho_inv_sq_over_k", bool(np.all(psi_vals <= env * (1 + 1e-12))), False, pt, mag))

    ratio = float(seq.rho.inv_rho_sq(a_k)) / k
    d2 = phi_second(seq, k, np.concatenate([z, sg, -sg]))
    d2_points = np.concatenate([z, sg, -sg])
    sup_psi = float(np.max(psi_vals))
    pt, mag = _worst(d2, d2_points)
    props.append(
        PropertyResult("phi_second_nonneg", bool(np.all(d2 >= 0)), False, *_worst(-d2, d2_points))
    )
    props[-1].magnitude = max(props[-1].magnitude, 0.0)
    props.append(PropertyResult("phi_second_le_2_ratio", bool(mag <= 2.0 * ratio * (1 + 1e-12)), False, pt, mag))
    props.append(PropertyResult("ratio_le_2", ratio <= 2.0, True, a_k, ratio))
    props.append(PropertyResult("phi_second_le_4", bool(mag <= 4.0), True, pt, mag))

    Z, H = np.meshgrid(zeta, hs, indexing="ij")
    D = second_difference(seq, k, Z, H)
    pts = np.stack([Z.ravel(), H.ravel()], axis=1)
    h2 = (H * H).ravel()
    Dr = D.ravel()
    with np.errstate(divide="ignore", invalid="ignore"):
        dh_ratio = np.where(h2 > 0, Dr / h2, 0.0)
    max_ratio = float(np.max(dh_ratio))
    pt, mag = _worst(-Dr, pts)
    props.append(PropertyResult("second_difference_nonneg", bool(np.all(Dr >= -_ATOL)), False, pt, max(mag, 0.0)))
    excess = Dr - (ratio * h2 + 1e-8)
    pt, mag = _worst(excess, pts)
    props.append(PropertyResult("second_difference_le_ratio_h2", bool(np.all(excess <= 0)), False, pt, mag))
    excess = Dr - (2.0 * h2 + 1e-8)
    pt, mag = _worst(excess, pts)
    props.append(PropertyResult("second_difference_le_2h2", bool(np.all(excess <= 0)), True, pt, mag))

    return MollifierReport(k, a_k, a_prev, props, sup_psi, max_ratio, ratio)
