"""Monte Carlo estimators: strong errors across nets, moment curves, explicit bounds and rate fits.

Paths are processed in fixed batches; per-path scalars are gathered in
path order and per-point statistics are merged batch by batch in batch
order, so in deterministic mode results do not depend on the number of
worker threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import _kernels
from ._backend import resolve_backend
from .model import ModelSpec
from .noise import DRIFT, Net, check_divides, cumulative_drift, sample_batch, steps_for_mesh, substream, uniform_net

STEPS_PER_UNIT = 4096
DEFAULT_BATCH = 256
SLACK_SE = 3.0


class UnsupportedError(ValueError):
    """The requested quantity is not available for this model."""


def default_master(T: float) -> Net:
    return uniform_net(T, max(1, int(round(STEPS_PER_UNIT * T))))


def mean_se(values) -> tuple:
    """Sample mean and standard error of the mean."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no samples")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


# ---------------------------------------------------------------------------
# engine


@dataclass
class EngineResult:
    """Output of one batched run over a reference grid and several nets nested in it."""

    grid: Net
    nets: list
    sup: np.ndarray
    neg: np.ndarray
    mart: np.ndarray
    term: np.ndarray
    count: int
    mean: np.ndarray
    m2: np.ndarray

    def curve(self, n: int, which: int):
        """Mean and standard error of statistic ``which`` (0 value, 1 |value|, 2 increment) for net ``n``."""
        mean = self.mean[n, which]
        if self.count < 2:
            return mean, np.zeros_like(mean)
        var = np.maximum(self.m2[n, which], 0.0) / (self.count - 1)
        return mean, np.sqrt(var / self.count)


def _merge(acc, part):
    """Chan's pairwise update of (count, mean, M2)."""
    if acc is None:
        return part
    na, ma, Ma = acc
    nb, mb, Mb = part
    n = na + nb
    delta = mb - ma
    mean = ma + delta * (nb / n)
    M2 = Ma + Mb + delta * delta * (na * nb / n)
    return n, mean, M2


def run_engine(
    spec: ModelSpec,
    grid: Net,
    nets,
    n_paths: int,
    seed: int,
    *,
    master: Net | None = None,
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH,
    deterministic: bool = True,
    backend: str | None = None,
) -> EngineResult:
    """Simulate ``n_paths`` coupled paths on ``grid`` (index 0) and on every net in ``nets``."""
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    if seed is None:
        raise ValueError("a seed is required")
    backend = resolve_backend(backend)
    master = master or default_master(grid.T)
    grid_idx = grid.indices_in(master)
    net_idx = [np.arange(grid.N + 1)] + [n.indices_in(grid) for n in nets]
    threads = max(1, int(threads))
    if not deterministic:
        batch_size = max(1, -(-n_paths // threads))
    batch_size = max(1, int(batch_size))
    starts = list(range(0, n_paths, batch_size))
    coef = _kernels.Coefficients.from_spec(spec)
    Cm = cumulative_drift(spec.drift, master)

    def work(first):
        count = min(batch_size, n_paths - first)
        b = sample_batch(spec, master, grid_idx, seed, first, count, Cm)
        res = _kernels.study_batch(
            backend, b.times, b.W, b.Cb, b.x0, b.offsets, b.jump_times, b.jump_marks, b.jump_cell, net_idx, coef
        )
        return count, res

    if threads == 1 or len(starts) == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))

    acc = None
    for count, (_, _, _, _, st) in parts:
        acc = _merge(acc, (count, st[:, :, 0], st[:, :, 1]))
    cat = [np.concatenate([p[1][i] for p in parts]) for i in range(4)]
    return EngineResult(grid, [grid, *nets], *cat, acc[0], acc[1], acc[2])


def resolve_threads(threads: int | None) -> int:
    """Explicit value, else ``JUMPFLOW_THREADS``, else 1."""
    if threads is not None:
        return int(threads)
    env = os.environ.get("JUMPFLOW_THREADS")
    return int(env) if env else 1


# ---------------------------------------------------------------------------
# estimators


def l1_supnorm_error(spec: ModelSpec, coarse_net: Net, ref_net: Net, n_paths: int, seed: int, **engine) -> tuple:
    """Mean and standard error of ``sup_t |x_coarse(t) - x_ref(t)|`` under shared noise."""
    if coarse_net == ref_net:
        return 0.0, 0.0
    if ref_net.N <= coarse_net.N:
        raise ValueError("the reference net must be strictly finer than the coarse net")
    coarse_net.indices_in(ref_net)
    res = run_engine(spec, ref_net, [coarse_net], n_paths, seed, **engine)
    return mean_se(res.sup[:, 1])


@dataclass
class MomentCurve:
    times: np.ndarray
    mean_abs: np.ndarray
    se_abs: np.ndarray
    mean_abs_eta: np.ndarray
    se_abs_eta: np.ndarray
    mean: np.ndarray
    se: np.ndarray


def _eta_index(N):
    k = np.arange(N + 1)
    k[-1] = N - 1
    return k


def moment_curve(spec: ModelSpec, net: Net, n_paths: int, seed: int, **engine) -> MomentCurve:
    """Estimates of ``E|x_n(t_k)|`` and ``E|x_n(eta_n(t_k))|`` at every net point."""
    res = run_engine(spec, net, [], n_paths, seed, **engine)
    m_abs, se_abs = res.curve(0, 1)
    m, se = res.curve(0, 0)
    e = _eta_index(net.N)
    return MomentCurve(net.points.copy(), m_abs, se_abs, m_abs[e], se_abs[e], m, se)


# ---------------------------------------------------------------------------
# drift functionals


def _mean_drift_path(spec: ModelSpec, T: float, n_paths: int = 2048, seed: int = 0):
    grid = default_master(T)
    rows = np.empty((n_paths, grid.N))
    dt = np.diff(grid.points)
    for i in range(n_paths):
        rows[i] = spec.drift.sample_integrals(substream(seed, i, DRIFT), grid.points) / dt
    return grid, rows


def expected_drift_integral(spec: ModelSpec, t: float, n_paths: int = 2048, seed: int = 0) -> tuple:
    """``int_0^t E b(s) ds`` and its standard error (zero for deterministic drift)."""
    if t == 0:
        return 0.0, 0.0
    if spec.drift.is_deterministic:
        return spec.drift.integral(0.0, t), 0.0
    grid, rows = _mean_drift_path(spec, t, n_paths, seed)
    return mean_se(rows @ np.diff(grid.points))


def _growth_K(spec: ModelSpec) -> float:
    if spec.growth_constant is None:
        raise UnsupportedError("the model carries no growth constant K")
    return float(spec.growth_constant)


def bound_G(spec: ModelSpec, t: float) -> float:
    """``(E x(0) + int_0^t E b + 2 + K t) exp((K - beta) t)``."""
    K = _growth_K(spec)
    Eb, _ = expected_drift_integral(spec, t)
    return (spec.initial_law.mean + Eb + 2.0 + K * t) * math.exp((K - spec.beta) * t)


def bound_H(spec: ModelSpec, t: float) -> float:
    """``E x(0) + int_0^t E b + 2 + K t + (K - beta) t G_t``."""
    K = _growth_K(spec)
    Eb, _ = expected_drift_integral(spec, t)
    return spec.initial_law.mean + Eb + 2.0 + K * t + (K - spec.beta) * t * bound_G(spec, t)


def bound_increment(spec: ModelSpec, mesh: float, T: float) -> float:
    """``gamma(h) - beta G_T h + 2 sqrt(K (G_T + 1) h)`` for mesh ``h`` on ``[0, T]``."""
    K = _growth_K(spec)
    G = bound_G(spec, T)
    return gamma(spec, mesh, T) - spec.beta * G * mesh + 2.0 * math.sqrt(K * (G + 1.0) * mesh)


def _window_sup(A, nu, T, extra=()):
    """Sup over ``s in [0, T - nu]`` of ``A(s + nu) - A(s)``, refining the start grid until stable."""
    if nu == 0 or T == 0:
        return 0.0
    extra = [e for e in extra if 0.0 <= e <= T - nu]
    best = None
    n = 16
    while True:
        s = np.unique(np.concatenate([np.linspace(0.0, T - nu, n + 1), extra]))
        val = float(np.max(A(s + nu) - A(s)))
        if best is not None and abs(val - best) < 1e-8:
            return max(val, best)
        best = val if best is None else max(best, val)
        n *= 2
        if n > 2**22:
            return best


def gamma(spec: ModelSpec, nu: float, T: float) -> float:
    """``sup_{0 <= s <= t <= s + nu <= T} int_s^t E b(u) du`` (``b >= 0``, so windows of full length)."""
    if not 0.0 <= nu <= T:
        raise ValueError(f"nu={nu} outside [0, {T}]")
    if nu == 0:
        return 0.0
    drift = spec.drift
    if drift.is_deterministic:
        if drift.antiderivative is not None:
            A = lambda x: np.asarray(drift.antiderivative(np.asarray(x, dtype=float)), dtype=float)  # noqa: E731
        else:
            grid = default_master(T).points
            cells = np.array([drift.integral(a, b) for a, b in zip(grid[:-1], grid[1:])])
            cum = np.concatenate([[0.0], np.cumsum(cells)])
            A = lambda x: np.interp(x, grid, cum)  # noqa: E731
        bps = list(drift.breakpoints)
        extra = bps + [b - nu for b in bps]
        return _window_sup(A, nu, T, extra)
    value, _ = gamma_with_se(spec, nu, T)
    return value


def gamma_with_se(spec: ModelSpec, nu: float, T: float, n_paths: int = 2048, seed: int = 0) -> tuple:
    """``gamma`` from the Monte Carlo mean drift path, with the standard error of the maximising window."""
    if spec.drift.is_deterministic:
        return gamma(spec, nu, T), 0.0
    if not 0.0 <= nu <= T:
        raise ValueError(f"nu={nu} outside [0, {T}]")
    if nu == 0:
        return 0.0, 0.0
    grid, rows = _mean_drift_path(spec, T, n_paths, seed)
    cum_rows = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(rows * np.diff(grid.points), axis=1)], axis=1)
    cum = cum_rows.mean(axis=0)
    A = lambda x: np.interp(x, grid.points, cum)  # noqa: E731
    value = _window_sup(A, nu, T, list(grid.points))
    s = grid.points[grid.points <= T - nu]
    i = int(np.argmax(A(s + nu) - A(s)))
    per_path = np.array([np.interp(s[i] + nu, grid.points, r) - np.interp(s[i], grid.points, r) for r in cum_rows])
    return value, mean_se(per_path)[1]


def mean_oracle(spec: ModelSpec, t: float) -> float:
    """``E x(t) = E x(0) e^{beta t} + int_0^t e^{beta (t-s)} b(s) ds`` for deterministic drift."""
    drift = spec.drift
    if not drift.is_deterministic:
        raise UnsupportedError("the mean oracle needs a deterministic drift")
    beta = spec.beta
    x0 = spec.initial_law.mean * math.exp(beta * t)
    if t == 0:
        return spec.initial_law.mean
    const = drift.description.get("constant")
    if const is not None:
        b = const["value"]
        return x0 + b * (-math.expm1(beta * t)) / (-beta)
    pts = [p for p in drift.breakpoints if 0 < p < t] or None
    val, _ = integrate.quad(
        lambda s: math.exp(beta * (t - s)) * float(drift.rate(s)), 0.0, t, epsabs=1e-12, epsrel=1e-12, limit=400, points=pts
    )
    return x0 + val


# ---------------------------------------------------------------------------
# convergence study


@dataclass
class BoundCheck:
    mesh: float
    kind: str
    bound: float | None
    worst_excess: float | None
    at_time: float | None
    passed: bool
    note: str = ""

    def to_dict(self):
        return {
            "mesh": self.mesh,
            "kind": self.kind,
            "bound": self.bound,
            "worst_excess": self.worst_excess,
            "at_time": self.at_time,
            "passed": self.passed,
            "note": self.note,
        }


@dataclass
class ConvergenceReport:
    T: float
    meshes: list
    ref_mesh: float
    n_paths: int
    seed: int
    errors: list
    ses: list
    fitted_rate: float
    rate_ci: tuple
    negative_part: list
    negative_part_se: list
    martingale: list
    martingale_se: list
    bound_checks: list
    monotone_checks: list
    G_T: float | None = None
    H_T: float | None = None
    notes: list = field(default_factory=list)

    @property
    def nonincreasing(self) -> bool:
        return all(c["passed"] for c in self.monotone_checks)

    @property
    def bounds_ok(self) -> bool:
        return all(c.passed for c in self.bound_checks)

    @property
    def passed(self) -> bool:
        return self.nonincreasing and self.bounds_ok

    @property
    def reduction_factor(self) -> float:
        """error at the coarsest mesh divided by error at the finest."""
        return self.errors[0] / self.errors[-1] if self.errors[-1] > 0 else math.inf

    def to_dict(self):
        return {
            "T": self.T,
            "meshes": self.meshes,
            "ref_mesh": self.ref_mesh,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "errors": self.errors,
            "standard_errors": self.ses,
            "fitted_rate": self.fitted_rate,
            "rate_ci": list(self.rate_ci),
            "negative_part": self.negative_part,
            "negative_part_se": self.negative_part_se,
            "martingale_mean": self.martingale,
            "martingale_se": self.martingale_se,
            "G_T": self.G_T,
            "H_T": self.H_T,
            "bound_checks": [c.to_dict() for c in self.bound_checks],
            "monotone_checks": self.monotone_checks,
            "nonincreasing": self.nonincreasing,
            "bounds_ok": self.bounds_ok,
            "passed": self.passed,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mesh", "error", "se", "negative_part", "negative_part_se", "martingale_mean", "martingale_se",
                    "G_check", "H_check", "increment_check", "rate_fit", "rate_lo", "rate_hi"])
        by = {}
        for c in self.bound_checks:
            by[(c.mesh, c.kind)] = "pass" if c.passed else "fail"
        for i, h in enumerate(self.meshes):
            w.writerow([repr(h), repr(self.errors[i]), repr(self.ses[i]), repr(self.negative_part[i]),
                        repr(self.negative_part_se[i]), repr(self.martingale[i]), repr(self.martingale_se[i]),
                        by.get((h, "G"), "skip"), by.get((h, "H"), "skip"), by.get((h, "increment"), "skip"),
                        repr(self.fitted_rate), repr(self.rate_ci[0]), repr(self.rate_ci[1])])
        return buf.getvalue()


def fit_rate(meshes, errors) -> tuple:
    """Least-squares slope of log(error) against log(mesh) with a 95% interval."""
    h = np.asarray(meshes, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = e > 0
    if keep.sum() < 2:
        return math.nan, (math.nan, math.nan)
    fit = stats.linregress(np.log(h[keep]), np.log(e[keep]))
    dof = int(keep.sum()) - 2
    if dof < 1:
        return float(fit.slope), (math.nan, math.nan)
    q = stats.t.ppf(0.975, dof)
    return float(fit.slope), (float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr))


def monotone_checks(meshes, errors, ses, n_se: float = 2.0) -> list:
    """``e_{i+1} - e_i <= n_se * sqrt(se_i^2 + se_{i+1}^2)`` at each refinement."""
    out = []
    for i in range(len(meshes) - 1):
        slack = n_se * math.hypot(ses[i], ses[i + 1])
        diff = errors[i + 1] - errors[i]
        out.append({"from": meshes[i], "to": meshes[i + 1], "increase": diff, "slack": slack, "passed": diff <= slack})
    return out


def convergence_study(
    spec: ModelSpec,
    meshes,
    ref_mesh: float,
    n_paths: int,
    seed: int,
    *,
    T: float = 1.0,
    master_steps: int | None = None,
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH,
    deterministic: bool = True,
    backend: str | None = None,
) -> ConvergenceReport:
    """Strong errors of each mesh against the reference mesh, moment-bound checks and negative parts."""
    meshes = [float(h) for h in meshes]
    if len(meshes) < 2:
        raise ValueError("a convergence study needs at least two meshes")
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    if any(b >= a for a, b in zip(meshes, meshes[1:])):
        raise ValueError("meshes must be strictly decreasing")
    if not ref_mesh < meshes[-1]:
        raise ValueError("the reference mesh must be finer than every study mesh")
    master_steps = master_steps or max(1, int(round(STEPS_PER_UNIT * T)))
    ref_steps = steps_for_mesh(T, ref_mesh)
    check_divides(T, master_steps, ref_steps)
    steps = [steps_for_mesh(T, h) for h in meshes]
    for s in steps:
        check_divides(T, ref_steps, s)
    master = uniform_net(T, master_steps)
    ref = uniform_net(T, ref_steps)
    nets = [uniform_net(T, s) for s in steps]
    res = run_engine(
        spec, ref, nets, n_paths, seed, master=master, threads=threads, batch_size=batch_size,
        deterministic=deterministic, backend=backend,
    )
    errors, ses = [], []
    for n in range(1, len(nets) + 1):
        m, s = mean_se(res.sup[:, n])
        errors.append(m)
        ses.append(s)
    neg, neg_se, mart, mart_se = [], [], [], []
    for n in range(1, len(nets) + 1):
        m, s = mean_se(res.neg[:, n])
        neg.append(m)
        neg_se.append(s)
        m, s = mean_se(res.mart[:, n])
        mart.append(m)
        mart_se.append(s)
    rate, ci = fit_rate(meshes, errors)
    notes = ["reference solution is the finest-mesh scheme under shared noise; errors include its own discretisation bias"]
    checks = []
    G_T = H_T = None
    try:
        G_T = bound_G(spec, T)
        H_T = bound_H(spec, T)
    except UnsupportedError as exc:
        notes.append(f"moment bounds skipped: {exc}")
    times = ref.points
    for n, (h, net) in enumerate(zip(meshes, nets), start=1):
        if G_T is None:
            for kind in ("G", "H", "increment"):
                checks.append(BoundCheck(h, kind, None, None, None, True, "skipped: no growth constant"))
            continue
        m_abs, se_abs = res.curve(n, 1)
        at_net = net.indices_in(ref)
        ex = m_abs[at_net] - (G_T + SLACK_SE * se_abs[at_net])
        i = int(np.argmax(ex))
        checks.append(BoundCheck(h, "G", G_T, float(ex[i]), float(net.points[i]), bool(ex[i] <= 0)))
        ex = m_abs - (H_T + SLACK_SE * se_abs)
        i = int(np.argmax(ex))
        checks.append(BoundCheck(h, "H", H_T, float(ex[i]), float(times[i]), bool(ex[i] <= 0)))
        m_inc, se_inc = res.curve(n, 2)
        b_inc = bound_increment(spec, h, T)
        ex = m_inc - (b_inc + SLACK_SE * se_inc)
        i = int(np.argmax(ex))
        checks.append(BoundCheck(h, "increment", b_inc, float(ex[i]), float(times[i]), bool(ex[i] <= 0)))
    return ConvergenceReport(
        T, meshes, float(ref_mesh), int(n_paths), int(seed), errors, ses, rate, ci, neg, neg_se, mart, mart_se,
        checks, monotone_checks(meshes, errors, ses), G_T, H_T, notes,
    )


# ---------------------------------------------------------------------------
# plain simulation summary


@dataclass
class SimulationSummary:
    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    mean_abs: np.ndarray
    negative_part: tuple
    martingale: tuple
    terminal: tuple
    histogram: tuple
    n_paths: int

    def to_dict(self):
        return {
            "n_paths": self.n_paths,
            "times": self.times.tolist(),
            "mean": self.mean.tolist(),
            "se": self.se.tolist(),
            "mean_abs": self.mean_abs.tolist(),
            "negative_part": {"mean": self.negative_part[0], "se": self.negative_part[1]},
            "martingale_at_T": {"mean": self.martingale[0], "se": self.martingale[1]},
            "terminal": {"mean": self.terminal[0], "se": self.terminal[1]},
            "terminal_histogram": {"edges": self.histogram[1].tolist(), "counts": self.histogram[0].tolist()},
        }


def simulate_summary(spec: ModelSpec, net: Net, n_paths: int, seed: int, **engine) -> SimulationSummary:
    """Mean curve, negative-part statistic and terminal distribution of the scheme on ``net``."""
    res = run_engine(spec, net, [], n_paths, seed, **engine)
    m, se = res.curve(0, 0)
    m_abs, _ = res.curve(0, 1)
    term = res.term[:, 0]
    hist = np.histogram(term, bins=20)
    return SimulationSummary(
        net.points.copy(), m, se, m_abs, mean_se(res.neg[:, 0]), mean_se(res.mart[:, 0]), mean_se(term), hist, n_paths
    )
