"""Euler approximation with coefficients frozen at the left net point.

On ``(t_k, t_{k+1}]`` the scheme uses ``x_k = x_n(t_k)`` for the drift,
the truncated diffusion coefficient, the truncated jump kernel of every
event in the interval (an event exactly at ``t_k`` belongs to the previous
interval) and the compensator.  No positivity projection is applied.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._backend import resolve_backend
from .model import ModelSpec, compensator_trunc, g_trunc, sigma_trunc
from .noise import Net, NoiseRealization, cumulative_drift


@dataclass(frozen=True, eq=False)
class EulerPath:
    """States at net points plus what is needed to evaluate the path anywhere.

    ``drift_coef[k] = beta x_k - c'(x_k)`` and ``vol_coef[k] = sigma'(x_k)``;
    ``applied[q]`` is ``g'(x_k, u_q)`` for the jump at ``jump_times[q]``,
    whose left and right values are ``jump_pre[q]`` and ``jump_post[q]``.
    """

    net: Net
    states: np.ndarray
    jump_times: np.ndarray
    applied: np.ndarray
    jump_pre: np.ndarray
    jump_post: np.ndarray
    drift_coef: np.ndarray = field(repr=False)
    vol_coef: np.ndarray = field(repr=False)
    master: Net = field(repr=False)
    W: np.ndarray = field(repr=False)
    Cb: np.ndarray = field(repr=False)
    path_index: int = 0

    @property
    def T(self) -> float:
        return self.net.T

    @property
    def x0(self) -> float:
        return float(self.states[0])

    @property
    def intra_interval_jumps(self):
        """Per interval, the post-jump values of the events it contains."""
        k = self.net.interval_of(self.jump_times)
        return [self.jump_post[k == i].tolist() for i in range(self.net.N)]

    def value_at(self, times, side: str = "right") -> np.ndarray:
        """Scheme value at ``times``; ``side="left"`` excludes a jump occurring exactly then."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any((times < 0) | (times > self.T)):
            raise ValueError("evaluation times must lie in [0, T]")
        pts = self.net.points
        k = np.clip(np.searchsorted(pts, times, side="left") - 1, 0, self.net.N - 1)
        tk = pts[k]
        Wt = np.interp(times, self.master.points, self.W)
        Ct = np.interp(times, self.master.points, self.Cb)
        Wk = np.interp(tk, self.master.points, self.W)
        Ck = np.interp(tk, self.master.points, self.Cb)
        jk = self.net.interval_of(self.jump_times)
        J = np.zeros(times.size)
        for i, t in enumerate(times):
            if t == 0.0:
                continue
            if side == "right":
                sel = (jk == k[i]) & (self.jump_times <= t)
            else:
                sel = (jk == k[i]) & (self.jump_times < t)
            acc = 0.0
            for g in self.applied[sel]:
                acc += g
            J[i] = acc
        out = self.states[k] + (((Ct - Ck) + self.drift_coef[k] * (times - tk)) + self.vol_coef[k] * (Wt - Wk)) + J
        return np.where(times == 0.0, self.states[0], out)


def euler_increment(spec: ModelSpec, x_k: float, dt: float, drift_integral: float, dB: float, marks=()) -> float:
    """One step of the scheme from explicit ingredients."""
    a = spec.beta * x_k - float(compensator_trunc(spec, x_k))
    s = float(sigma_trunc(spec, x_k))
    J = 0.0
    for u in marks:
        J += float(g_trunc(spec, x_k, u))
    return x_k + ((drift_integral + a * dt) + s * dB) + J


def _path_drift(spec: ModelSpec, noise: NoiseRealization) -> np.ndarray:
    Cb = cumulative_drift(spec.drift, noise.master)
    if Cb is None:
        Cb = np.concatenate([[0.0], np.cumsum(noise.drift_integrals(spec.drift))])
    return Cb


def euler_step(spec: ModelSpec, x_k: float, interval, noise: NoiseRealization) -> float:
    """Advance ``x_k`` over ``interval = (t_k, t_{k+1})``, both master grid points."""
    t0, t1 = float(interval[0]), float(interval[1])
    if not 0.0 <= t0 <= t1 <= noise.master.T:
        raise ValueError(f"interval ({t0}, {t1}) is not inside [0, {noise.master.T}]")
    i0, i1 = Net(np.array([0.0, t0, t1, noise.master.T])).indices_in(noise.master)[1:3]
    Cb = _path_drift(spec, noise)
    sel = (noise.jump_times > t0) & (noise.jump_times <= t1)
    return euler_increment(spec, x_k, t1 - t0, Cb[i1] - Cb[i0], noise.W[i1] - noise.W[i0], noise.jump_marks[sel])


def _single_batch(spec: ModelSpec, noise: NoiseRealization, x0: float):
    master = noise.master
    cell = master.interval_of(noise.jump_times).astype(np.int64)
    off = np.array([0, noise.jump_times.size], dtype=np.int64)
    Cb = _path_drift(spec, noise)
    return master, Cb, cell, off


def simulate_path(spec: ModelSpec, net: Net, noise: NoiseRealization, backend: str | None = None, x0: float | None = None) -> EulerPath:
    """Run the scheme on ``net`` (nested in the noise's master grid).

    ``x(0)`` is drawn from the noise's initial-value substream, so every net
    driven by the same noise starts from the same value.
    """
    backend = resolve_backend(backend)
    idx = net.indices_in(noise.master)
    if x0 is None:
        x0 = noise.initial_value(spec.initial_law)
    master, Cb, cell, off = _single_batch(spec, noise, x0)
    coef = _kernels.Coefficients.from_spec(spec)
    states, drift, vol, applied = _kernels.euler_batch(
        backend,
        master.points,
        noise.W[None, :],
        Cb[None, :],
        np.array([x0], dtype=float),
        off,
        noise.jump_times,
        noise.jump_marks,
        cell,
        idx,
        coef,
    )
    return _finish(net, states[0], noise, drift[0], vol[0], applied, Cb)


def _finish(net, states, noise, drift, vol, applied, Cb):
    path = EulerPath(
        net,
        states,
        noise.jump_times,
        np.asarray(applied, dtype=float),
        np.empty(0),
        np.empty(0),
        drift,
        vol,
        noise.master,
        noise.W,
        Cb,
        noise.path_index,
    )
    if noise.jump_times.size:
        pre = path.value_at(noise.jump_times, side="left")
        post = path.value_at(noise.jump_times, side="right")
        object.__setattr__(path, "jump_pre", pre)
        object.__setattr__(path, "jump_post", post)
    return path


def simulate_coupled(spec: ModelSpec, nets, noise: NoiseRealization, backend: str | None = None) -> list:
    """One path per net, all driven by the same noise and the same ``x(0)``."""
    x0 = noise.initial_value(spec.initial_law)
    return [simulate_path(spec, net, noise, backend, x0=x0) for net in nets]


def sup_distance(a: EulerPath, b: EulerPath) -> float:
    """Sup of ``|a(t) - b(t)|`` over both nets' points and both one-sided limits at every jump time."""
    if a.T != b.T:
        raise ValueError(f"paths have different horizons {a.T} and {b.T}")
    pts = np.union1d(a.net.points, b.net.points)
    jumps = np.union1d(a.jump_times, b.jump_times)
    d = np.max(np.abs(a.value_at(pts) - b.value_at(pts)))
    if jumps.size:
        for side in ("left", "right"):
            d = max(d, float(np.max(np.abs(a.value_at(jumps, side) - b.value_at(jumps, side)))))
    return float(d)


def simulate_levy_driven(spec: ModelSpec, net: Net, noise: NoiseRealization, x0: float | None = None) -> EulerPath:
    """Scheme for ``dx = (b + beta x) dt + sigma(x) dB + phi(x-) dz`` with the
    centred pure-jump driver ``z(t) = sum of marks up to t - m_1 t``.

    On each interval the driver increment ``sum u - m_1 dt`` multiplies the
    frozen ``phi'(x_k)``; this is the same scheme as the compensated form
    with ``g(x,u) = phi(x) u`` and ``c(x) = phi(x) m_1``.
    """
    if spec.phi is None:
        raise ValueError("model has no phi; it is not a Levy-driven model")
    idx = net.indices_in(noise.master)
    if x0 is None:
        x0 = noise.initial_value(spec.initial_law)
    Cb = _path_drift(spec, noise)
    m1 = spec.measure.first_moment
    t = noise.master.points
    jk = net.interval_of(noise.jump_times)
    states = np.empty(net.N + 1)
    drift = np.empty(net.N)
    vol = np.empty(net.N)
    applied = np.zeros(noise.jump_times.size)
    x = float(x0)
    states[0] = x
    for k in range(net.N):
        i0, i1 = idx[k], idx[k + 1]
        dt = t[i1] - t[i0]
        ph = float(spec.phi(x)) if x >= 0 else 0.0
        s = float(sigma_trunc(spec, x))
        sel = np.flatnonzero(jk == k)
        dz = 0.0
        for q in sel:
            dz += noise.jump_marks[q]
            applied[q] = ph * noise.jump_marks[q]
        dz -= m1 * dt
        drift[k] = spec.beta * x - ph * m1
        vol[k] = s
        x = x + (((Cb[i1] - Cb[i0]) + spec.beta * x * dt) + s * (noise.W[i1] - noise.W[i0])) + ph * dz
        states[k + 1] = x
    return _finish(net, states, noise, drift, vol, applied, Cb)


def write_paths_csv(path, euler_paths) -> None:
    """CSV rows ``path_index, time, state, flag`` with ``flag`` in ``{grid, post_jump}``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_index", "time", "state", "flag"])
        for ep in euler_paths:
            write_path_rows(w, ep.path_index, ep.net.points, ep.states, ep.jump_times, ep.jump_post)


def write_path_rows(writer, path_index, times, states, jump_times, jump_post) -> None:
    rows = [(float(t), 0, float(x)) for t, x in zip(times, states)]
    rows += [(float(t), 1, float(x)) for t, x in zip(jump_times, jump_post)]
    rows.sort(key=lambda r: (r[0], r[1]))
    for t, flag, x in rows:
        writer.writerow([path_index, repr(t), repr(x), "post_jump" if flag else "grid"])
