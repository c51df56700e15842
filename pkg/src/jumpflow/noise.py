"""Nets, coupled Brownian/Poisson noise on a master grid, and counter-based substreams.

Every random quantity of one path is drawn from its own Philox stream keyed
by ``(seed, path_index, stream)``, so a path's noise never depends on how
paths are scheduled across workers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

BROWNIAN, JUMPS, INITIAL, DRIFT = 0, 1, 2, 3
STREAMS = {"brownian": BROWNIAN, "jumps": JUMPS, "initial": INITIAL, "drift": DRIFT}

# Brownian increments are rounded to this grid so that every partial sum of
# increments (|W| < 2^12) is exact in double precision, whatever the order
QUANTUM_EXP = 40


def substream(seed: int, path_index: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def quantize(x):
    return np.ldexp(np.rint(np.ldexp(x, QUANTUM_EXP)), -QUANTUM_EXP)


# ---------------------------------------------------------------------------
# nets


@dataclass(frozen=True, eq=False)
class Net:
    """Subdivision ``0 = t_0 <= ... <= t_N = T``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a net needs at least the two points 0 and T")
        if pts[0] != 0.0:
            raise ValueError("a net must start at 0")
        if np.any(np.diff(pts) < 0):
            raise ValueError("net points must be nondecreasing")
        if not pts[-1] > 0:
            raise ValueError("net horizon must be positive")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def T(self) -> float:
        return float(self.points[-1])

    @property
    def N(self) -> int:
        return self.points.size - 1

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.points)))

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        return isinstance(other, Net) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def indices_in(self, finer: "Net") -> np.ndarray:
        """Index of each of our points in ``finer``; raises if we are not nested in it."""
        if finer.T != self.T:
            raise ValueError(f"nets have different horizons {self.T} and {finer.T}")
        idx = np.searchsorted(finer.points, self.points)
        idx = np.minimum(idx, finer.N)
        bad = finer.points[idx] != self.points
        if np.any(bad):
            t = float(self.points[np.argmax(bad)])
            raise ValueError(f"net point t={t!r} is not a point of the finer net")
        return idx

    def interval_of(self, t) -> np.ndarray:
        """Interval ``k`` with ``t_k < t <= t_{k+1}`` (jump-time convention)."""
        return np.searchsorted(self.points, np.asarray(t, dtype=float), side="left") - 1


def uniform_net(T: float, n_steps: int) -> Net:
    if not T > 0:
        raise ValueError("horizon T must be positive")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError("n_steps must be a positive integer")
    n_steps = int(n_steps)
    pts = np.arange(n_steps + 1) * (T / n_steps)
    pts[-1] = T
    return Net(pts)


def eta(net: Net, t: float) -> float:
    """Left net point of the interval ``[t_k, t_{k+1})`` containing ``t``; ``eta(T) = t_{N-1}``."""
    if not 0.0 <= t <= net.T:
        raise ValueError(f"t={t} outside [0, {net.T}]")
    if t == net.T:
        return float(net.points[-2])
    k = int(np.searchsorted(net.points, t, side="right")) - 1
    return float(net.points[k])


# ---------------------------------------------------------------------------
# one path's noise


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    master: Net
    dW: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    seed: int
    path_index: int
    W: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        for name in ("dW", "jump_times", "jump_marks"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.dW.shape != (self.master.N,):
            raise ValueError("one Brownian increment per master interval is required")
        if self.jump_times.shape != self.jump_marks.shape:
            raise ValueError("jump times and marks differ in length")
        if self.jump_times.size and (self.jump_times[0] <= 0 or self.jump_times[-1] > self.master.T):
            raise ValueError("jump times must lie in (0, T]")
        if np.any(np.diff(self.jump_times) <= 0):
            raise ValueError("jump times must be strictly increasing")
        W = np.concatenate([[0.0], np.cumsum(self.dW)])
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def jump_events(self):
        return list(zip(self.jump_times.tolist(), self.jump_marks.tolist()))

    @property
    def seed_record(self):
        return (self.seed, self.path_index)

    def rng(self, stream: str) -> np.random.Generator:
        return substream(self.seed, self.path_index, STREAMS[stream])

    def initial_value(self, law) -> float:
        return float(law.sample(self.rng("initial")))

    def drift_integrals(self, drift) -> np.ndarray:
        """Integral of ``b`` over each master interval for this path."""
        return drift.sample_integrals(self.rng("drift"), self.master.points)

    def with_jumps(self, times, marks) -> "NoiseRealization":
        """Same Brownian path with a replaced jump list (test and audit helper)."""
        order = np.argsort(times, kind="stable")
        return NoiseRealization(
            self.master, self.dW, np.asarray(times, float)[order], np.asarray(marks, float)[order], self.seed, self.path_index
        )


def _sample_jumps(rng, measure, T):
    if measure.rate == 0:
        return np.empty(0), np.empty(0)
    n = int(rng.poisson(measure.rate * T))
    times = np.sort(T * (1.0 - rng.random(n)))
    marks = np.asarray(measure.law.sample(rng, n), dtype=float)
    return times, marks


def _sample_brownian(rng, master: Net):
    dt = np.diff(master.points)
    return quantize(rng.standard_normal(master.N) * np.sqrt(dt))


def sample_noise(master: Net, measure, seed: int, path_index: int) -> NoiseRealization:
    """Brownian increments on ``master`` and the jump events over ``(0, T]`` for one path."""
    dW = _sample_brownian(substream(seed, path_index, BROWNIAN), master)
    times, marks = _sample_jumps(substream(seed, path_index, JUMPS), measure, master.T)
    return NoiseRealization(master, dW, times, marks, int(seed), int(path_index))


def aggregate_brownian(noise: NoiseRealization, coarse: Net) -> np.ndarray:
    """Brownian increment over each interval of a net nested in the master grid.

    Each increment is the index-order sum of the master increments it covers.
    """
    idx = coarse.indices_in(noise.master)
    out = np.empty(coarse.N)
    for k in range(coarse.N):
        seg = noise.dW[idx[k] : idx[k + 1]]
        out[k] = np.cumsum(seg)[-1] if seg.size else 0.0
    return out


# ---------------------------------------------------------------------------
# batches of paths (input to the Monte Carlo kernels)


@dataclass
class NoiseBatch:
    """Noise of paths ``first .. first+P-1`` restricted to an evaluation grid.

    ``W`` and ``Cb`` hold cumulative Brownian motion and cumulative drift
    integral at the grid points, one row per path (``Cb`` has a single row
    for deterministic drift).  Jumps are flattened with per-path offsets.
    """

    first: int
    times: np.ndarray
    W: np.ndarray
    Cb: np.ndarray
    x0: np.ndarray
    offsets: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    jump_cell: np.ndarray

    @property
    def P(self) -> int:
        return self.x0.size


def sample_batch(spec, master: Net, grid_idx: np.ndarray, seed: int, first: int, count: int, Cb_master=None) -> NoiseBatch:
    """Noise for ``count`` consecutive paths, restricted to master indices ``grid_idx``.

    ``Cb_master`` is the precomputed cumulative drift integral on the master
    grid when the drift is deterministic.
    """
    times = master.points[grid_idx]
    W = np.empty((count, grid_idx.size))
    x0 = np.empty(count)
    offsets = np.zeros(count + 1, dtype=np.int64)
    jt, ju = [], []
    adapted = Cb_master is None
    Cb = np.empty((count, grid_idx.size)) if adapted else Cb_master[grid_idx][None, :]
    dt = np.diff(master.points)
    sq = np.sqrt(dt)
    for i in range(count):
        p = first + i
        dW = quantize(substream(seed, p, BROWNIAN).standard_normal(master.N) * sq)
        w = np.empty(master.N + 1)
        w[0] = 0.0
        np.cumsum(dW, out=w[1:])
        W[i] = w[grid_idx]
        t, u = _sample_jumps(substream(seed, p, JUMPS), spec.measure, master.T)
        jt.append(t)
        ju.append(u)
        offsets[i + 1] = offsets[i] + t.size
        x0[i] = spec.initial_law.sample(substream(seed, p, INITIAL))
        if adapted:
            c = np.empty(master.N + 1)
            c[0] = 0.0
            np.cumsum(spec.drift.sample_integrals(substream(seed, p, DRIFT), master.points), out=c[1:])
            Cb[i] = c[grid_idx]
    jump_times = np.concatenate(jt) if jt else np.empty(0)
    jump_marks = np.concatenate(ju) if ju else np.empty(0)
    cell = np.searchsorted(times, jump_times, side="left").astype(np.int64) - 1
    return NoiseBatch(first, times, W, np.ascontiguousarray(Cb), x0, offsets, jump_times, jump_marks, cell)


def cumulative_drift(drift, master: Net):
    """Cumulative deterministic drift integral on the master grid (``None`` for adapted drift)."""
    if not drift.is_deterministic:
        return None
    out = np.empty(master.N + 1)
    out[0] = 0.0
    if drift.antiderivative is not None:
        A = np.asarray(drift.antiderivative(master.points), dtype=float)
        out[1:] = A[1:] - A[0]
    else:
        np.cumsum(drift.interval_integrals(master.points), out=out[1:])
    return out


# ---------------------------------------------------------------------------
# audit dump


def write_noise_csv(path, realizations) -> None:
    """CSV rows ``path_index, kind, time_or_interval_index, value`` (``kind`` is ``dW`` or ``jump``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_index", "kind", "time_or_interval_index", "value"])
        for nz in realizations:
            for k, v in enumerate(nz.dW):
                w.writerow([nz.path_index, "dW", k, repr(float(v))])
            for t, u in zip(nz.jump_times, nz.jump_marks):
                w.writerow([nz.path_index, "jump", repr(float(t)), repr(float(u))])


def read_noise_csv(path, master: Net, seed: int = 0) -> list:
    """Inverse of :func:`write_noise_csv`."""
    rows = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            p = int(rec["path_index"])
            d = rows.setdefault(p, {"dW": {}, "jumps": []})
            if rec["kind"] == "dW":
                d["dW"][int(rec["time_or_interval_index"])] = float(rec["value"])
            elif rec["kind"] == "jump":
                d["jumps"].append((float(rec["time_or_interval_index"]), float(rec["value"])))
            else:
                raise ValueError(f"unknown noise row kind {rec['kind']!r}")
    out = []
    for p in sorted(rows):
        d = rows[p]
        dW = np.array([d["dW"][k] for k in range(master.N)])
        jumps = d["jumps"]
        out.append(
            NoiseRealization(master, dW, np.array([t for t, _ in jumps]), np.array([u for _, u in jumps]), seed, p)
        )
    return out


def check_divides(T: float, master_steps: int, steps: int) -> None:
    if master_steps % steps:
        raise ValueError(f"{steps} steps do not divide the master resolution {master_steps}")


def steps_for_mesh(T: float, mesh: float) -> int:
    n = T / mesh
    steps = int(round(n))
    if steps < 1 or not math.isclose(n, steps, rel_tol=1e-12):
        raise ValueError(f"mesh {mesh} does not divide the horizon {T}")
    return steps
