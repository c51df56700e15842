"""Hot loops of the Euler scheme: a numba version and a vectorised numpy version.

Both operate on an evaluation grid (a net nested in the master grid) with
cumulative Brownian motion ``W`` and cumulative drift integral ``Cb`` per
path.  A net is given by the indices of its points in the evaluation grid.
Jumps are flattened per batch; ``cell[q]`` is the grid interval
``(t_c, t_{c+1}]`` containing jump ``q``.

Within net interval ``[t_i0, t_i1]`` the scheme value at ``t`` is

    x_k + (((Cb(t) - Cb(t_i0)) + a_k (t - t_i0)) + s_k (W(t) - W(t_i0))) + J(t)

with ``a_k = beta x_k - c'(x_k)``, ``s_k = sigma'(x_k)`` and ``J(t)`` the sum
of ``g'(x_k, u)`` over jumps in ``(t_i0, t]``; at ``t = t_i1`` this is the
next state.  ``W`` and ``Cb`` are linearly interpolated at jump times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import njit
from .model import (
    KERNEL_CAPPED,
    KERNEL_LINEAR,
    KERNEL_ZERO,
    SIGMA_SQRT,
    SIGMA_ZERO,
    ModelSpec,
    compensator_trunc,
    g_trunc,
    sigma_trunc,
)

N_STATS = 3  # value, |value|, |value - x(eta(t))|


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class Coefficients:
    """Truncated coefficients, either as integer codes or as spec callables."""

    beta: float
    codes: tuple | None
    spec: ModelSpec | None = None

    @classmethod
    def from_spec(cls, spec: ModelSpec) -> "Coefficients":
        if spec.codes is None:
            return cls(spec.beta, None, spec)
        sk, sp, kk, kp = spec.codes
        m1 = spec.measure.first_moment
        return cls(spec.beta, (int(sk), float(sp), int(kk), float(kp), float(m1)), spec)

    @property
    def compiled(self) -> bool:
        return self.codes is not None

    def packed(self):
        sk, sp, kk, kp, m1 = self.codes
        return np.array([sk, kk], dtype=np.int64), np.array([sp, kp, m1, self.beta])

    # numpy evaluations; the builtin branches repeat the compiled arithmetic exactly

    def sigma(self, x):
        if self.codes is None:
            return np.asarray(sigma_trunc(self.spec, x), dtype=float)
        sk, sp = self.codes[0], self.codes[1]
        if sk == SIGMA_ZERO:
            return np.zeros_like(x)
        return np.where(x >= 0, sp * np.sqrt(np.maximum(x, 0.0)), 0.0)

    def g(self, x, u):
        if self.codes is None:
            return np.asarray(g_trunc(self.spec, x, u), dtype=float)
        kk, kp = self.codes[2], self.codes[3]
        if kk == KERNEL_ZERO:
            return np.zeros_like(x)
        if kk == KERNEL_CAPPED:
            return np.where(x >= 0, u * np.minimum(x, kp), 0.0)
        return np.where(x >= 0, (kp * x) * u, 0.0)

    def comp(self, x):
        if self.codes is None:
            return np.asarray(compensator_trunc(self.spec, x), dtype=float)
        kk, kp, m1 = self.codes[2], self.codes[3], self.codes[4]
        if kk == KERNEL_ZERO:
            return np.zeros_like(x)
        if kk == KERNEL_CAPPED:
            return np.where(x >= 0, m1 * np.minimum(x, kp), 0.0)
        return np.where(x >= 0, (kp * x) * m1, 0.0)


@njit(cache=True, nogil=True)
def _sigma_nb(icode, fpar, x):
    if icode[0] == SIGMA_ZERO or x < 0.0:
        return 0.0
    if icode[0] == SIGMA_SQRT:
        return fpar[0] * np.sqrt(x)
    return 0.0


@njit(cache=True, nogil=True)
def _g_nb(icode, fpar, x, u):
    if icode[1] == KERNEL_ZERO or x < 0.0:
        return 0.0
    if icode[1] == KERNEL_CAPPED:
        return u * min(x, fpar[1])
    if icode[1] == KERNEL_LINEAR:
        return (fpar[1] * x) * u
    return 0.0


@njit(cache=True, nogil=True)
def _comp_nb(icode, fpar, x):
    if icode[1] == KERNEL_ZERO or x < 0.0:
        return 0.0
    if icode[1] == KERNEL_CAPPED:
        return fpar[2] * min(x, fpar[1])
    if icode[1] == KERNEL_LINEAR:
        return (fpar[1] * x) * fpar[2]
    return 0.0


# ---------------------------------------------------------------------------
# numba: states of one net


@njit(cache=True, nogil=True)
def _euler_batch_nb(t, W, Cb, x0, off, jt, ju, cell, idx, icode, fpar):
    P = x0.size
    N = idx.size - 1
    beta = fpar[3]
    states = np.empty((P, N + 1))
    drift = np.empty((P, N))
    vol = np.empty((P, N))
    applied = np.zeros(jt.size)
    one_row = Cb.shape[0] == 1
    for p in range(P):
        cr = 0 if one_row else p
        x = x0[p]
        states[p, 0] = x
        q = off[p]
        qend = off[p + 1]
        for k in range(N):
            i0 = idx[k]
            i1 = idx[k + 1]
            a = beta * x - _comp_nb(icode, fpar, x)
            s = _sigma_nb(icode, fpar, x)
            J = 0.0
            while q < qend and cell[q] < i1:
                g = _g_nb(icode, fpar, x, ju[q])
                applied[q] = g
                J += g
                q += 1
            xn = x + (((Cb[cr, i1] - Cb[cr, i0]) + a * (t[i1] - t[i0])) + s * (W[p, i1] - W[p, i0])) + J
            drift[p, k] = a
            vol[p, k] = s
            x = xn
            states[p, k + 1] = x
    return states, drift, vol, applied


# ---------------------------------------------------------------------------
# numba: fused study pass over several nets


@njit(cache=True, nogil=True)
def _study_batch_nb(t, W, Cb, x0, off, jt, ju, cell, net_idx, net_off, icode, fpar):
    P = x0.size
    G = t.size - 1
    n_nets = net_off.size - 1
    beta = fpar[3]
    sup = np.zeros((P, n_nets))
    neg = np.zeros((P, n_nets))
    mart = np.zeros((P, n_nets))
    term = np.empty((P, n_nets))
    stats = np.zeros((n_nets, N_STATS, 2, G + 1))
    vref = np.empty(G + 1)
    max_j = 0
    for p in range(P):
        max_j = max(max_j, off[p + 1] - off[p])
    jref_pre = np.empty(max_j)
    jref_post = np.empty(max_j)
    one_row = Cb.shape[0] == 1
    for p in range(P):
        cr = 0 if one_row else p
        inv = 1.0 / (p + 1)
        q0 = off[p]
        qend = off[p + 1]
        for n in range(n_nets):
            idx = net_idx[net_off[n] : net_off[n + 1]]
            N = idx.size - 1
            x = x0[p]
            worst = 0.0
            negp = max(-x, 0.0)
            mt = 0.0
            q = q0
            # t_0
            v = x
            if n == 0:
                vref[0] = v
            else:
                worst = max(worst, abs(v - vref[0]))
            vals = (v, abs(v), 0.0)
            for m in range(N_STATS):
                d = vals[m] - stats[n, m, 0, 0]
                stats[n, m, 0, 0] += d * inv
                stats[n, m, 1, 0] += d * (vals[m] - stats[n, m, 0, 0])
            for k in range(N):
                i0 = idx[k]
                i1 = idx[k + 1]
                a = beta * x - _comp_nb(icode, fpar, x)
                s = _sigma_nb(icode, fpar, x)
                J = 0.0
                for j in range(i0 + 1, i1 + 1):
                    while q < qend and cell[q] == j - 1:
                        tau = jt[q]
                        frac = (tau - t[j - 1]) / (t[j] - t[j - 1])
                        Wt = W[p, j - 1] + (W[p, j] - W[p, j - 1]) * frac
                        Ct = Cb[cr, j - 1] + (Cb[cr, j] - Cb[cr, j - 1]) * frac
                        base = x + (((Ct - Cb[cr, i0]) + a * (tau - t[i0])) + s * (Wt - W[p, i0]))
                        pre = base + J
                        g = _g_nb(icode, fpar, x, ju[q])
                        J += g
                        post = base + J
                        r = q - q0
                        if n == 0:
                            jref_pre[r] = pre
                            jref_post[r] = post
                        else:
                            worst = max(worst, abs(pre - jref_pre[r]), abs(post - jref_post[r]))
                        negp = max(negp, -pre, -post)
                        q += 1
                    v = x + (((Cb[cr, j] - Cb[cr, i0]) + a * (t[j] - t[i0])) + s * (W[p, j] - W[p, i0])) + J
                    if n == 0:
                        vref[j] = v
                    else:
                        worst = max(worst, abs(v - vref[j]))
                    negp = max(negp, -v)
                    vals = (v, abs(v), abs(v - x))
                    for m in range(N_STATS):
                        d = vals[m] - stats[n, m, 0, j]
                        stats[n, m, 0, j] += d * inv
                        stats[n, m, 1, j] += d * (vals[m] - stats[n, m, 0, j])
                mt += J - _comp_nb(icode, fpar, x) * (t[i1] - t[i0])
                x = v if i1 > i0 else x
            sup[p, n] = worst
            neg[p, n] = negp
            mart[p, n] = mt
            term[p, n] = x
    return sup, neg, mart, term, stats


# ---------------------------------------------------------------------------
# numpy versions


def _np_states(t, W, Cb, x0, off, ju, cell, idx, coef: Coefficients):
    P = x0.size
    N = idx.size - 1
    path_of = np.repeat(np.arange(P), np.diff(off))
    # net interval of each jump: idx[k] <= cell < idx[k+1]
    kj = np.searchsorted(idx, cell, side="right") - 1
    order = np.argsort(kj, kind="stable")
    bounds = np.searchsorted(kj[order], np.arange(N + 1), side="left")
    states = np.empty((P, N + 1))
    drift = np.empty((P, N))
    vol = np.empty((P, N))
    applied = np.zeros(ju.size)
    x = np.array(x0, dtype=float)
    states[:, 0] = x
    Crow = Cb if Cb.shape[0] == P else np.broadcast_to(Cb, (P, Cb.shape[1]))
    for k in range(N):
        i0, i1 = idx[k], idx[k + 1]
        a = coef.beta * x - coef.comp(x)
        s = coef.sigma(x)
        J = np.zeros(P)
        sel = order[bounds[k] : bounds[k + 1]]
        if sel.size:
            g = coef.g(x[path_of[sel]], ju[sel])
            applied[sel] = g
            np.add.at(J, path_of[sel], g)
        x = x + (((Crow[:, i1] - Crow[:, i0]) + a * (t[i1] - t[i0])) + s * (W[:, i1] - W[:, i0])) + J
        drift[:, k] = a
        vol[:, k] = s
        states[:, k + 1] = x
    return states, drift, vol, applied, kj, path_of


def _np_reconstruct(t, W, Cb, states, drift, vol, applied, kj, path_of, jt, cell, idx):
    """Values at every grid point and pre/post values at every jump."""
    P, G1 = W.shape
    Crow = Cb if Cb.shape[0] == P else np.broadcast_to(Cb, (P, G1))
    j = np.arange(1, G1)
    kk = np.searchsorted(idx, j, side="left") - 1
    i0 = idx[kk]
    contrib = np.zeros((P, G1))
    np.add.at(contrib, (path_of, cell + 1), applied)
    cs = np.cumsum(contrib, axis=1)
    Jpart = cs[:, j] - cs[:, i0]
    v = np.empty((P, G1))
    v[:, 0] = states[:, 0]
    v[:, 1:] = (
        states[:, kk]
        + (((Crow[:, j] - Crow[:, i0]) + drift[:, kk] * (t[j] - t[i0])) + vol[:, kk] * (W[:, j] - W[:, i0]))
        + Jpart
    )
    # exact states at net points
    v[:, idx] = states
    if jt.size == 0:
        return v, np.empty(0), np.empty(0), kk
    c = cell
    frac = (jt - t[c]) / (t[c + 1] - t[c])
    Wt = W[path_of, c] + (W[path_of, c + 1] - W[path_of, c]) * frac
    Ct = Crow[path_of, c] + (Crow[path_of, c + 1] - Crow[path_of, c]) * frac
    k = kj
    j0 = idx[k]
    base = states[path_of, k] + (((Ct - Crow[path_of, j0]) + drift[path_of, k] * (jt - t[j0])) + vol[path_of, k] * (Wt - W[path_of, j0]))
    # jumps before this one in the same (path, net interval) group
    csum = np.cumsum(applied)
    group = path_of * (idx.size + 1) + k
    start = np.concatenate([[True], group[1:] != group[:-1]])
    first = np.maximum.accumulate(np.where(start, np.arange(jt.size), 0))
    before = csum - applied - (csum[first] - applied[first])
    pre = base + before
    post = pre + applied
    return v, pre, post, kk


def _np_study(t, W, Cb, x0, off, jt, ju, cell, nets, coef: Coefficients):
    P, G1 = W.shape
    n_nets = len(nets)
    sup = np.zeros((P, n_nets))
    neg = np.zeros((P, n_nets))
    mart = np.zeros((P, n_nets))
    term = np.empty((P, n_nets))
    stats = np.zeros((n_nets, N_STATS, 2, G1))
    ref = None
    for n, idx in enumerate(nets):
        states, drift, vol, applied, kj, path_of = _np_states(t, W, Cb, x0, off, ju, cell, idx, coef)
        v, pre, post, kk = _np_reconstruct(t, W, Cb, states, drift, vol, applied, kj, path_of, jt, cell, idx)
        if n == 0:
            ref = (v, pre, post)
        else:
            d = np.max(np.abs(v - ref[0]), axis=1)
            if jt.size:
                dj = np.maximum(np.abs(pre - ref[1]), np.abs(post - ref[2]))
                np.maximum.at(d, path_of, dj)
            sup[:, n] = d
        negp = np.max(np.maximum(-v, 0.0), axis=1)
        if jt.size:
            np.maximum.at(negp, path_of, np.maximum(-pre, -post))
        neg[:, n] = negp
        Jk = np.zeros((P, idx.size - 1))
        np.add.at(Jk, (path_of, kj), applied)
        dt = t[idx[1:]] - t[idx[:-1]]
        comp = coef.comp(states[:, :-1])
        mt = np.zeros(P)
        for k in range(idx.size - 1):
            mt = mt + (Jk[:, k] - comp[:, k] * dt[k])
        mart[:, n] = mt
        term[:, n] = states[:, -1]
        inc = np.zeros((P, G1))
        inc[:, 1:] = np.abs(v[:, 1:] - states[:, kk])
        for m, arr in enumerate((v, np.abs(v), inc)):
            mean = arr.mean(axis=0)
            stats[n, m, 0] = mean
            stats[n, m, 1] = np.sum((arr - mean) ** 2, axis=0)
    return sup, neg, mart, term, stats


# ---------------------------------------------------------------------------
# dispatch


def euler_batch(backend, t, W, Cb, x0, off, jt, ju, cell, idx, coef: Coefficients):
    """States ``(P, N+1)``, per-interval drift/vol coefficients and applied jump sizes."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if backend == "numba" and coef.compiled:
        ic, fp = coef.packed()
        return _euler_batch_nb(t, W, Cb, x0, off, jt, ju, cell, idx, ic, fp)
    states, drift, vol, applied, _, _ = _np_states(t, W, Cb, x0, off, ju, cell, idx, coef)
    return states, drift, vol, applied


def study_batch(backend, t, W, Cb, x0, off, jt, ju, cell, nets, coef: Coefficients):
    """Fused pass over ``nets`` (the first one is the reference evaluated on every grid point).

    Returns per-path sup distance to the reference, sup of the negative
    part, accumulated jump-minus-compensator term and terminal state (each
    ``(P, n_nets)``), and per-point ``[mean, M2]`` of value, absolute value
    and increment since the last net point (``(n_nets, 3, 2, G+1)``).
    """
    nets = [np.ascontiguousarray(i, dtype=np.int64) for i in nets]
    if backend == "numba" and coef.compiled:
        ic, fp = coef.packed()
        net_off = np.concatenate([[0], np.cumsum([i.size for i in nets])]).astype(np.int64)
        return _study_batch_nb(t, W, Cb, x0, off, jt, ju, cell, np.concatenate(nets), net_off, ic, fp)
    return _np_study(t, W, Cb, x0, off, jt, ju, cell, nets, coef)
