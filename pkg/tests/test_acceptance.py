"""Acceptance criteria AC-1 .. AC-9 at their stated tolerances.

Each test records one ``AC-n PASS|FAIL ...`` line, shown in the terminal
summary, and then asserts the criterion.
"""

import json
import time

import numpy as np
import pytest

from conftest import record_acceptance
from jumpflow.analysis import bound_G, convergence_study, mean_oracle, simulate_summary
from jumpflow.euler import simulate_levy_driven, simulate_path
from jumpflow.model import builtin_model
from jumpflow.noise import sample_noise, uniform_net
from jumpflow.yamada import ModulusFamily, build_mollifier, phi, phi_second, second_difference, support_grid

from oracles import (
    A_SQRT,
    AC2_MESHES,
    AC2_REF,
    CIR_JUMP_PARAMS,
    CIR_PARAMS,
    G1_ACCEPT,
    G1_K1,
    H1_ACCEPT,
    LEVY_PARAMS,
    MEAN_CIR_T1,
)

N_PATHS = 10_000
AC1_SEED = 20240601
AC2_SEED = 20240602


def ac1_summary(threads=1):
    spec = builtin_model("cir", CIR_PARAMS)
    return simulate_summary(spec, uniform_net(1.0, 256), N_PATHS, AC1_SEED, threads=threads)


def ac2_report(threads=8):
    spec = builtin_model("cir_jump", CIR_JUMP_PARAMS)
    return convergence_study(spec, AC2_MESHES, AC2_REF, N_PATHS, AC2_SEED, threads=threads)


@pytest.fixture(scope="module")
def ac2():
    t0 = time.perf_counter()
    rep = ac2_report()
    return rep, time.perf_counter() - t0


def test_ac1_mean_oracle():
    spec = builtin_model("cir", CIR_PARAMS)
    oracle = mean_oracle(spec, 1.0)
    t0 = time.perf_counter()
    s = ac1_summary()
    dt = time.perf_counter() - t0
    m, se = s.terminal
    dev = abs(m - MEAN_CIR_T1)
    ok = dev <= 3 * se + 0.01 and abs(oracle - MEAN_CIR_T1) < 1e-14 and dt < 10
    record_acceptance("AC-1", ok, f"mean(T)={m:.6f} se={se:.2e} oracle={MEAN_CIR_T1:.5f} |dev|={dev:.2e} time={dt:.1f}s")
    assert ok


def test_ac2_strong_convergence(ac2):
    rep, dt = ac2
    errs = rep.errors
    factor = errs[0] / errs[-1]
    ok = rep.nonincreasing and errs[-1] <= errs[0] / 4 and dt < 300
    detail = " ".join(f"{h:g}:{e:.4g}" for h, e in zip(rep.meshes, errs))
    record_acceptance("AC-2", ok, f"errors {detail} reduction={factor:.2f} rate={rep.fitted_rate:.3f} time={dt:.1f}s")
    assert ok


def test_ac3_moment_bounds(ac2):
    rep, _ = ac2
    k1 = builtin_model("cir", dict(CIR_PARAMS, drift=0.0, growth_K=1.0))
    G_example = bound_G(k1, 1.0)
    g_checks = [c for c in rep.bound_checks if c.kind in ("G", "H")]
    ok = (
        all(c.passed for c in g_checks)
        and len(g_checks) == 2 * len(AC2_MESHES)
        and abs(G_example - G1_K1) <= 1e-12 * G1_K1
        and abs(rep.G_T - G1_ACCEPT) <= 1e-12 * G1_ACCEPT
        and abs(rep.H_T - H1_ACCEPT) <= 1e-12 * H1_ACCEPT
    )
    worst = max(c.worst_excess for c in g_checks)
    record_acceptance(
        "AC-3", ok, f"G_T={rep.G_T:.4f} H_T={rep.H_T:.4f} worst excess={worst:.4g} G(K=1)={G_example:.3f}"
    )
    assert ok


def test_ac4_increment_bound(ac2):
    rep, _ = ac2
    inc = [c for c in rep.bound_checks if c.kind == "increment"]
    ok = len(inc) == len(AC2_MESHES) and all(c.passed for c in inc)
    detail = " ".join(f"{c.mesh:g}:{c.bound:.3g}" for c in inc)
    record_acceptance("AC-4", ok, f"bounds {detail} worst excess={max(c.worst_excess for c in inc):.4g}")
    assert ok


def test_ac5_negative_part(ac2):
    rep, _ = ac2
    coarse, fine = rep.negative_part[0], rep.negative_part[-1]
    ok = fine <= 0.5 * coarse and fine <= 1e-2
    record_acceptance("AC-5", ok, f"E sup x^- : mesh {rep.meshes[0]:g} {coarse:.3e}, mesh {rep.meshes[-1]:g} {fine:.3e}")
    assert ok


def test_ac6_martingale_mean(ac2):
    rep, _ = ac2
    z = [abs(m) / s for m, s in zip(rep.martingale, rep.martingale_se)]
    ok = all(v <= 4 for v in z)
    record_acceptance("AC-6", ok, "|mean|/se per mesh " + " ".join(f"{v:.2f}" for v in z))
    assert ok


def test_ac7_levy_representation():
    spec = builtin_model("levy_onesided", LEVY_PARAMS)
    master = uniform_net(1.0, 4096)
    worst = 0.0
    for p in range(200):
        nz = sample_noise(master, spec.measure, 7, p)
        for n in (16, 256, 4096):
            net = uniform_net(1.0, n)
            a = simulate_levy_driven(spec, net, nz)
            b = simulate_path(spec, net, nz)
            worst = max(worst, float(np.max(np.abs(a.states - b.states))))
            if a.jump_post.size:
                worst = max(worst, float(np.max(np.abs(a.jump_post - b.jump_post))))
                worst = max(worst, float(np.max(np.abs(a.jump_pre - b.jump_pre))))
    ok = worst <= 1e-12
    record_acceptance("AC-7", ok, f"max pathwise difference {worst:.2e} over 200 paths x 3 nets")
    assert ok


def test_ac8_mollifier_suite():
    t0 = time.perf_counter()
    seq = build_mollifier(ModulusFamily.sqrt(), 5)
    z = np.linspace(-2.0, 2.0, 1000)
    zeta = np.linspace(-2.0, 2.0, 200)
    hs = np.linspace(-2.0, 2.0, 200)
    Z, H = np.meshgrid(zeta, hs, indexing="ij")
    parts = {"a": True, "b": True, "c": True, "d": True, "e": True}
    worst_d2, worst_D = 0.0, -np.inf
    for k in range(1, 6):
        parts["a"] &= abs(seq.a[k] - A_SQRT[k - 1]) <= 1e-10 * A_SQRT[k - 1]
        bump = seq.bump(k)
        parts["b"] &= abs(bump.mass - 1.0) <= 1e-10
        ph = phi(seq, k, z)
        parts["c"] &= bool(np.all(ph >= 0) and np.all(ph <= np.abs(z)) and np.all(np.abs(z) <= seq.a[k - 1] + ph))
        sg = support_grid(bump)
        d2 = phi_second(seq, k, np.concatenate([z, sg, -sg]))
        worst_d2 = max(worst_d2, float(np.max(d2)))
        parts["d"] &= bool(np.all(d2 <= 4.0))
        excess = second_difference(seq, k, Z, H) - (2.0 * H * H + 1e-8)
        worst_D = max(worst_D, float(np.max(excess)))
        parts["e"] &= bool(np.all(excess <= 0))
    dt = time.perf_counter() - t0
    ok = all(parts.values()) and dt < 30
    flags = " ".join(f"({p}){'ok' if v else 'fail'}" for p, v in parts.items())
    record_acceptance("AC-8", ok, f"{flags} max phi''={worst_d2:.3f} max D-2h^2={worst_D:.3g} time={dt:.1f}s")
    assert ok


def test_ac9_determinism(ac2):
    rep, _ = ac2
    a1 = json.dumps(ac1_summary(threads=1).to_dict())
    a2 = json.dumps(ac1_summary(threads=1).to_dict())
    a8 = json.dumps(ac1_summary(threads=8).to_dict())
    b8 = rep.to_json()
    b8_again = ac2_report(threads=8).to_json()
    b1 = ac2_report(threads=1).to_json()
    ok = a1 == a2 == a8 and b8 == b8_again == b1
    record_acceptance("AC-9", ok, f"AC-1 stats identical={a1 == a2 == a8} AC-2 stats identical={b8 == b8_again == b1}")
    assert ok
