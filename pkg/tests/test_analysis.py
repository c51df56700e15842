import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumpflow.analysis import (
    UnsupportedError,
    bound_G,
    bound_H,
    bound_increment,
    convergence_study,
    fit_rate,
    gamma,
    gamma_with_se,
    l1_supnorm_error,
    mean_oracle,
    mean_se,
    moment_curve,
    monotone_checks,
    run_engine,
    simulate_summary,
)
from jumpflow.model import DriftProcess, builtin_model, custom_model
from jumpflow.noise import uniform_net

from oracles import CIR_PARAMS, EULER_HALF_ERROR, G1_K1, MEAN_CIR_T1


def decay(drift=0.0, x0=1.0, K=None):
    return custom_model(beta=-1.0, sigma=lambda x: 0.0 * np.asarray(x), drift=drift, x0=x0, growth_K=K)


def test_mean_se_example():
    m, s = mean_se([0.1, 0.3])
    assert m == pytest.approx(0.2) and s == pytest.approx(0.1)


def test_error_of_identical_nets_is_zero(cir_jump):
    net = uniform_net(1.0, 8)
    assert l1_supnorm_error(cir_jump, net, net, 10, 1) == (0.0, 0.0)
    with pytest.raises(ValueError):
        l1_supnorm_error(cir_jump, uniform_net(1.0, 16), net, 10, 1)


def test_deterministic_euler_error():
    err, se = l1_supnorm_error(decay(), uniform_net(1.0, 2), uniform_net(1.0, 2**12), 4, 0)
    assert abs(err - EULER_HALF_ERROR) <= 1e-3
    assert se == 0.0


def test_deterministic_rate_is_one():
    rep = convergence_study(decay(K=1.0), [2.0**-k for k in range(3, 8)], 2.0**-12, 2, 0)
    assert rep.fitted_rate == pytest.approx(1.0, abs=0.1)
    assert rep.nonincreasing


def test_convergence_argument_errors(cir):
    with pytest.raises(ValueError, match="two meshes"):
        convergence_study(cir, [0.25], 2.0**-8, 10, 0)
    with pytest.raises(ValueError):
        convergence_study(cir, [0.25, 0.125], 2.0**-8, 0, 0)
    with pytest.raises(ValueError, match="finer"):
        convergence_study(cir, [0.25, 0.125], 0.25, 10, 0)


def test_moment_curve_deterministic():
    net = uniform_net(1.0, 8)
    mc = moment_curve(decay(), net, 3, 0)
    np.testing.assert_allclose(mc.mean_abs, (1 - 1 / 8) ** np.arange(9), rtol=1e-13)
    assert mc.mean_abs[0] == 1.0
    assert np.all(mc.se_abs == 0)


def test_moment_curve_below_G(cir):
    mc = moment_curve(cir, uniform_net(1.0, 64), 10_000, 5)
    assert np.all(mc.mean_abs <= bound_G(cir, 1.0) + 3 * mc.se_abs)
    assert mc.mean_abs[0] == pytest.approx(1.0)


def test_bound_G_examples():
    spec = builtin_model("cir", dict(CIR_PARAMS, drift=0.0, growth_K=1.0))
    assert bound_G(spec, 1.0) == pytest.approx(G1_K1, rel=1e-14)
    assert bound_G(spec, 0.0) == pytest.approx(spec.initial_law.mean + 2)
    assert bound_H(spec, 0.0) == pytest.approx(spec.initial_law.mean + 2)


def test_bound_increment_vanishes_with_mesh():
    spec = builtin_model("cir", dict(CIR_PARAMS, drift=0.0, growth_K=1.0))
    vals = [bound_increment(spec, h, 1.0) for h in (1e-2, 1e-4, 1e-6, 1e-10)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3


def test_gamma_examples():
    assert gamma(decay(drift=0.5), 0.3, 1.0) == pytest.approx(0.15)
    assert gamma(decay(drift=0.5), 0.0, 1.0) == 0.0
    ramp = decay(drift=DriftProcess.function(lambda s: np.asarray(s, dtype=float), lambda s: 0.5 * np.asarray(s, dtype=float) ** 2))
    assert gamma(ramp, 0.5, 1.0) == pytest.approx(0.375, abs=1e-8)
    quad_only = decay(drift=DriftProcess.function(lambda s: np.asarray(s, dtype=float)))
    assert gamma(quad_only, 0.5, 1.0) == pytest.approx(0.375, abs=1e-8)
    with pytest.raises(ValueError):
        gamma(ramp, 1.5, 1.0)


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6, unique=True))
def test_gamma_nondecreasing_and_vanishing(nus):
    table = decay(drift=DriftProcess.table([0.0, 0.25, 0.6], [0.2, 1.5, 0.4]))
    nus = sorted(nus)
    vals = [gamma(table, nu, 1.0) for nu in nus]
    assert all(b >= a - 1e-10 for a, b in zip(vals, vals[1:]))
    assert gamma(table, 1e-9, 1.0) <= 1.5e-9 + 1e-12


def test_gamma_adapted_drift_uses_mean_path():
    def sampler(rng, times):
        return np.full(times.size - 1, rng.uniform(0.0, 1.0))

    spec = decay(drift=DriftProcess.adapted(sampler))
    val, se = gamma_with_se(spec, 0.5, 1.0, n_paths=4000, seed=1)
    assert abs(val - 0.25) <= 4 * se + 1e-3
    with pytest.raises(UnsupportedError):
        mean_oracle(spec, 1.0)


def test_mean_oracle_examples():
    spec = builtin_model("cir", CIR_PARAMS)
    assert mean_oracle(spec, 1.0) == pytest.approx(MEAN_CIR_T1, rel=1e-14)
    assert mean_oracle(spec, 0.0) == 1.0
    assert mean_oracle(decay(), math.log(2.0)) == pytest.approx(0.5, rel=1e-14)
    ramp = decay(drift=DriftProcess.function(lambda s: 0.5 + 0.0 * np.asarray(s, dtype=float)))
    assert mean_oracle(ramp, 1.0) == pytest.approx(MEAN_CIR_T1, rel=1e-10)


def test_fit_rate_and_monotone():
    h = [0.5, 0.25, 0.125, 0.0625]
    wobble = [1.02, 0.97, 1.01, 0.99]
    slope, (lo, hi) = fit_rate(h, [3 * x**0.5 * w for x, w in zip(h, wobble)])
    assert slope == pytest.approx(0.5, abs=0.05) and lo < 0.5 < hi
    checks = monotone_checks([0.5, 0.25], [1.0, 1.05], [0.1, 0.1])
    assert checks[0]["passed"]
    assert not monotone_checks([0.5, 0.25], [1.0, 1.5], [0.1, 0.1])[0]["passed"]


def test_engine_batches_and_threads_are_invisible(cir_jump):
    grid = uniform_net(1.0, 64)
    nets = [uniform_net(1.0, 8)]
    a = run_engine(cir_jump, grid, nets, 300, 9, batch_size=64, threads=1)
    b = run_engine(cir_jump, grid, nets, 300, 9, batch_size=64, threads=4)
    assert a.mean.tobytes() == b.mean.tobytes() and a.m2.tobytes() == b.m2.tobytes()
    assert a.sup.tobytes() == b.sup.tobytes()
    c = run_engine(cir_jump, grid, nets, 300, 9, batch_size=300)
    assert np.array_equal(a.sup, c.sup)
    np.testing.assert_allclose(a.mean, c.mean, rtol=1e-12, atol=1e-14)


def test_engine_per_point_stats_match_direct(cir_jump):
    res = run_engine(cir_jump, uniform_net(1.0, 16), [], 200, 3, batch_size=50)
    m, se = res.curve(0, 0)
    assert m[-1] == pytest.approx(res.term[:, 0].mean(), rel=1e-12)
    assert se[-1] == pytest.approx(mean_se(res.term[:, 0])[1], rel=1e-9)


def test_study_report_shapes(cir_jump):
    rep = convergence_study(cir_jump, [0.25, 0.125], 2.0**-6, 200, 4)
    d = json.loads(rep.to_json())
    assert len(d["errors"]) == 2 and all(s >= 0 for s in d["standard_errors"])
    assert rep.to_csv().count("\n") == 3
    assert {c.kind for c in rep.bound_checks} == {"G", "H", "increment"}


def test_levy_study_skips_bounds(levy):
    rep = convergence_study(levy, [0.25, 0.125], 2.0**-6, 50, 4)
    assert rep.G_T is None
    assert all("skipped" in c.note for c in rep.bound_checks)


def test_simulate_summary(cir):
    s = simulate_summary(cir, uniform_net(1.0, 16), 500, 2)
    assert s.times[-1] == 1.0 and s.mean.shape == (17,)
    assert s.histogram[0].sum() == 500


def test_cir_mean_within_richardson_bias():
    spec = builtin_model("cir", CIR_PARAMS)
    coarse = simulate_summary(spec, uniform_net(1.0, 16), 10_000, 31)
    fine = simulate_summary(spec, uniform_net(1.0, 32), 10_000, 31)
    # weak error is O(h): bias of the fine mesh is about the coarse-fine gap
    bias = abs(coarse.terminal[0] - fine.terminal[0])
    m, se = fine.terminal
    assert abs(m - mean_oracle(spec, 1.0)) <= 3 * se + 2 * bias
