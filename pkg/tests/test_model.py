import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumpflow.marks import Exponential
from jumpflow.model import (
    JumpMeasure,
    ModulusSpec,
    ValidationError,
    builtin_model,
    compensator_trunc,
    custom_model,
    g_trunc,
    sigma_trunc,
    validate_growth,
    validate_levy,
    validate_modulus,
)
from jumpflow.yamada import ModulusFamily

from oracles import CIR_JUMP_PARAMS, CIR_PARAMS, LEVY_PARAMS

states = st.floats(-10.0, 10.0, allow_nan=False)
marks_ = st.floats(0.0, 10.0, allow_nan=False)


def zero_model(**kw):
    return custom_model(beta=-1.0, sigma=lambda x: 0.0 * np.asarray(x), **kw)


def test_sigma_trunc_examples(cir):
    assert sigma_trunc(cir, -1.0) == 0.0
    assert sigma_trunc(cir, 0.0) == 0.0
    assert sigma_trunc(cir, 4.0) == pytest.approx(1.0)


def test_g_trunc_examples(cir_jump):
    assert g_trunc(cir_jump, -0.5, 2.0) == 0.0
    assert g_trunc(cir_jump, 0.5, 2.0) == pytest.approx(1.0)
    assert g_trunc(cir_jump, 3.0, 2.0) == pytest.approx(2.0)


def test_compensator_examples(levy, cir_jump):
    assert compensator_trunc(levy, 1.0) == pytest.approx(0.2, abs=1e-12)
    assert compensator_trunc(cir_jump, 0.0) == 0.0
    assert compensator_trunc(levy, 0.0) == 0.0
    empty = builtin_model("cir", CIR_PARAMS)
    assert compensator_trunc(empty, 5.0) == 0.0


def test_quadrature_compensator_matches_closed_form(cir_jump):
    quad = custom_model(
        beta=-1.0,
        sigma=lambda x: 0.5 * np.sqrt(x),
        kernel=lambda x, u: u * np.minimum(x, 1.0),
        measure=cir_jump.measure,
    )
    for x in (0.2, 1.0, 3.0):
        assert compensator_trunc(quad, x) == pytest.approx(compensator_trunc(cir_jump, x), rel=1e-8)


@given(states)
def test_truncations_vanish_on_negative_states(x):
    spec = builtin_model("cir_jump", CIR_JUMP_PARAMS)
    if x < 0:
        assert sigma_trunc(spec, x) == 0.0
        assert g_trunc(spec, x, 1.5) == 0.0
        assert compensator_trunc(spec, x) == 0.0
    else:
        assert sigma_trunc(spec, x) == pytest.approx(spec.sigma(x))


@given(st.floats(0.0, 10.0), marks_)
def test_kernel_keeps_state_nonnegative(x, u):
    spec = builtin_model("cir_jump", CIR_JUMP_PARAMS)
    assert g_trunc(spec, x, u) + x >= 0


def growth_spec():
    # rate 4 exponential mean 0.5 marks: lambda E u^2 = 4 * 0.5 = 2
    return builtin_model("cir_jump", dict(CIR_PARAMS, rate=4.0, mark_law={"exponential": {"mean": 0.5}}))


def test_growth_examples():
    spec = growth_spec()
    assert spec.measure.second_moment == pytest.approx(2.0)
    assert validate_growth(spec, [0, 1, 4], K=2.25).passed
    rep = validate_growth(spec, [0, 1, 4], K=0.01)
    assert not rep.passed
    assert "growth@x=1" in [c.name for c in rep.failures()]
    assert validate_growth(zero_model(), [0, 1], K=0.0).passed
    with pytest.raises(ValueError):
        validate_growth(spec, [])


def test_growth_strict_mode_agrees_for_monotone_kernel():
    spec = growth_spec()
    a = validate_growth(spec, [0.5, 2.0], K=2.25)
    b = validate_growth(spec, [0.5, 2.0], K=2.25, strict=True)
    assert a.passed and b.passed


def test_modulus_examples():
    spec = builtin_model("cir_jump", CIR_JUMP_PARAMS)
    mod = ModulusSpec(ModulusFamily.power(1.5, 0.5), concave_square=True)
    assert validate_modulus(spec, mod, "3a", [(0, 1), (1, 4)], 4).passed

    sq = custom_model(beta=-1.0, sigma=lambda x: np.asarray(x) ** 2)
    rep = validate_modulus(sq, ModulusSpec(ModulusFamily.sqrt(), concave_square=True), "3a", [(3, 4)], 4)
    assert not rep.passed
    bad = rep.failures()[0]
    assert bad.detail["lhs"] == pytest.approx(49.0)
    assert bad.detail["rhs"] == pytest.approx(1.0)

    for mode, f in (("2c", None), ("3a", None), ("2d", lambda u: u), ("3b", lambda u: u)):
        rep = validate_modulus(spec, ModulusSpec(ModulusFamily.sqrt(), f=f), mode, [(1, 1)], 4)
        pair = rep.checks[0]
        assert pair.passed
        if "lhs" in pair.detail:
            assert pair.detail["lhs"] == 0.0 and pair.detail["rhs"] == 0.0

    with pytest.raises(ValueError, match="outside"):
        validate_modulus(spec, mod, "3a", [(0, 5)], 4)


def test_levy_condition(levy):
    rep = validate_levy(levy, [(0, 1), (1, 4)], 4, K_m=1.0)
    assert rep.passed


def test_builtin_examples(cir, levy):
    assert cir.measure.rate == 0
    assert float(cir.sigma(4.0)) == pytest.approx(1.0)
    assert float(cir.sigma(-1.0)) == 0.0
    assert g_trunc(levy, 2.0, 3.0) == pytest.approx(0.1 * 2.0 * 3.0)
    assert compensator_trunc(levy, 3.0) == pytest.approx(0.2 * 3.0)
    with pytest.raises(ValidationError, match="beta"):
        builtin_model("cir_jump", dict(CIR_JUMP_PARAMS, beta=1.0))
    with pytest.raises(ValidationError):
        builtin_model("cir_jump", {"sigma0": 0.5, "rate": 2.0})


def test_invalid_measures():
    with pytest.raises(ValidationError):
        JumpMeasure(1.0)
    with pytest.raises(ValidationError):
        JumpMeasure(-1.0, Exponential(1.0))
    with pytest.raises(ValidationError, match="vanish"):
        custom_model(beta=-1.0, sigma=lambda x: 1.0 + 0 * np.asarray(x))


@given(st.lists(st.floats(0.0, 8.0), min_size=3, max_size=20))
def test_modulus_families_nondecreasing_and_square_concave(zs):
    zs = np.sort(np.asarray(zs))
    for fam in (ModulusFamily.sqrt(), ModulusFamily.power(2.0, 0.5), ModulusFamily.sqrt_log()):
        r = np.asarray(fam(zs))
        assert np.all(np.diff(r) >= -1e-12)
        a, b = zs[0], zs[-1]
        if fam.kind != "sqrt_log" or b <= fam.z_star:
            assert fam.rho_sq(0.5 * (a + b)) >= 0.5 * (fam.rho_sq(a) + fam.rho_sq(b)) - 1e-12


def test_growth_constant_of_builtins(cir, cir_jump):
    assert cir.growth_constant == pytest.approx(0.25)
    assert cir_jump.growth_constant == pytest.approx(0.25 + 2 * 0.5)
    assert math.isclose(cir_jump.measure.first_moment, 1.0)
