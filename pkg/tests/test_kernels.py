import numpy as np
import pytest

from jumpflow import _kernels
from jumpflow._backend import HAVE_NUMBA, default_backend, resolve_backend
from jumpflow.analysis import run_engine
from jumpflow.noise import cumulative_drift, sample_batch, uniform_net

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _batch(spec, n_grid=64, count=40, seed=3):
    master = uniform_net(1.0, 256)
    grid = uniform_net(1.0, n_grid)
    idx = grid.indices_in(master)
    b = sample_batch(spec, master, idx, seed, 0, count, cumulative_drift(spec.drift, master))
    return grid, b


@pytest.mark.parametrize("name", ["cir", "cir_jump", "levy"])
def test_euler_batch_backends_bit_identical(name, request):
    spec = request.getfixturevalue(name)
    grid, b = _batch(spec)
    idx = uniform_net(1.0, 8).indices_in(grid)
    coef = _kernels.Coefficients.from_spec(spec)
    args = (b.times, b.W, b.Cb, b.x0, b.offsets, b.jump_times, b.jump_marks, b.jump_cell, idx, coef)
    nb = _kernels.euler_batch("numba", *args)
    npy = _kernels.euler_batch("numpy", *args)
    for a, c in zip(nb, npy):
        assert np.array_equal(a, c)


@pytest.mark.parametrize("name", ["cir", "cir_jump", "levy"])
def test_study_batch_backends_agree(name, request):
    spec = request.getfixturevalue(name)
    grid, b = _batch(spec)
    nets = [np.arange(grid.N + 1), uniform_net(1.0, 4).indices_in(grid), uniform_net(1.0, 16).indices_in(grid)]
    coef = _kernels.Coefficients.from_spec(spec)
    args = (b.times, b.W, b.Cb, b.x0, b.offsets, b.jump_times, b.jump_marks, b.jump_cell, nets, coef)
    nb = _kernels.study_batch("numba", *args)
    npy = _kernels.study_batch("numpy", *args)
    for a, c in zip(nb, npy):
        assert a.shape == c.shape
        np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-12)


def test_reference_net_has_zero_distance(cir_jump):
    res = run_engine(cir_jump, uniform_net(1.0, 64), [uniform_net(1.0, 64)], 20, 1)
    assert np.all(res.sup[:, 0] == 0.0)
    assert np.all(res.sup[:, 1] == 0.0)


def test_python_coefficients_fall_back_to_numpy():
    from jumpflow.model import custom_model

    spec = custom_model(beta=-1.0, sigma=lambda x: 0.3 * np.sqrt(x))
    assert not _kernels.Coefficients.from_spec(spec).compiled
    a = run_engine(spec, uniform_net(1.0, 16), [], 8, 2, backend="numba")
    b = run_engine(spec, uniform_net(1.0, 16), [], 8, 2, backend="numpy")
    assert np.array_equal(a.term, b.term)


def test_backend_env_flag(monkeypatch):
    monkeypatch.setenv("JUMPFLOW_BACKEND", "numpy")
    assert default_backend() == "numpy"
    assert resolve_backend(None) == "numpy"
    monkeypatch.setenv("JUMPFLOW_BACKEND", "fortran")
    with pytest.raises(ValueError):
        default_backend()
