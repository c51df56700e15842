"""Time the study kernel under the numba and numpy backends.

Run with ``python3 benchmarks/bench_kernels.py [--paths N] [--repeat R]``.
Noise is sampled once; only the kernel call is timed, after a warm-up call
that also triggers numba compilation.
"""

import argparse
import time

import numpy as np

from jumpflow import _kernels
from jumpflow._backend import HAVE_NUMBA
from jumpflow.model import builtin_model
from jumpflow.noise import cumulative_drift, sample_batch, uniform_net

PARAMS = dict(sigma0=0.5, beta=-1.0, drift=0.5, x0=1.0, rate=2.0, mark_law={"exponential": {"mean": 0.5}})


def setup(n_paths):
    spec = builtin_model("cir_jump", PARAMS)
    master = uniform_net(1.0, 4096)
    ref = uniform_net(1.0, 4096)
    idx = ref.indices_in(master)
    b = sample_batch(spec, master, idx, 1, 0, n_paths, cumulative_drift(spec.drift, master))
    nets = [np.arange(ref.N + 1)] + [uniform_net(1.0, 2**k).indices_in(ref) for k in range(4, 10)]
    coef = _kernels.Coefficients.from_spec(spec)
    return (b.times, b.W, b.Cb, b.x0, b.offsets, b.jump_times, b.jump_marks, b.jump_cell, nets, coef)


def best_of(backend, args, repeat):
    _kernels.study_batch(backend, *args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        _kernels.study_batch(backend, *args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=256)
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args()
    args = setup(a.paths)
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    res = {b: best_of(b, args, a.repeat) for b in backends}
    for b, t in res.items():
        print(f"{b:6s} {t * 1e3:9.2f} ms  ({a.paths / t:,.0f} paths/s)")
    if len(res) == 2:
        print(f"speedup {res['numpy'] / res['numba']:.1f}x")
        same = [np.allclose(x, y, rtol=1e-12, atol=1e-12) for x, y in
                zip(_kernels.study_batch("numba", *args), _kernels.study_batch("numpy", *args))]
        print(f"outputs agree: {all(same)}")


if __name__ == "__main__":
    main()
