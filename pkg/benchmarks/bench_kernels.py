"""Time the numba kernels against their pure-numpy / interpreted fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3]

Compilation is excluded: every kernel is warmed up once before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from polling_tandem import _accel
from polling_tandem.ctmc import _power_sweep, _power_sweep_numpy
from polling_tandem.des import SimConfig, run_replication
from polling_tandem.intervisit import build_intervisit_model
from polling_tandem.model import symmetric_params
from polling_tandem.ss1 import ss1_generator
from polling_tandem.ss2 import ss2_generator

PARAMS = symmetric_params(1.0, 3.3333333333333335, 1.0)


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def power_sweeps(numba_on, gen, sweeps=50):
    qt = gen.rates.T.tocsr()
    inv_rate = 1.0 / (1.01 * gen.outflow.max())
    pi = np.full(gen.n, 1.0 / gen.n)
    out = np.empty_like(pi)

    def run():
        a, b = pi.copy(), out
        for _ in range(sweeps):
            if numba_on:
                _power_sweep(qt.indptr, qt.indices, qt.data, gen.outflow, inv_rate, a, b)
            else:
                _power_sweep_numpy(qt, gen.outflow, inv_rate, a, b)
            a, b = b, a

    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    iv = build_intervisit_model(PARAMS)
    _, gen = ss2_generator(PARAMS, iv.pmf, 48, 40)
    cases = {
        "ss1 generator (cap 64)": lambda: ss1_generator(PARAMS, cap=64),
        "ss2 generator (48, 40)": lambda: ss2_generator(PARAMS, iv.pmf, 48, 40),
        "power sweep x50 (ss2)": None,
        "DES, 1 rep, horizon 20k": lambda: run_replication(
            PARAMS, SimConfig(warmup=1_000.0, horizon=20_000.0), 0
        ),
    }
    print(f"{'kernel':28s} {'numba [s]':>10s} {'fallback [s]':>13s} {'speed-up':>9s}")
    old = _accel.use_numba()
    try:
        for name, fn in cases.items():
            row = []
            for flag in (True, False):
                _accel.set_use_numba(flag)
                job = power_sweeps(flag, gen) if fn is None else fn
                row.append(best_of(job, args.repeat))
            print(f"{name:28s} {row[0]:10.4f} {row[1]:13.4f} {row[1] / row[0]:8.1f}x")
    finally:
        _accel.set_use_numba(old)


if __name__ == "__main__":
    main()
