"""The compiled kernels and their numpy fallbacks must agree exactly."""
import numpy as np
import pytest

from polling_tandem import _accel
from polling_tandem.ctmc import _power_sweep, _power_sweep_numpy, stationary_distribution
from polling_tandem.intervisit import build_intervisit_model
from polling_tandem.model import ModelParams, SolverConfig
from polling_tandem.ss1 import _ss1_kernel, _ss1_numpy, ss1_generator
from polling_tandem.ss2 import _ss2_kernel, _ss2_numpy, ss2_generator

P = ModelParams(lam=(1.0, 0.7), mu=((4, 3), (3.5, 2.8)), mu_setup=((1, 1.5), (2, 1.2)))


def sorted_triplets(src, dst, val):
    order = np.lexsort((dst, src))
    return src[order], dst[order], val[order]


def test_ss1_kernels_identical():
    args = (9, 1.0, 0.7, 4.0, 3.5, 1.0, 2.0)
    for a, b in zip(sorted_triplets(*_ss1_kernel(*args)), sorted_triplets(*_ss1_numpy(*args))):
        np.testing.assert_array_equal(a, b)


def test_ss2_kernels_identical():
    iv = build_intervisit_model(P)
    q = [np.resize(p, 7) for p in iv.pmf]
    args = (6, 5, np.array([1.0, 0.7]), np.array([4.0, 3.5]), np.array([1.0, 2.0]),
            np.array([3.0, 2.8]), np.array([1.5, 1.2]), q[0], q[1])
    for a, b in zip(sorted_triplets(*_ss2_kernel(*args)), sorted_triplets(*_ss2_numpy(*args))):
        np.testing.assert_array_equal(a, b)


def test_generators_identical_under_both_modes(accel_mode):
    _, gen = ss1_generator(P, cap=10)
    iv = build_intervisit_model(P)
    _, gen2 = ss2_generator(P, iv.pmf, 5, 5)
    _accel.set_use_numba(not accel_mode)
    _, ref = ss1_generator(P, cap=10)
    _, ref2 = ss2_generator(P, iv.pmf, 5, 5)
    assert (gen.rates != ref.rates).nnz == 0
    assert (gen2.rates != ref2.rates).nnz == 0


def test_power_sweeps_agree():
    _, gen = ss1_generator(P, cap=12)
    qt = gen.rates.T.tocsr()
    rng = np.random.default_rng(0)
    pi = rng.random(gen.n)
    pi /= pi.sum()
    inv = 1.0 / (1.01 * gen.outflow.max())
    a, b = np.empty_like(pi), np.empty_like(pi)
    da = _power_sweep(qt.indptr, qt.indices, qt.data, gen.outflow, inv, pi, a)
    db = _power_sweep_numpy(qt, gen.outflow, inv, pi, b)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-16)
    assert da == pytest.approx(db, rel=1e-10)


def test_power_solution_same_under_both_modes(accel_mode):
    _, gen = ss1_generator(P, cap=8)
    pi = stationary_distribution(gen, SolverConfig(method="power")).pi
    ref = stationary_distribution(gen, method="direct").pi
    np.testing.assert_allclose(pi, ref, atol=1e-9)
