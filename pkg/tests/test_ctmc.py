import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from polling_tandem.ctmc import (
    GeneratorMatrix,
    SolverError,
    StateSpaceOverflow,
    dump_generator_csv,
    dump_pi_csv,
    enumerate_states,
    residual_norm,
    stationary_distribution,
)
from polling_tandem.model import SolverConfig, symmetric_params
from polling_tandem.ss1 import Phase, Ss1State, ss1_generator, transitions_ss1


def birth_death(n, lam, mu):
    k = np.arange(n)
    rows = np.concatenate([k[:-1], k[1:]])
    cols = np.concatenate([k[1:], k[:-1]])
    vals = np.concatenate([np.full(n - 1, lam), np.full(n - 1, mu)])
    return GeneratorMatrix.from_coo(rows, cols, vals, n)


def test_flip_flop_enumeration():
    space = enumerate_states(lambda s: [(1 - s, 1.0)], [0])
    assert space.states == [0, 1] and space.index == {0: 0, 1: 1}


@pytest.mark.parametrize("method", ["direct", "krylov", "power"])
def test_two_state_chain(method):
    gen = GeneratorMatrix.from_coo([0, 1], [1, 0], [1.0, 3.0], 2)
    pi = stationary_distribution(gen, method=method).pi
    np.testing.assert_allclose(pi, [0.75, 0.25], atol=1e-12)


@pytest.mark.parametrize("method", ["direct", "krylov", "power"])
def test_truncated_mm1_is_geometric(method):
    n = 65
    pi = stationary_distribution(birth_death(n, 1.0, 4.0), method=method).pi
    ref = 0.25 ** np.arange(n)
    ref /= ref.sum()
    np.testing.assert_allclose(pi, ref, rtol=0, atol=1e-10)
    assert np.arange(n) @ pi == pytest.approx(1.0 / 3.0, rel=1e-9)


def test_ss1_cap2_enumeration_matches_hand_count():
    p = symmetric_params(1.0, 4.0, 1.0)
    space = enumerate_states(lambda s: transitions_ss1(s, p, cap=2), [Ss1State(Phase.S1, 0, 0)])
    # 4 phases x 3 x 3 lengths, minus serving an empty queue (3 + 3)
    hand = {
        (ph, a, b)
        for ph in Phase
        for a in range(3)
        for b in range(3)
        if not ((ph == Phase.U1 and a == 0) or (ph == Phase.U2 and b == 0))
    }
    assert len(space) == 30
    assert {tuple(s) for s in space.states} == hand


def test_ss1_cap64_count_closed_form():
    states, _ = ss1_generator(symmetric_params(1.0, 4.0, 1.0), cap=64)
    assert len(states) == 4 * 65 * 65 - 2 * 65


def test_overflow_is_reported():
    with pytest.raises(StateSpaceOverflow):
        enumerate_states(lambda s: [(s + 1, 1.0)], [0], max_states=100)


def test_generator_rows_sum_to_zero():
    _, gen = ss1_generator(symmetric_params(1.0, 4.0, 1.0), cap=20)
    rows = np.asarray(gen.q.sum(axis=1)).ravel()
    assert np.abs(rows).max() <= 1e-12 * gen.outflow.max()


def test_negative_rate_rejected():
    with pytest.raises(ValueError):
        GeneratorMatrix(sp.csr_matrix(np.array([[0.0, -1.0], [1.0, 0.0]])))


def test_disconnected_chain_is_an_error():
    # two absorbing islands: singular balance system
    gen = GeneratorMatrix.from_coo([0, 1, 2, 3], [1, 0, 3, 2], [1.0, 1.0, 1.0, 1.0], 4)
    with pytest.raises(SolverError):
        stationary_distribution(gen, method="direct")


def test_solvers_agree_on_polling_chain():
    _, gen = ss1_generator(symmetric_params(1.0, 2.5, 1.5), cap=40)
    assert gen.n < 10_000
    ref = stationary_distribution(gen, method="direct").pi
    for m in ("krylov", "power"):
        np.testing.assert_allclose(stationary_distribution(gen, method=m).pi, ref, atol=1e-8)


def test_permutation_invariance():
    _, gen = ss1_generator(symmetric_params(1.0, 3.0, 2.0), cap=16)
    pi = stationary_distribution(gen).pi
    order = np.arange(gen.n)[::-1]
    pi_rev = stationary_distribution(gen.permuted(order)).pi
    np.testing.assert_allclose(pi_rev, pi[order], atol=1e-9)


def test_residual_reported(tmp_path):
    gen = birth_death(10, 1.0, 2.0)
    dist = stationary_distribution(gen, SolverConfig())
    assert dist.residual == pytest.approx(residual_norm(gen, dist.pi))
    assert dist.residual <= 1e-10
    dump_generator_csv(gen, tmp_path / "q.csv")
    dump_pi_csv([(k,) for k in range(10)], dist.pi, tmp_path / "pi.csv")
    lines = (tmp_path / "q.csv").read_text().splitlines()
    assert lines[0] == "row_id,col_id,rate" and len(lines) == 1 + gen.q.nnz
    assert (tmp_path / "pi.csv").read_text().splitlines()[0] == "state_tuple,probability"


@given(
    n=st.integers(2, 12),
    seed=st.integers(0, 2**32 - 1),
    density=st.floats(0.3, 1.0),
)
def test_random_irreducible_chain(n, seed, density):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.1, 5.0, (n, n)) * (rng.random((n, n)) < density)
    # a ring keeps it irreducible
    a[np.arange(n), (np.arange(n) + 1) % n] += 1.0
    np.fill_diagonal(a, 0.0)
    gen = GeneratorMatrix(sp.csr_matrix(a))
    dist = stationary_distribution(gen, method="direct")
    assert dist.pi.min() >= 0 and dist.pi.sum() == pytest.approx(1.0, abs=1e-14)
    assert dist.residual <= 1e-10
    # dense oracle: left null vector of Q
    w, v = np.linalg.eig(gen.dense().T)
    ref = np.real(v[:, np.argmin(np.abs(w))])
    np.testing.assert_allclose(dist.pi, ref / ref.sum(), atol=1e-9)
