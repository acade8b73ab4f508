"""Finite continuous-time Markov chains: state enumeration, generators, solvers."""
from __future__ import annotations

import csv
import logging
import warnings
from collections.abc import Callable, Hashable, Iterable, Sequence
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _accel
from .model import SolverConfig

log = logging.getLogger(__name__)

TransitionRules = Callable[[Hashable], Iterable[tuple[Hashable, float]]]


class StateSpaceOverflow(RuntimeError):
    """The reachable set grew past the configured hard limit."""


class SolverError(RuntimeError):
    """The stationary solve failed (singular system or no convergence)."""


@dataclass(frozen=True)
class StateSpace:
    states: list
    index: dict

    def __len__(self):
        return len(self.states)


def enumerate_states(
    rules: TransitionRules,
    seeds: Sequence[Hashable],
    max_states: int = 10_000_000,
    key: Callable | None = None,
) -> StateSpace:
    """Close ``seeds`` under ``rules`` and order the result canonically.

    ``rules(s)`` yields ``(successor, rate)`` pairs; successors with a zero
    rate are still treated as reachable only if the rate is positive.
    States are sorted by ``key`` (default: the state itself, which must be a
    tuple or otherwise orderable).
    """
    seen = set(seeds)
    frontier = list(seeds)
    while frontier:
        s = frontier.pop()
        for t, rate in rules(s):
            if rate > 0 and t not in seen:
                seen.add(t)
                if len(seen) > max_states:
                    raise StateSpaceOverflow(
                        f"more than {max_states} reachable states; lower the truncation caps"
                    )
                frontier.append(t)
    states = sorted(seen, key=key)
    return StateSpace(states, {s: k for k, s in enumerate(states)})


class GeneratorMatrix:
    """Sparse CTMC generator stored as its off-diagonal rate matrix.

    The diagonal is implied as minus the row sum of the off-diagonal rates.
    """

    def __init__(self, rates: sp.csr_matrix):
        rates = sp.csr_matrix(rates, dtype=np.float64)
        rates.setdiag(0.0)
        rates.eliminate_zeros()
        rates.sum_duplicates()
        rates.sort_indices()
        if rates.nnz and rates.data.min() < 0:
            raise ValueError("off-diagonal rates must be non-negative")
        if not np.all(np.isfinite(rates.data)):
            raise ValueError("rates must be finite")
        self.rates = rates
        self.outflow = np.asarray(rates.sum(axis=1)).ravel()

    @classmethod
    def from_coo(cls, rows, cols, vals, n: int) -> GeneratorMatrix:
        m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return cls(m)

    @classmethod
    def from_rules(cls, space: StateSpace, rules: TransitionRules) -> GeneratorMatrix:
        rows, cols, vals = [], [], []
        for k, s in enumerate(space.states):
            for t, rate in rules(s):
                if rate > 0 and t != s:
                    rows.append(k)
                    cols.append(space.index[t])
                    vals.append(rate)
        return cls.from_coo(rows, cols, vals, len(space))

    @property
    def n(self) -> int:
        return self.rates.shape[0]

    @property
    def q(self) -> sp.csr_matrix:
        """Full generator including the diagonal."""
        return (self.rates - sp.diags(self.outflow)).tocsr()

    def dense(self) -> np.ndarray:
        return self.q.toarray()

    def permuted(self, order: np.ndarray) -> GeneratorMatrix:
        """Relabel states so new state ``k`` is old state ``order[k]``."""
        return GeneratorMatrix(self.rates[order][:, order])


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    residual: float
    method: str
    iterations: int = 0


def residual_norm(gen: GeneratorMatrix, pi: np.ndarray) -> float:
    """Max-norm of ``pi Q``."""
    flow = gen.rates.T @ pi - gen.outflow * pi
    return float(np.abs(flow).max()) if flow.size else 0.0


def _normal_system(gen: GeneratorMatrix):
    n = gen.n
    # balance equations Q^T pi = 0 with the last one swapped for sum(pi) = 1
    a = gen.q.T.tocsr()[:-1]
    a = sp.vstack([a, sp.csr_matrix(np.ones((1, n)))], format="csc")
    b = np.zeros(n)
    b[-1] = 1.0
    return a, b


def _solve_direct(gen: GeneratorMatrix) -> np.ndarray:
    a, b = _normal_system(gen)
    try:
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", spla.MatrixRankWarning)
            pi = spla.spsolve(a, b)
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise SolverError(f"singular balance system: {exc}") from exc
    if not np.all(np.isfinite(pi)):
        raise SolverError("singular balance system (chain disconnected or mis-truncated)")
    return pi


def _solve_krylov(gen: GeneratorMatrix, cfg: SolverConfig) -> tuple[np.ndarray, int]:
    a, b = _normal_system(gen)
    try:
        ilu = spla.spilu(a, drop_tol=cfg.ilu_drop_tol, fill_factor=cfg.ilu_fill_factor)
    except RuntimeError as exc:
        raise SolverError(f"incomplete LU failed: {exc}") from exc
    m = spla.LinearOperator(a.shape, ilu.solve)
    count = [0]

    def tick(_):
        count[0] += 1

    x, info = spla.gmres(
        a, b, M=m, rtol=cfg.krylov_rtol, atol=0.0, restart=100, maxiter=cfg.krylov_max_restarts,
        callback=tick, callback_type="pr_norm",
    )
    if info != 0 or not np.all(np.isfinite(x)):
        raise SolverError(f"GMRES did not converge (info={info})")
    return x, count[0]


@_accel.njit
def _power_sweep(indptr, indices, data, outflow, inv_rate, pi, out):
    # out = pi (I + Q / rate), with Q^T stored as CSR (indptr, indices, data)
    n = pi.shape[0]
    total = 0.0
    for k in range(n):
        acc = pi[k] * (1.0 - outflow[k] * inv_rate)
        for p in range(indptr[k], indptr[k + 1]):
            acc += data[p] * inv_rate * pi[indices[p]]
        out[k] = acc
        total += acc
    diff = 0.0
    for k in range(n):
        out[k] /= total
        diff += abs(out[k] - pi[k])
    return diff


def _power_sweep_numpy(qt, outflow, inv_rate, pi, out):
    out[:] = pi * (1.0 - outflow * inv_rate) + inv_rate * (qt @ pi)
    out /= out.sum()
    return float(np.abs(out - pi).sum())


def _solve_power(gen: GeneratorMatrix, cfg: SolverConfig, start: np.ndarray | None):
    n = gen.n
    rate = cfg.uniformization * float(gen.outflow.max())
    inv_rate = 1.0 / rate
    qt = gen.rates.T.tocsr()
    pi = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=np.float64).copy()
    pi /= pi.sum()
    out = np.empty_like(pi)
    for it in range(1, cfg.max_iter + 1):
        if _accel.use_numba():
            diff = _power_sweep(qt.indptr, qt.indices, qt.data, gen.outflow, inv_rate, pi, out)
        else:
            diff = _power_sweep_numpy(qt, gen.outflow, inv_rate, pi, out)
        pi, out = out, pi
        if diff <= cfg.power_tol:
            return pi, it
    raise SolverError(f"power iteration did not converge in {cfg.max_iter} sweeps (last step {diff:.3g})")


def stationary_distribution(
    gen: GeneratorMatrix,
    cfg: SolverConfig | None = None,
    method: str | None = None,
    start: np.ndarray | None = None,
) -> StationaryDistribution:
    """Solve ``pi Q = 0``, ``sum(pi) = 1``.

    Methods: ``"direct"`` (sparse LU of the balance equations with one row
    replaced by the normalization), ``"krylov"`` (ILU-preconditioned GMRES on
    the same system, falling back to power iteration if it stalls) and
    ``"power"`` (power iteration on the uniformized chain). ``start`` seeds
    the power iteration only.
    """
    cfg = cfg or SolverConfig()
    method = method or cfg.method
    if method == "auto":
        method = "direct" if gen.n <= cfg.direct_max_states else "krylov"
    iterations = 0
    if gen.n == 1:
        pi = np.ones(1)
    elif method == "direct":
        pi = _solve_direct(gen)
    elif method == "krylov":
        try:
            pi, iterations = _solve_krylov(gen, cfg)
        except SolverError as exc:
            log.warning("%s; falling back to power iteration", exc)
            method = "power"
            pi, iterations = _solve_power(gen, cfg, start)
    elif method == "power":
        pi, iterations = _solve_power(gen, cfg, start)
    else:
        raise ValueError(f"unknown method {method!r}")
    # tiny negative round-off from LU
    pi = np.where(pi < 0, 0.0, pi) if pi.min() > -1e-12 else pi
    if pi.min() < 0:
        raise SolverError(f"negative probability {pi.min():.3g}; chain is not irreducible")
    pi = pi / pi.sum()
    res = residual_norm(gen, pi)
    scale = max(float(gen.outflow.max()), 1.0) if gen.n else 1.0
    if res > cfg.residual_tol * scale:
        raise SolverError(f"residual {res:.3g} exceeds tolerance {cfg.residual_tol * scale:.3g}")
    log.debug("solved %d states by %s: residual %.3g", gen.n, method, res)
    return StationaryDistribution(pi=pi, residual=res, method=method, iterations=iterations)


def dump_generator_csv(gen: GeneratorMatrix, path) -> None:
    coo = gen.q.tocoo()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_id", "col_id", "rate"])
        for r, c, v in zip(coo.row, coo.col, coo.data):
            w.writerow([int(r), int(c), repr(float(v))])


def dump_pi_csv(states: Sequence, pi: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state_tuple", "probability"])
        for s, p in zip(states, pi):
            w.writerow([str(tuple(s)), repr(float(p))])
