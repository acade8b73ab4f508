"""Exact CTMC for a single two-queue polling station with exhaustive service.

Used for station 1 of the tandem line, and (with station-2 rates) by the
independent-stations baseline.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from . import _accel
from .ctmc import GeneratorMatrix, StateSpaceOverflow, StationaryDistribution, stationary_distribution
from .model import ModelParams, require_valid


class Phase(IntEnum):
    """Server activity. Sorting order is the canonical state order."""

    S1 = 0  # setting up for product 1
    S2 = 1
    U1 = 2  # serving product 1
    U2 = 3


class Ss1State(NamedTuple):
    phase: Phase
    l1: int
    l2: int


class TruncationInadequate(RuntimeError):
    """Throughput criterion still unmet at the largest allowed caps."""


def transitions_ss1(s: Ss1State, params: ModelParams, station: int = 0, cap: int | None = None):
    """Outgoing transitions of ``s`` as a list of ``(state, rate)``.

    Arrivals that would push a queue past ``cap`` are dropped.
    """
    cap = params.truncation.queue_cap_ss1 if cap is None else cap
    (mu1, mu2), (ms1, ms2) = params.station(station)
    lam1, lam2 = params.lam
    ph, a, b = s
    out = []
    if ph == Phase.S1:
        out.append((Ss1State(Phase.U1, a, b) if a > 0 else Ss1State(Phase.S2, a, b), ms1))
    elif ph == Phase.S2:
        out.append((Ss1State(Phase.U2, a, b) if b > 0 else Ss1State(Phase.S1, a, b), ms2))
    elif ph == Phase.U1:
        out.append((Ss1State(Phase.U1, a - 1, b) if a > 1 else Ss1State(Phase.S2, 0, b), mu1))
    else:
        out.append((Ss1State(Phase.U2, a, b - 1) if b > 1 else Ss1State(Phase.S1, a, 0), mu2))
    if a < cap:
        out.append((Ss1State(Phase(ph), a + 1, b), lam1))
    if b < cap:
        out.append((Ss1State(Phase(ph), a, b + 1), lam2))
    return out


# --- grid encoding: g = phase * (N+1)^2 + l1 * (N+1) + l2 -------------------


def grid_valid_mask(cap: int) -> np.ndarray:
    m = cap + 1
    ph, a, b = np.unravel_index(np.arange(4 * m * m), (4, m, m))
    return ~(((ph == Phase.U1) & (a == 0)) | ((ph == Phase.U2) & (b == 0)))


@_accel.njit
def _ss1_kernel(cap, lam1, lam2, mu1, mu2, ms1, ms2):
    m = cap + 1
    mm = m * m
    size = 4 * mm * 3
    src = np.empty(size, np.int64)
    dst = np.empty(size, np.int64)
    val = np.empty(size, np.float64)
    k = 0
    for ph in range(4):
        for a in range(m):
            for b in range(m):
                if (ph == 2 and a == 0) or (ph == 3 and b == 0):
                    continue
                g = ph * mm + a * m + b
                if ph == 0:
                    t = (2 * mm + a * m + b) if a > 0 else (mm + a * m + b)
                    r = ms1
                elif ph == 1:
                    t = (3 * mm + a * m + b) if b > 0 else (a * m + b)
                    r = ms2
                elif ph == 2:
                    t = (2 * mm + (a - 1) * m + b) if a > 1 else (mm + b)
                    r = mu1
                else:
                    t = (3 * mm + a * m + b - 1) if b > 1 else (a * m)
                    r = mu2
                src[k] = g
                dst[k] = t
                val[k] = r
                k += 1
                if a < cap:
                    src[k] = g
                    dst[k] = g + m
                    val[k] = lam1
                    k += 1
                if b < cap:
                    src[k] = g
                    dst[k] = g + 1
                    val[k] = lam2
                    k += 1
    return src[:k], dst[:k], val[:k]


def _ss1_numpy(cap, lam1, lam2, mu1, mu2, ms1, ms2):
    m = cap + 1
    mm = m * m
    g = np.flatnonzero(grid_valid_mask(cap))
    ph, a, b = np.unravel_index(g, (4, m, m))
    src, dst, val = [], [], []

    def emit(mask, target, rate):
        src.append(g[mask])
        dst.append(target[mask] if isinstance(target, np.ndarray) else np.full(mask.sum(), target))
        val.append(np.full(mask.sum(), rate))

    base = a * m + b
    emit((ph == 0) & (a > 0), 2 * mm + base, ms1)
    emit((ph == 0) & (a == 0), mm + base, ms1)
    emit((ph == 1) & (b > 0), 3 * mm + base, ms2)
    emit((ph == 1) & (b == 0), base, ms2)
    emit((ph == 2) & (a > 1), 2 * mm + base - m, mu1)
    emit((ph == 2) & (a == 1), mm + b, mu1)
    emit((ph == 3) & (b > 1), 3 * mm + base - 1, mu2)
    emit((ph == 3) & (b == 1), a * m, mu2)
    emit(a < cap, g + m, lam1)
    emit(b < cap, g + 1, lam2)
    return np.concatenate(src), np.concatenate(dst), np.concatenate(val)


def ss1_generator(params: ModelParams, station: int = 0, cap: int | None = None):
    """Assemble the truncated generator.

    Returns ``(states, gen)`` where ``states`` is an ``(n, 3)`` int array of
    ``(phase, l1, l2)`` rows in canonical order.
    """
    cap = params.truncation.queue_cap_ss1 if cap is None else cap
    (mu1, mu2), (ms1, ms2) = params.station(station)
    lam1, lam2 = params.lam
    m = cap + 1
    n_grid = 4 * m * m
    if n_grid > params.solver.max_states:
        raise StateSpaceOverflow(f"{n_grid} grid states exceed max_states")
    kernel = _ss1_kernel if _accel.use_numba() else _ss1_numpy
    src, dst, val = kernel(cap, lam1, lam2, mu1, mu2, ms1, ms2)
    valid = grid_valid_mask(cap)
    lookup = np.full(n_grid, -1, np.int64)
    lookup[valid] = np.arange(valid.sum())
    states = np.stack(np.unravel_index(np.flatnonzero(valid), (4, m, m)), axis=1)
    gen = GeneratorMatrix.from_coo(lookup[src], lookup[dst], val, len(states))
    return states, gen


@dataclass(frozen=True)
class Ss1Result:
    station: int
    states: np.ndarray
    pi: StationaryDistribution
    th: tuple[float, float]
    l: tuple[float, float]
    w: tuple[float, float]
    queue_length_pmf: np.ndarray  # joint P(l1, l2), all epochs
    setup_completion_pmf: np.ndarray  # [i, l1, l2] at completions of setup for product i
    caps_used: int

    def to_json(self) -> dict:
        return {
            "station": self.station + 1,
            "th": list(self.th),
            "l": list(self.l),
            "w": list(self.w),
            "residual": self.pi.residual,
            "caps_used": self.caps_used,
        }


def measures_from_pi(states: np.ndarray, pi: np.ndarray, params: ModelParams, station: int):
    (mu1, mu2), _ = params.station(station)
    ph, a, b = states[:, 0], states[:, 1], states[:, 2]
    th = (mu1 * pi[ph == Phase.U1].sum(), mu2 * pi[ph == Phase.U2].sum())
    l = (float(a @ pi), float(b @ pi))
    w = (l[0] / th[0], l[1] / th[1])
    return (float(th[0]), float(th[1])), l, w


def _solve_once(params: ModelParams, station: int, cap: int) -> Ss1Result:
    states, gen = ss1_generator(params, station, cap)
    dist = stationary_distribution(gen, params.solver)
    pi = dist.pi
    th, l, w = measures_from_pi(states, pi, params, station)
    m = cap + 1
    ph, a, b = states[:, 0], states[:, 1], states[:, 2]
    joint = np.zeros((m, m))
    np.add.at(joint, (a, b), pi)
    at_setup = np.zeros((2, m, m))
    for i, s_phase in enumerate((Phase.S1, Phase.S2)):
        sel = ph == s_phase
        np.add.at(at_setup[i], (a[sel], b[sel]), pi[sel])
        at_setup[i] /= at_setup[i].sum()
    return Ss1Result(station, states, dist, th, l, w, joint, at_setup, cap)


def throughput_ok(th, lam, tol) -> bool:
    return all(abs(th[i] - lam[i]) / lam[i] < tol for i in range(2))


def solve_ss1(params: ModelParams, station: int = 0) -> Ss1Result:
    """Solve the single-station polling chain and extract TH, L, W per product.

    With ``auto_grow`` the queue cap doubles until every product's throughput
    is within ``solver.throughput_tol`` (relative) of its arrival rate.
    """
    require_valid(params)
    trunc = params.truncation
    cap = trunc.queue_cap_ss1
    while True:
        res = _solve_once(params, station, cap)
        if throughput_ok(res.th, params.lam, params.solver.throughput_tol):
            return res
        if not trunc.auto_grow or 2 * cap > trunc.max_cap:
            if trunc.auto_grow:
                raise TruncationInadequate(
                    f"station {station + 1}: throughput {res.th} vs lambda {params.lam} "
                    f"at cap {cap}"
                )
            return res
        cap *= 2
