"""Partially-collapsible CTMC for station 2 of the tandem line.

Station 1 is tracked coarsely: during a station-1 setup none of its queues
are recorded; while it serves product ``i`` only that queue is recorded. When
a station-1 setup for ``i`` completes, the queue it finds is drawn from the
intervisit arrival-count PMF. Station 2 is tracked in full.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from . import _accel
from .ctmc import GeneratorMatrix, StateSpaceOverflow, StationaryDistribution, stationary_distribution
from .intervisit import IntervisitModel, build_intervisit_model
from .model import ModelParams, TruncationConfig, require_valid
from .ss1 import Phase, Ss1Result, TruncationInadequate, solve_ss1

log = logging.getLogger(__name__)


class SetupAtSt1(NamedTuple):
    setup_for: int
    l12: int
    l22: int
    phase2: Phase


class ServingAtSt1(NamedTuple):
    serving: int
    l_i1: int
    l12: int
    l22: int
    phase2: Phase


Ss2State = Union[SetupAtSt1, ServingAtSt1]


def ss2_key(s: Ss2State) -> tuple:
    """Canonical ordering tuple ``(tag, product, l_i1, phase2, l12, l22)``."""
    if isinstance(s, SetupAtSt1):
        return (0, s.setup_for, 0, int(s.phase2), s.l12, s.l22)
    return (1, s.serving, s.l_i1, int(s.phase2), s.l12, s.l22)


def fold_pmf(pmf: np.ndarray, cap: int) -> np.ndarray:
    """Restrict a PMF to ``0..cap``, lumping the mass above ``cap`` onto ``cap``."""
    out = np.zeros(cap + 1)
    k = min(len(pmf), cap + 1)
    out[:k] = pmf[:k]
    out[cap] += pmf[cap + 1 :].sum()
    return out


def _station2_step(phase2, l12, l22, params: ModelParams):
    """The single station-2 event available in ``(phase2, l12, l22)``."""
    (mu12, mu22), (ms12, ms22) = params.station(1)
    if phase2 == Phase.S1:
        return ((Phase.U1 if l12 > 0 else Phase.S2), l12, l22), ms12
    if phase2 == Phase.S2:
        return ((Phase.U2 if l22 > 0 else Phase.S1), l12, l22), ms22
    if phase2 == Phase.U1:
        return ((Phase.U1, l12 - 1, l22) if l12 > 1 else (Phase.S2, 0, l22)), mu12
    return ((Phase.U2, l12, l22 - 1) if l22 > 1 else (Phase.S1, l12, 0)), mu22


def transitions_ss2(
    s: Ss2State,
    params: ModelParams,
    pmf: tuple[np.ndarray, np.ndarray],
    caps: tuple[int, int] | None = None,
):
    """Outgoing transitions of ``s`` as ``(state, rate)`` pairs.

    Every event changes only its own station's components. Station-1
    departures that would overflow the station-2 cap leave station 2
    unchanged; ``pmf`` mass above the station-1 cap is lumped onto the cap.
    """
    n1, n2 = caps or (params.truncation.queue_cap_ss2_st1, params.truncation.queue_cap_ss2_st2)
    q = [fold_pmf(np.asarray(p), n1) for p in pmf]
    out = []
    (ph2, a, b), r2 = _station2_step(s.phase2, s.l12, s.l22, params)
    out.append((s._replace(phase2=Phase(ph2), l12=a, l22=b), r2))

    if isinstance(s, SetupAtSt1):
        i = s.setup_for
        ms = params.mu_setup[i][0]
        if q[i][0] > 0:
            out.append((s._replace(setup_for=1 - i), q[i][0] * ms))
        for l in range(1, n1 + 1):
            if q[i][l] > 0:
                out.append((ServingAtSt1(i, l, s.l12, s.l22, s.phase2), q[i][l] * ms))
        return out

    i, l = s.serving, s.l_i1
    if l < n1:
        out.append((s._replace(l_i1=l + 1), params.lam[i]))
    l12, l22 = s.l12, s.l22
    if i == 0 and l12 < n2:
        l12 += 1
    elif i == 1 and l22 < n2:
        l22 += 1
    if l > 1:
        nxt = ServingAtSt1(i, l - 1, l12, l22, s.phase2)
    else:
        nxt = SetupAtSt1(1 - i, l12, l22, s.phase2)
    out.append((nxt, params.mu[i][0]))
    return out


# --- grid encoding -----------------------------------------------------------
# station-1 part x: 0, 1 = setup for product 1, 2; 2 + i*n1 + (l-1) = serving i with l queued
# station-2 part y: phase2 * m^2 + l12 * m + l22 with m = n2 + 1; g = x * 4m^2 + y


def grid_valid_mask(n1: int, n2: int) -> np.ndarray:
    m = n2 + 1
    ph, a, b = np.unravel_index(np.arange(4 * m * m), (4, m, m))
    y_ok = ~(((ph == Phase.U1) & (a == 0)) | ((ph == Phase.U2) & (b == 0)))
    return np.tile(y_ok, 2 + 2 * n1)


@_accel.njit
def _ss2_kernel(n1, n2, lam, mu1, ms1, mu2, ms2, q1, q2):
    m = n2 + 1
    mm = m * m
    ny = 4 * mm
    nx = 2 + 2 * n1
    size = ny * (2 * n1 * 3 + 2 * (n1 + 2))
    src = np.empty(size, np.int64)
    dst = np.empty(size, np.int64)
    val = np.empty(size, np.float64)
    k = 0
    for x in range(nx):
        for ph in range(4):
            for a in range(m):
                for b in range(m):
                    if (ph == 2 and a == 0) or (ph == 3 and b == 0):
                        continue
                    y = ph * mm + a * m + b
                    g = x * ny + y
                    # station 2
                    if ph == 0:
                        t = (2 * mm + a * m + b) if a > 0 else (mm + a * m + b)
                        r = ms2[0]
                    elif ph == 1:
                        t = (3 * mm + a * m + b) if b > 0 else (a * m + b)
                        r = ms2[1]
                    elif ph == 2:
                        t = (2 * mm + (a - 1) * m + b) if a > 1 else (mm + b)
                        r = mu2[0]
                    else:
                        t = (3 * mm + a * m + b - 1) if b > 1 else (a * m)
                        r = mu2[1]
                    src[k] = g
                    dst[k] = x * ny + t
                    val[k] = r
                    k += 1
                    # station 1
                    if x < 2:
                        i = x
                        q = q1 if i == 0 else q2
                        if q[0] > 0:
                            src[k] = g
                            dst[k] = (1 - i) * ny + y
                            val[k] = q[0] * ms1[i]
                            k += 1
                        for l in range(1, n1 + 1):
                            if q[l] > 0:
                                src[k] = g
                                dst[k] = (2 + i * n1 + l - 1) * ny + y
                                val[k] = q[l] * ms1[i]
                                k += 1
                    else:
                        i = (x - 2) // n1
                        l = (x - 2) % n1 + 1
                        if l < n1:
                            src[k] = g
                            dst[k] = g + ny
                            val[k] = lam[i]
                            k += 1
                        y2 = y
                        if i == 0 and a < n2:
                            y2 = y + m
                        elif i == 1 and b < n2:
                            y2 = y + 1
                        x2 = x - 1 if l > 1 else 1 - i
                        src[k] = g
                        dst[k] = x2 * ny + y2
                        val[k] = mu1[i]
                        k += 1
    return src[:k], dst[:k], val[:k]


def _ss2_numpy(n1, n2, lam, mu1, ms1, mu2, ms2, q1, q2):
    m = n2 + 1
    mm = m * m
    ny = 4 * mm
    g = np.flatnonzero(grid_valid_mask(n1, n2))
    x, y = np.divmod(g, ny)
    ph, a, b = np.unravel_index(y, (4, m, m))
    src, dst, val = [], [], []

    def emit(mask, target, rate):
        src.append(g[mask])
        dst.append(target[mask])
        val.append(rate[mask] if isinstance(rate, np.ndarray) else np.full(mask.sum(), rate))

    base = a * m + b
    xo = x * ny
    emit((ph == 0) & (a > 0), xo + 2 * mm + base, ms2[0])
    emit((ph == 0) & (a == 0), xo + mm + base, ms2[0])
    emit((ph == 1) & (b > 0), xo + 3 * mm + base, ms2[1])
    emit((ph == 1) & (b == 0), xo + base, ms2[1])
    emit((ph == 2) & (a > 1), xo + 2 * mm + base - m, mu2[0])
    emit((ph == 2) & (a == 1), xo + mm + b, mu2[0])
    emit((ph == 3) & (b > 1), xo + 3 * mm + base - 1, mu2[1])
    emit((ph == 3) & (b == 1), xo + a * m, mu2[1])

    for i, q in enumerate((q1, q2)):
        setup = x == i
        if q[0] > 0:
            emit(setup, (1 - i) * ny + y, q[0] * ms1[i])
        for l in range(1, n1 + 1):
            if q[l] > 0:
                emit(setup, (2 + i * n1 + l - 1) * ny + y, q[l] * ms1[i])

    serving = x >= 2
    i = np.where(serving, (x - 2) // n1, 0)
    l = np.where(serving, (x - 2) % n1 + 1, 0)
    lam_arr = np.asarray(lam)[i]
    emit(serving & (l < n1), g + ny, lam_arr)
    y2 = y.copy()
    bump1 = serving & (i == 0) & (a < n2)
    bump2 = serving & (i == 1) & (b < n2)
    y2[bump1] += m
    y2[bump2] += 1
    x2 = np.where(l > 1, x - 1, 1 - i)
    emit(serving, x2 * ny + y2, np.asarray(mu1)[i])
    return np.concatenate(src), np.concatenate(dst), np.concatenate(val)


def ss2_generator(params: ModelParams, pmf, n1: int, n2: int):
    """Assemble the truncated SS(2) generator.

    Returns ``(states, gen)``; ``states`` is an ``(n, 4)`` int array with
    columns ``(x, phase2, l12, l22)`` in canonical order, ``x`` as in the grid
    encoding above.
    """
    m = n2 + 1
    ny = 4 * m * m
    n_grid = (2 + 2 * n1) * ny
    if n_grid > params.solver.max_states:
        raise StateSpaceOverflow(f"{n_grid} grid states exceed max_states")
    q1, q2 = (fold_pmf(np.asarray(p), n1) for p in pmf)
    lam = np.array(params.lam)
    mu1 = np.array([params.mu[0][0], params.mu[1][0]])
    ms1 = np.array([params.mu_setup[0][0], params.mu_setup[1][0]])
    mu2 = np.array([params.mu[0][1], params.mu[1][1]])
    ms2 = np.array([params.mu_setup[0][1], params.mu_setup[1][1]])
    kernel = _ss2_kernel if _accel.use_numba() else _ss2_numpy
    src, dst, val = kernel(n1, n2, lam, mu1, ms1, mu2, ms2, q1, q2)
    valid = grid_valid_mask(n1, n2)
    idx = np.flatnonzero(valid)
    lookup = np.full(n_grid, -1, np.int64)
    lookup[idx] = np.arange(idx.size)
    x, y = np.divmod(idx, ny)
    ph, a, b = np.unravel_index(y, (4, m, m))
    states = np.stack([x, ph, a, b], axis=1)
    gen = GeneratorMatrix.from_coo(lookup[src], lookup[dst], val, idx.size)
    return states, gen


def decode_x(x: int, n1: int) -> tuple[int, int, int]:
    """``x`` -> ``(tag, product, l_i1)``; tag 0 is setup, 1 is serving."""
    if x < 2:
        return 0, x, 0
    i, r = divmod(x - 2, n1)
    return 1, i, r + 1


def state_from_row(row, n1: int) -> Ss2State:
    x, ph, a, b = (int(v) for v in row)
    tag, i, l = decode_x(x, n1)
    if tag == 0:
        return SetupAtSt1(i, a, b, Phase(ph))
    return ServingAtSt1(i, l, a, b, Phase(ph))


@dataclass(frozen=True)
class Ss2Result:
    states: np.ndarray
    pi: StationaryDistribution
    th2: tuple[float, float]
    l2: tuple[float, float]
    w2: tuple[float, float]
    w1: tuple[float, float]
    w_system: tuple[float, float]
    caps_used: tuple[int, int]
    pmf_cap_used: int
    boundary_loss: tuple[float, float]  # dropped-flow rates at the st1 / st2 caps

    def to_json(self) -> dict:
        return {
            "th2": list(self.th2),
            "l2": list(self.l2),
            "w2": list(self.w2),
            "w_system": list(self.w_system),
            "residual": self.pi.residual,
            "caps_used": list(self.caps_used),
            "pmf_cap_used": self.pmf_cap_used,
        }


def _measures(states, pi, params: ModelParams, n1: int, n2: int):
    x, ph, a, b = states.T
    th2 = (
        float(params.mu[0][1] * pi[ph == Phase.U1].sum()),
        float(params.mu[1][1] * pi[ph == Phase.U2].sum()),
    )
    l2 = (float(a @ pi), float(b @ pi))
    w2 = (l2[0] / th2[0], l2[1] / th2[1])
    # flow lost to truncation: arrivals at a full served station-1 queue, and
    # station-1 departures into a full station-2 queue
    full1 = 0.0
    for i in range(2):
        full1 += params.lam[i] * pi[x == 2 + i * n1 + n1 - 1].sum()
    serving = x >= 2
    i = np.where(serving, (x - 2) // n1, -1)
    full2 = params.mu[0][0] * pi[(i == 0) & (a == n2)].sum() + params.mu[1][0] * pi[
        (i == 1) & (b == n2)
    ].sum()
    return th2, l2, w2, (float(full1), float(full2))


def solve_ss2_at(params: ModelParams, iv: IntervisitModel, n1: int, n2: int, start=None):
    states, gen = ss2_generator(params, iv.pmf, n1, n2)
    dist = stationary_distribution(gen, params.solver, start=start)
    th2, l2, w2, loss = _measures(states, dist.pi, params, n1, n2)
    return states, dist, th2, l2, w2, loss


def solve_ss2(
    params: ModelParams,
    ss1: Ss1Result | None = None,
    iv: IntervisitModel | None = None,
) -> Ss2Result:
    """Solve SS(2) and combine with station 1 into system sojourn times.

    With ``auto_grow`` the station-1 and station-2 caps are doubled (each only
    while its own boundary is dropping flow) until both products' station-2
    throughput is within ``solver.throughput_tol`` of the arrival rate.
    """
    require_valid(params)
    ss1 = ss1 or solve_ss1(params)
    iv = iv or build_intervisit_model(params)
    trunc: TruncationConfig = params.truncation
    tol = params.solver.throughput_tol
    n1, n2 = trunc.queue_cap_ss2_st1, trunc.queue_cap_ss2_st2
    while True:
        states, dist, th2, l2, w2, loss = solve_ss2_at(params, iv, n1, n2)
        ok = all(abs(th2[i] - params.lam[i]) / params.lam[i] < tol for i in range(2))
        log.info("ss2 caps (%d, %d): th2=%s loss=%s", n1, n2, th2, loss)
        if ok or not trunc.auto_grow:
            break
        grow1 = loss[0] > 0.1 * tol * min(params.lam)
        grow2 = loss[1] > 0.1 * tol * min(params.lam)
        if not (grow1 or grow2):
            grow1 = grow2 = True
        new1 = 2 * n1 if grow1 else n1
        new2 = 2 * n2 if grow2 else n2
        if max(new1, new2) > trunc.max_cap:
            raise TruncationInadequate(
                f"station 2: throughput {th2} vs lambda {params.lam} at caps ({n1}, {n2})"
            )
        n1, n2 = new1, new2
    w1 = ss1.w
    return Ss2Result(
        states=states,
        pi=dist,
        th2=th2,
        l2=l2,
        w2=w2,
        w1=w1,
        w_system=(w1[0] + w2[0], w1[1] + w2[1]),
        caps_used=(n1, n2),
        pmf_cap_used=iv.pmf_cap,
        boundary_loss=loss,
    )
