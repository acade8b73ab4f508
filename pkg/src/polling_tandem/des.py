"""Discrete-event simulation of the full tandem polling line.

No approximation: both stations are simulated jointly with FIFO queues,
exhaustive service and setups that are always incurred. Each stochastic
source has its own random stream so runs are reproducible and comparable
across configurations.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _accel
from .model import ModelParams, require_valid
from .report import PerformanceReport, error_delta  # noqa: F401  (re-exported)

# stream ids: arrivals 0-1, service 2-5 (2 + 2*i + j), setups 6-9 (6 + 2*i + j)
N_STREAMS = 10
GROUPS = ((0, 2), (2, 6), (6, 10))
STATUS_OK = -1


@dataclass(frozen=True)
class SimConfig:
    warmup: float = 2_000.0
    horizon: float = 50_000.0
    replications: int = 10
    seed: int = 12345

    def __post_init__(self):
        if not (self.warmup >= 0 and self.horizon > 0 and self.replications >= 2):
            raise ValueError("need warmup >= 0, horizon > 0 and replications >= 2")


@_accel.njit
def _push(buf, head, tail, q, value):
    # append to the FIFO of queue q, compacting or growing the backing store
    cap = buf.shape[1]
    if tail[q] == cap:
        if head[q] > 0:
            n = tail[q] - head[q]
            for k in range(n):
                buf[q, k] = buf[q, head[q] + k]
            head[q] = 0
            tail[q] = n
        else:
            bigger = np.empty((buf.shape[0], 2 * cap))
            bigger[:, :cap] = buf
            buf = bigger
    buf[q, tail[q]] = value
    tail[q] += 1
    return buf


@_accel.njit
def _replicate(lam, mu, ms, warmup, horizon, arr, svc, stp):
    """One replication. Rates come as (2,) and (2, 2) arrays, variates as
    unit-rate exponentials, one row per stream.

    Returns (status, w_sum, w_cnt, area, busy, violations) where status is
    STATUS_OK or the id of a stream that ran dry.
    """
    end = warmup + horizon
    w_sum = np.zeros(4)  # index 2*i + j
    w_cnt = np.zeros(4)
    area = np.zeros(4)
    busy = np.zeros(4)
    violations = 0
    n = np.zeros(4, np.int64)
    buf = np.empty((4, 1024))
    head = np.zeros(4, np.int64)
    tail = np.zeros(4, np.int64)
    used = np.zeros(10, np.int64)

    t_arr = np.empty(2)
    for i in range(2):
        t_arr[i] = arr[i, 0] / lam[i]
        used[i] = 1
    # server j: serving flag, current product, next event time
    serving = np.zeros(2, np.int64)
    cur = np.zeros(2, np.int64)
    t_srv = np.empty(2)
    for j in range(2):
        t_srv[j] = stp[j, 0] / ms[0, j]  # stream 6 + 2*0 + j
        used[6 + j] = 1

    t_prev = 0.0
    while True:
        # priority: service completions, then setup completions, then arrivals
        best = -1
        tbest = math.inf
        for j in range(2):
            if serving[j] == 1 and t_srv[j] < tbest:
                tbest = t_srv[j]
                best = j
        for j in range(2):
            if serving[j] == 0 and t_srv[j] < tbest:
                tbest = t_srv[j]
                best = 2 + j
        for i in range(2):
            if t_arr[i] < tbest:
                tbest = t_arr[i]
                best = 4 + i
        t = tbest
        lo = max(t_prev, warmup)
        hi = min(t, end)
        if hi > lo:
            dt = hi - lo
            for q in range(4):
                area[q] += n[q] * dt
            for j in range(2):
                if serving[j] == 1:
                    busy[2 * cur[j] + j] += dt
        if t >= end:
            break
        t_prev = t

        if best >= 4:
            i = best - 4
            q = 2 * i
            buf = _push(buf, head, tail, q, t)
            n[q] += 1
            s = i
            if used[s] >= arr.shape[1]:
                return s, w_sum, w_cnt, area, busy, violations
            t_arr[i] = t + arr[s, used[s]] / lam[i]
            used[s] += 1
            continue

        j = best % 2
        i = cur[j]
        q = 2 * i + j
        if best < 2:
            # service completion at station j
            a = buf[q, head[q]]
            head[q] += 1
            n[q] -= 1
            if t >= warmup:
                w_sum[q] += t - a
                w_cnt[q] += 1
            if j == 0:
                q2 = 2 * i + 1
                buf = _push(buf, head, tail, q2, t)
                n[q2] += 1
        # after a setup or a service: keep serving i if work is waiting
        if n[q] > 0:
            s = 2 + q
            if used[s] >= svc.shape[1]:
                return s, w_sum, w_cnt, area, busy, violations
            serving[j] = 1
            t_srv[j] = t + svc[q, used[s]] / mu[i, j]
            used[s] += 1
        else:
            if n[q] != 0:
                violations += 1
            nxt = 1 - i
            s = 6 + 2 * nxt + j
            if used[s] >= stp.shape[1]:
                return s, w_sum, w_cnt, area, busy, violations
            cur[j] = nxt
            serving[j] = 0
            t_srv[j] = t + stp[2 * nxt + j, used[s]] / ms[nxt, j]
            used[s] += 1
    return STATUS_OK, w_sum, w_cnt, area, busy, violations


def _stream_sizes(params: ModelParams, total: float) -> np.ndarray:
    rates = np.zeros(N_STREAMS)
    rates[0:2] = params.lam
    for i in range(2):
        for j in range(2):
            rates[2 + 2 * i + j] = params.lam[i]
            rates[6 + 2 * i + j] = params.mu_setup[i][j]
    mean = rates * total
    sizes = (mean + 6.0 * np.sqrt(mean) + 100).astype(np.int64)
    # streams sharing a 2-D variate block get a common length
    for lo, hi in GROUPS:
        sizes[lo:hi] = sizes[lo:hi].max()
    return sizes


def _variates(seed: int, rep: int, sizes) -> list[np.ndarray]:
    return [
        np.random.default_rng(np.random.SeedSequence([seed, s, rep])).standard_exponential(sizes[s])
        for s in range(N_STREAMS)
    ]


@dataclass(frozen=True)
class ReplicationStats:
    w: np.ndarray  # [i, j] mean sojourn
    th: np.ndarray
    l: np.ndarray
    busy: np.ndarray
    departures: np.ndarray
    violations: int


def run_replication(params: ModelParams, cfg: SimConfig, rep: int) -> ReplicationStats:
    lam = np.array(params.lam)
    mu = np.array(params.mu)
    ms = np.array(params.mu_setup)
    sizes = _stream_sizes(params, cfg.warmup + cfg.horizon)
    kernel = _replicate if _accel.use_numba() else _replicate.py_func
    while True:
        v = _variates(cfg.seed, rep, sizes)
        arr, svc, stp = (np.stack(v[lo:hi]) for lo, hi in GROUPS)
        status, w_sum, w_cnt, area, busy, violations = kernel(
            lam, mu, ms, float(cfg.warmup), float(cfg.horizon), arr, svc, stp
        )
        if status == STATUS_OK:
            break
        # a stream ran dry: regenerate it longer (prefix is unchanged) and rerun
        lo, hi = next(g for g in GROUPS if g[0] <= status < g[1])
        sizes[lo:hi] *= 2
    w_cnt = w_cnt.reshape(2, 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = w_sum.reshape(2, 2) / w_cnt
    return ReplicationStats(
        w=w,
        th=w_cnt / cfg.horizon,
        l=area.reshape(2, 2) / cfg.horizon,
        busy=busy.reshape(2, 2) / cfg.horizon,
        departures=w_cnt,
        violations=int(violations),
    )


def _half_width(samples: np.ndarray, level: float = 0.95) -> np.ndarray:
    n = samples.shape[0]
    t = stats.t.ppf(0.5 + level / 2, n - 1)
    return t * samples.std(axis=0, ddof=1) / math.sqrt(n)


@dataclass(frozen=True)
class SimResult:
    w_mean: np.ndarray  # [i, j]
    w_ci_halfwidth: np.ndarray
    th: np.ndarray
    l_mean: np.ndarray
    w_system: np.ndarray  # [i]
    w_system_ci_halfwidth: np.ndarray
    busy_fraction: np.ndarray
    replications: list[ReplicationStats] = field(repr=False)

    def little_gaps(self) -> np.ndarray:
        """Per-replication ``|L - TH*W| / L`` as an array ``[rep, i, j]``."""
        return np.array([np.abs(r.l - r.th * r.w) / r.l for r in self.replications])

    def to_report(self) -> PerformanceReport:
        return PerformanceReport(
            method="simulation",
            th=self.th,
            l=self.l_mean,
            w=self.w_mean,
            meta={"w_ci_halfwidth": self.w_ci_halfwidth.tolist()},
        )

    def to_json(self) -> dict:
        return {
            "w_mean": self.w_mean.tolist(),
            "w_ci_halfwidth": self.w_ci_halfwidth.tolist(),
            "th": self.th.tolist(),
            "l_mean": self.l_mean.tolist(),
            "w_system": self.w_system.tolist(),
            "w_system_ci_halfwidth": self.w_system_ci_halfwidth.tolist(),
            "replications": [
                {"w": r.w.tolist(), "th": r.th.tolist(), "l": r.l.tolist()} for r in self.replications
            ],
        }


class ExhaustivenessViolation(AssertionError):
    pass


def thread_count() -> int:
    """Worker threads allowed by ``POLLING_TANDEM_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("POLLING_TANDEM_THREADS", "1")))
    except ValueError:
        return 1


def simulate(params: ModelParams, cfg: SimConfig | None = None, threads: int | None = None) -> SimResult:
    """Run ``cfg.replications`` independent replications and pool them.

    Replications may run on a thread pool (``POLLING_TANDEM_THREADS`` unless
    ``threads`` is given); they are reduced in replication order so the
    result does not depend on scheduling.

    Examples
    --------
    >>> from polling_tandem.model import symmetric_params
    >>> r = simulate(symmetric_params(1.0, 4.0, 1.0), SimConfig(horizon=5000.0, replications=3))
    >>> bool(abs(r.w_mean[0, 0] - 2.5) < 0.3)
    True
    """
    require_valid(params)
    cfg = cfg or SimConfig()
    threads = thread_count() if threads is None else max(1, threads)
    reps = range(cfg.replications)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            runs = list(pool.map(lambda r: run_replication(params, cfg, r), reps))
    else:
        runs = [run_replication(params, cfg, r) for r in reps]
    bad = sum(r.violations for r in runs)
    if bad:
        raise ExhaustivenessViolation(f"server left a non-empty queue {bad} times")
    w = np.stack([r.w for r in runs])
    ws = w.sum(axis=2)
    return SimResult(
        w_mean=w.mean(axis=0),
        w_ci_halfwidth=_half_width(w),
        th=np.mean([r.th for r in runs], axis=0),
        l_mean=np.mean([r.l for r in runs], axis=0),
        w_system=ws.mean(axis=0),
        w_system_ci_halfwidth=_half_width(ws),
        busy_fraction=np.mean([r.busy for r in runs], axis=0),
        replications=runs,
    )
