"""Intervisit-period model for station 1.

The number of products found in queue ``i`` when its setup completes is the
number of Poisson arrivals during the preceding intervisit period. That
period is approximated by a Gamma distribution matched on its first two
moments, which makes the count negative binomial.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .model import ModelParams, require_valid

TAIL_TOL = 1e-8


class PmfCapTooSmall(ValueError):
    def __init__(self, cap: int, tail: float):
        self.cap = cap
        self.tail = tail
        super().__init__(f"tail mass {tail:.3g} beyond support 0..{cap} is not below {TAIL_TOL}")


@dataclass(frozen=True)
class CycleMoments:
    e_setup_sum: float
    e_cycle: float
    e_visit: tuple[float, float]
    e_intervisit: tuple[float, float]


def intervisit_moments(params: ModelParams, station: int = 0) -> CycleMoments:
    ti = require_valid(params)
    rho = [ti.rho[i][station] for i in range(2)]
    e_h = sum(1.0 / params.mu_setup[i][station] for i in range(2))
    e_c = e_h / (1.0 - ti.rho_station[station])
    e_v = tuple(r * e_c for r in rho)
    e_i = tuple(e_c - v for v in e_v)
    return CycleMoments(e_h, e_c, e_v, e_i)


def intervisit_variance(params: ModelParams, product: int, swap_setup_labels: bool = False) -> float:
    """Variance of the station-1 intervisit period of queue ``product``.

    ``service_moment`` selects how the service-time term is read: ``"second"``
    uses the exponential second moment ``2/mu^2``, ``"square"`` uses ``1/mu^2``.
    The cycle term is the mean cycle length.

    ``swap_setup_labels`` exchanges which product's setup variance enters
    each slot of the formula. With it set, the result agrees with the exact
    single-station chain also when the two setup rates differ; the default
    keeps the published labelling. Both agree when setups are symmetric.
    """
    ti = require_valid(params)
    i, o = product, 1 - product
    lam = params.lam
    rho = [ti.rho[k][0] for k in range(2)]
    var_s = [1.0 / params.mu_setup[k][0] ** 2 for k in range(2)]
    if swap_setup_labels:
        var_s.reverse()
    factor = 2.0 if params.service_moment == "second" else 1.0
    t2 = [factor / params.mu[k][0] ** 2 for k in range(2)]
    c = intervisit_moments(params, 0).e_cycle
    num = rho[o] ** 2 * (lam[i] * t2[i] * c + var_s[o]) + (1.0 - rho[i]) ** 2 * (
        lam[o] * t2[o] * c + var_s[i]
    )
    r = rho[0] + rho[1]
    den = (1.0 - r) * (1.0 - r + 2.0 * rho[0] * rho[1])
    if den <= 0:
        raise ValueError("station 1 must be stable")
    return var_s[o] + num / den


def gamma_fit(mean: float, variance: float) -> tuple[float, float]:
    """Method-of-moments Gamma: returns ``(shape, scale)``."""
    if not (mean > 0 and variance > 0):
        raise ValueError(f"mean and variance must be positive, got {mean}, {variance}")
    return mean * mean / variance, variance / mean


def arrival_count_pmf_raw(alpha: float, beta: float, lam: float, cap: int) -> np.ndarray:
    """Un-normalized Poisson-Gamma mixture masses for counts ``0..cap``."""
    if not (alpha > 0 and beta > 0 and lam > 0):
        raise ValueError("alpha, beta and lam must be positive")
    x = beta * lam
    log_q = math.log(x) - math.log1p(x)
    l = np.arange(cap, dtype=np.float64)
    # log p(l+1) - log p(l) = log((alpha + l)/(l + 1)) + log(x / (1 + x))
    steps = np.log(alpha + l) - np.log1p(l) + log_q
    logp = np.concatenate(([-alpha * math.log1p(x)], -alpha * math.log1p(x) + np.cumsum(steps)))
    return np.exp(logp)


def arrival_count_pmf(alpha: float, beta: float, lam: float, cap: int) -> np.ndarray:
    """Probability of ``l`` Poisson(``lam``) arrivals in a Gamma(``alpha``, ``beta``) window.

    Truncated to ``0..cap`` and renormalized. Raises :class:`PmfCapTooSmall`
    when the mass beyond ``cap`` is not below ``TAIL_TOL``.
    """
    p = arrival_count_pmf_raw(alpha, beta, lam, cap)
    tail = max(0.0, 1.0 - p.sum())
    if tail >= TAIL_TOL:
        raise PmfCapTooSmall(cap, tail)
    return p / p.sum()


def arrival_count_pmf_quad(alpha: float, beta: float, lam: float, l: int) -> float:
    """Same mass point by numerical integration over the Gamma density."""
    gamma = stats.gamma(alpha, scale=beta)
    pois = stats.poisson

    def integrand(t):
        return pois.pmf(l, lam * t) * gamma.pdf(t)

    # split at the mode of the integrand so quad sees the peak
    peak = max((alpha - 1 + l) / (lam + 1.0 / beta), 0.0)
    pieces = [0.0, peak, np.inf] if peak > 0 else [0.0, np.inf]
    total = 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=400)
        total += val
    return total


@dataclass(frozen=True)
class IntervisitModel:
    e_setup_sum: float
    e_cycle: float
    e_visit: tuple[float, float]
    e_intervisit: tuple[float, float]
    var_intervisit: tuple[float, float]
    gamma: tuple[tuple[float, float], tuple[float, float]]
    pmf: tuple[np.ndarray, np.ndarray]

    @property
    def pmf_cap(self) -> int:
        return max(len(p) for p in self.pmf) - 1

    def to_json(self) -> list[dict]:
        return [
            {
                "product": i + 1,
                "e_intervisit": self.e_intervisit[i],
                "var_intervisit": self.var_intervisit[i],
                "alpha": self.gamma[i][0],
                "beta": self.gamma[i][1],
                "pmf": self.pmf[i].tolist(),
            }
            for i in range(2)
        ]


def build_intervisit_model(params: ModelParams, pmf_cap: int | None = None) -> IntervisitModel:
    """Moments, Gamma fits and setup-completion PMFs for both station-1 queues.

    Each product's support starts at ``pmf_cap`` and doubles (when
    ``auto_grow`` is on) until the truncated tail is below ``TAIL_TOL``.
    """
    cm = intervisit_moments(params, 0)
    trunc = params.truncation
    cap0 = trunc.pmf_cap if pmf_cap is None else pmf_cap
    var, fits, pmfs = [], [], []
    for i in range(2):
        v = intervisit_variance(params, i)
        a, b = gamma_fit(cm.e_intervisit[i], v)
        cap = cap0
        while True:
            try:
                p = arrival_count_pmf(a, b, params.lam[i], cap)
                break
            except PmfCapTooSmall:
                if not trunc.auto_grow:
                    raise
                cap *= 2
                if cap > 64 * trunc.max_cap:
                    raise
        var.append(v)
        fits.append((a, b))
        pmfs.append(p)
    return IntervisitModel(
        cm.e_setup_sum, cm.e_cycle, cm.e_visit, cm.e_intervisit, tuple(var), tuple(fits), tuple(pmfs)
    )
