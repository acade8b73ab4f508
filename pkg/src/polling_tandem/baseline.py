"""Simple decomposition: each station as an isolated polling queue.

Station 2 is fed by independent Poisson streams at the external arrival
rates, so it ignores how station 1 shapes its input. This is the comparator
the coupled model is meant to beat.
"""
from __future__ import annotations

from .model import ModelParams, require_valid
from .report import PerformanceReport
from .ss1 import solve_ss1


def solve_simple_decomposition(params: ModelParams) -> PerformanceReport:
    """Solve both stations independently with the single-station chain.

    Examples
    --------
    >>> from polling_tandem.model import symmetric_params
    >>> r = solve_simple_decomposition(symmetric_params(1.0, 4.0, 1.0))
    >>> round(r.w[0][0], 2), round(r.w[0][1], 2)
    (2.5, 2.5)
    """
    require_valid(params)
    st = [solve_ss1(params, station=j) for j in range(2)]
    return PerformanceReport(
        method="baseline",
        th=tuple(tuple(st[j].th[i] for j in range(2)) for i in range(2)),
        l=tuple(tuple(st[j].l[i] for j in range(2)) for i in range(2)),
        meta={
            "caps_used": [s.caps_used for s in st],
            "residual": max(s.pi.residual for s in st),
        },
    )
