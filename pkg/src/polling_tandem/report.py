"""Common result shape shared by the coupled model, the baseline and the simulator."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

Grid = tuple[tuple[float, float], tuple[float, float]]


def _grid(x) -> Grid:
    return tuple(tuple(float(v) for v in row) for row in x)


def error_delta(w_sim, w_model):
    """Signed percentage error ``100 (sim - model) / sim``.

    >>> round(error_delta(2.56, 2.57), 2)
    -0.39
    """
    w_sim = np.asarray(w_sim, dtype=float)
    if np.any(w_sim == 0):
        raise ValueError("simulation value must be non-zero")
    out = 100.0 * (w_sim - np.asarray(w_model, dtype=float)) / w_sim
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PerformanceReport:
    """Per-product, per-station throughput, level and sojourn time.

    Arrays are indexed ``[i][j]`` (product, station). For analytic methods
    ``w`` is left out and derived as ``l / th``; the simulator passes its
    measured sojourn times instead.
    """

    method: str  # "proposed", "baseline" or "simulation"
    th: Grid
    l: Grid
    w: Grid | None = None
    delta_w: Grid | None = None  # signed % error of w against a simulation
    delta_system: tuple[float, float] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "th", _grid(self.th))
        object.__setattr__(self, "l", _grid(self.l))
        if self.w is None:
            w = tuple(tuple(self.l[i][j] / self.th[i][j] for j in range(2)) for i in range(2))
        else:
            w = _grid(self.w)
        object.__setattr__(self, "w", w)

    @property
    def w_system(self) -> tuple[float, float]:
        return tuple(self.w[i][0] + self.w[i][1] for i in range(2))

    def against(self, reference: PerformanceReport) -> PerformanceReport:
        """Copy with error columns filled in from a simulation reference."""
        dw = tuple(
            tuple(error_delta(reference.w[i][j], self.w[i][j]) for j in range(2)) for i in range(2)
        )
        ds = tuple(error_delta(reference.w_system[i], self.w_system[i]) for i in range(2))
        return replace(self, delta_w=dw, delta_system=ds)

    def to_json(self) -> dict:
        out = {
            "method": self.method,
            "th": [list(r) for r in self.th],
            "l": [list(r) for r in self.l],
            "w": [list(r) for r in self.w],
            "w_system": list(self.w_system),
        }
        if self.delta_w is not None:
            out["delta_w"] = [list(r) for r in self.delta_w]
            out["delta_system"] = list(self.delta_system)
        out.update(self.meta)
        return out
