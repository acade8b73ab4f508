"""Input parameters for the two-product, two-station tandem polling system.

Indices are 0-based in code: ``lam[i]`` is the arrival rate of product ``i``,
``mu[i][j]`` and ``mu_setup[i][j]`` are the service and setup rates of product
``i`` at station ``j``. Parameter files use 1-based wording in their docs but
plain JSON arrays, so the layout is the same.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

STABILITY_MARGIN = 1e-9
HIGH_LOAD_WARNING = 0.9


class InvalidParameters(ValueError):
    """Raised when a solve is requested for parameters that fail validation."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(v.message for v in violations))


@dataclass(frozen=True)
class TruncationConfig:
    queue_cap_ss1: int = 64
    queue_cap_ss2_st1: int = 48
    queue_cap_ss2_st2: int = 40
    pmf_cap: int = 64
    auto_grow: bool = True
    # auto_grow stops doubling once any cap would exceed this
    max_cap: int = 512

    def __post_init__(self):
        for name in ("queue_cap_ss1", "queue_cap_ss2_st1", "queue_cap_ss2_st2", "pmf_cap"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2, got {getattr(self, name)}")

    def doubled(self) -> TruncationConfig:
        return replace(
            self,
            queue_cap_ss1=2 * self.queue_cap_ss1,
            queue_cap_ss2_st1=2 * self.queue_cap_ss2_st1,
            queue_cap_ss2_st2=2 * self.queue_cap_ss2_st2,
            pmf_cap=2 * self.pmf_cap,
        )


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the stationary-distribution solver.

    ``method`` is ``"auto"``, ``"direct"``, ``"krylov"`` or ``"power"``. In auto
    mode chains with at most ``direct_max_states`` states are solved directly,
    larger ones by ILU-preconditioned GMRES.
    """

    residual_tol: float = 1e-10
    method: str = "auto"
    direct_max_states: int = 50_000
    ilu_drop_tol: float = 1e-4
    ilu_fill_factor: float = 10.0
    krylov_rtol: float = 1e-13
    krylov_max_restarts: int = 50
    power_tol: float = 1e-12
    max_iter: int = 2_000_000
    uniformization: float = 1.01
    throughput_tol: float = 1e-3
    max_states: int = 20_000_000

    def __post_init__(self):
        if self.method not in ("auto", "direct", "krylov", "power"):
            raise ValueError(f"unknown solver method {self.method!r}")


@dataclass(frozen=True)
class TrafficIntensities:
    rho: tuple[tuple[float, float], tuple[float, float]]
    rho_station: tuple[float, float]


@dataclass(frozen=True)
class ModelParams:
    lam: tuple[float, float]
    mu: tuple[tuple[float, float], tuple[float, float]]
    mu_setup: tuple[tuple[float, float], tuple[float, float]]
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    # "second": E[T^2] = 2/mu^2 (exponential second moment); "square": 1/mu^2
    service_moment: str = "second"

    def __post_init__(self):
        # normalize nested sequences to tuples so instances hash and compare by value
        object.__setattr__(self, "lam", tuple(float(x) for x in self.lam))
        object.__setattr__(self, "mu", tuple(tuple(float(x) for x in row) for row in self.mu))
        object.__setattr__(
            self, "mu_setup", tuple(tuple(float(x) for x in row) for row in self.mu_setup)
        )
        if len(self.lam) != 2 or len(self.mu) != 2 or len(self.mu_setup) != 2:
            raise ValueError("exactly two products are supported")
        if any(len(row) != 2 for row in (*self.mu, *self.mu_setup)):
            raise ValueError("exactly two stations are supported")
        if self.service_moment not in ("second", "square"):
            raise ValueError(f"unknown service_moment {self.service_moment!r}")

    def station(self, j: int) -> tuple[tuple[float, float], tuple[float, float]]:
        """Service and setup rates of both products at station ``j``."""
        return (self.mu[0][j], self.mu[1][j]), (self.mu_setup[0][j], self.mu_setup[1][j])

    def with_caps(self, truncation: TruncationConfig) -> ModelParams:
        return replace(self, truncation=truncation)


@dataclass(frozen=True)
class Violation:
    kind: str  # "rate" or "stability"
    message: str
    station: int | None = None


@dataclass(frozen=True)
class ValidationOutcome:
    ok: bool
    intensities: TrafficIntensities | None
    violations: tuple[Violation, ...] = ()


def _intensities(params: ModelParams) -> TrafficIntensities:
    rho = tuple(
        tuple(params.lam[i] / params.mu[i][j] for j in range(2)) for i in range(2)
    )
    rho_station = tuple(rho[0][j] + rho[1][j] for j in range(2))
    return TrafficIntensities(rho=rho, rho_station=rho_station)


def validate_params(params: ModelParams) -> ValidationOutcome:
    """Check positivity of every rate and per-station stability.

    Violations are returned as data; nothing is raised.
    """
    violations = []
    named = [(f"lam[{i}]", params.lam[i]) for i in range(2)]
    named += [(f"mu[{i}][{j}]", params.mu[i][j]) for i in range(2) for j in range(2)]
    named += [
        (f"mu_setup[{i}][{j}]", params.mu_setup[i][j]) for i in range(2) for j in range(2)
    ]
    for name, value in named:
        if not (math.isfinite(value) and value > 0):
            violations.append(Violation("rate", f"{name} must be positive and finite, got {value}"))
    if violations:
        return ValidationOutcome(False, None, tuple(violations))

    ti = _intensities(params)
    for j, r in enumerate(ti.rho_station):
        if r >= 1.0 - STABILITY_MARGIN:
            violations.append(
                Violation("stability", f"station {j + 1} is unstable: rho = {r:.6g} >= 1", station=j)
            )
    if violations:
        return ValidationOutcome(False, ti, tuple(violations))
    return ValidationOutcome(True, ti)


def traffic_intensities(params: ModelParams) -> TrafficIntensities:
    """Per-queue loads ``lam_i / mu_ij`` and per-station totals (setups excluded)."""
    outcome = validate_params(params)
    if not outcome.ok:
        raise InvalidParameters(list(outcome.violations))
    for j, r in enumerate(outcome.intensities.rho_station):
        if r > HIGH_LOAD_WARNING:
            warnings.warn(
                f"station {j + 1} load {r:.3f} exceeds {HIGH_LOAD_WARNING}; "
                "truncation error may be large",
                stacklevel=2,
            )
    return outcome.intensities


def require_valid(params: ModelParams) -> TrafficIntensities:
    return traffic_intensities(params)


def params_from_dict(data: dict[str, Any]) -> ModelParams:
    trunc = TruncationConfig(**data.get("truncation", {}))
    solver = SolverConfig(**data.get("solver", {}))
    return ModelParams(
        lam=data["lambda"],
        mu=data["mu"],
        mu_setup=data["mu_setup"],
        truncation=trunc,
        solver=solver,
        service_moment=data.get("service_moment", "second"),
    )


def params_to_dict(params: ModelParams) -> dict[str, Any]:
    t, s = params.truncation, params.solver
    return {
        "lambda": list(params.lam),
        "mu": [list(r) for r in params.mu],
        "mu_setup": [list(r) for r in params.mu_setup],
        "truncation": {
            "queue_cap_ss1": t.queue_cap_ss1,
            "queue_cap_ss2_st1": t.queue_cap_ss2_st1,
            "queue_cap_ss2_st2": t.queue_cap_ss2_st2,
            "pmf_cap": t.pmf_cap,
            "auto_grow": t.auto_grow,
            "max_cap": t.max_cap,
        },
        "solver": {
            "residual_tol": s.residual_tol,
            "method": s.method,
            "direct_max_states": s.direct_max_states,
            "ilu_drop_tol": s.ilu_drop_tol,
            "ilu_fill_factor": s.ilu_fill_factor,
            "krylov_rtol": s.krylov_rtol,
            "krylov_max_restarts": s.krylov_max_restarts,
            "power_tol": s.power_tol,
            "max_iter": s.max_iter,
            "uniformization": s.uniformization,
            "throughput_tol": s.throughput_tol,
            "max_states": s.max_states,
        },
        "service_moment": params.service_moment,
    }


def load_params(path: str | Path) -> ModelParams:
    with open(path) as fh:
        return params_from_dict(json.load(fh))


def symmetric_params(lam: float, mu: float, mu_setup: float, **kw) -> ModelParams:
    return ModelParams(
        lam=(lam, lam), mu=((mu, mu), (mu, mu)), mu_setup=((mu_setup,) * 2,) * 2, **kw
    )
