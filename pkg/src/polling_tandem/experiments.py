"""Experiment suites, comparison tables and error summaries.

Each suite expands to a list of parameter rows. A row is solved by the
coupled model, by the simple decomposition and by simulation, and the
results are laid out as one table line: inputs, proposed, simulation,
error %, then the baseline columns and a block label.
"""
from __future__ import annotations

import csv
import io
import logging
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baseline import solve_simple_decomposition
from .des import SimConfig, simulate, thread_count
from .model import ModelParams
from .report import PerformanceReport
from .ss1 import solve_ss1
from .ss2 import solve_ss2

log = logging.getLogger(__name__)

SETUP_RATES = (1.0, 1.5, 2.0, 5.0)
LOADS = (0.5, 0.6, 0.7)
BOTTLENECK_RATE = 2.5
# suites whose two products are interchangeable; summaries count one product
SYMMETRIC_PRODUCTS = {"symmetric", "station_asym_service", "station_asym_setup"}


@dataclass(frozen=True)
class RowSpec:
    suite: str
    block: str
    inputs: tuple[tuple[str, float], ...]
    params: ModelParams


@dataclass(frozen=True)
class ExperimentRow:
    spec: RowSpec
    proposed: PerformanceReport
    baseline: PerformanceReport | None = None
    simulation: PerformanceReport | None = None


def _params(mu, mu_setup) -> ModelParams:
    return ModelParams(lam=(1.0, 1.0), mu=mu, mu_setup=mu_setup)


def _both(a, b):
    # same pair of per-station values for both products
    return ((a, b), (a, b))


def _symmetric() -> list[RowSpec]:
    rows = []
    for ms in SETUP_RATES:
        for rho in LOADS:
            mu = 2.0 / rho
            rows.append(
                RowSpec("symmetric", f"mu_s={ms:.2f}", (("mu", mu), ("rho", rho)),
                        _params(_both(mu, mu), _both(ms, ms)))
            )
    return rows


def _station_asym_service() -> list[RowSpec]:
    rows = []
    for ms in SETUP_RATES:
        for st in (0, 1):
            for rho in LOADS:
                mu = 2.0 / rho
                pair = (BOTTLENECK_RATE, mu) if st == 0 else (mu, BOTTLENECK_RATE)
                rows.append(
                    RowSpec(
                        "station_asym_service",
                        f"mu_s={ms:.2f} station {st + 1} bottleneck",
                        (("mu", mu), ("rho", rho)),
                        _params(_both(*pair), _both(ms, ms)),
                    )
                )
    return rows


def _product_asym_service() -> list[RowSpec]:
    rows = []
    for ms in SETUP_RATES:
        for ratio in (0.4, 0.6, 0.8):
            mu2 = BOTTLENECK_RATE / ratio
            load = 1.0 / BOTTLENECK_RATE + 1.0 / mu2
            rows.append(
                RowSpec(
                    "product_asym_service",
                    f"mu_s={ms:.2f}",
                    (("mu_2", mu2), ("rho", load)),
                    _params(((BOTTLENECK_RATE,) * 2, (mu2, mu2)), _both(ms, ms)),
                )
            )
    return rows


def _station_asym_setup() -> list[RowSpec]:
    rows = []
    for s1, s2, tag in ((1.0, 5.0, "station 1 bottleneck"), (5.0, 1.0, "station 2 bottleneck")):
        for rho in (*LOADS, 0.8):
            mu = 2.0 / rho
            rows.append(
                RowSpec("station_asym_setup", tag, (("mu", mu), ("rho", rho)),
                        _params(_both(mu, mu), _both(s1, s2)))
            )
    return rows


def _product_asym_setup() -> list[RowSpec]:
    rows = []
    for mu in (BOTTLENECK_RATE, 4.0):
        for ratio in (0.4, 0.6, 0.8):
            s2 = 1.0 / ratio
            rows.append(
                RowSpec(
                    "product_asym_setup",
                    f"mu={mu:.2f}",
                    (("mu_s1", 1.0), ("mu_s2", s2)),
                    _params(_both(mu, mu), ((1.0, 1.0), (s2, s2))),
                )
            )
    return rows


SUITES: dict[str, Callable[[], list[RowSpec]]] = {
    "symmetric": _symmetric,
    "station_asym_service": _station_asym_service,
    "product_asym_service": _product_asym_service,
    "station_asym_setup": _station_asym_setup,
    "product_asym_setup": _product_asym_setup,
}


def suite_rows(suite: str, overrides: dict | None = None) -> list[RowSpec]:
    """Parameter grid of ``suite`` after applying ``overrides``.

    Recognized override keys: ``blocks`` (keep rows whose block label is in
    the list), ``truncation`` and ``solver`` (field dicts merged into every
    row's config) and ``service_moment``.
    """
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    rows = SUITES[suite]()
    ov = dict(overrides or {})
    unknown = set(ov) - {"blocks", "truncation", "solver", "service_moment"}
    if unknown:
        raise ValueError(f"unknown override keys: {sorted(unknown)}")
    if "blocks" in ov:
        keep = set(ov["blocks"])
        rows = [r for r in rows if r.block in keep]
    out = []
    for r in rows:
        p = r.params
        if "truncation" in ov:
            p = replace(p, truncation=replace(p.truncation, **ov["truncation"]))
        if "solver" in ov:
            p = replace(p, solver=replace(p.solver, **ov["solver"]))
        if "service_moment" in ov:
            p = replace(p, service_moment=ov["service_moment"])
        out.append(replace(r, params=p))
    return out


def solve_proposed(params: ModelParams) -> PerformanceReport:
    """Station 1 from the exact single-station chain, station 2 from the coupled chain."""
    ss1 = solve_ss1(params, station=0)
    ss2 = solve_ss2(params, ss1=ss1)
    return PerformanceReport(
        method="proposed",
        th=tuple((ss1.th[i], ss2.th2[i]) for i in range(2)),
        l=tuple((ss1.l[i], ss2.l2[i]) for i in range(2)),
        meta={
            "caps_used": {"ss1": ss1.caps_used, "ss2": list(ss2.caps_used)},
            "pmf_cap_used": ss2.pmf_cap_used,
            "residual": max(ss1.pi.residual, ss2.pi.residual),
        },
    )


def run_row(
    spec: RowSpec, sim_cfg: SimConfig | None = None, with_sim: bool = True, with_baseline: bool = True
) -> ExperimentRow:
    proposed = solve_proposed(spec.params)
    base = solve_simple_decomposition(spec.params) if with_baseline else None
    sim = None
    if with_sim:
        sim = simulate(spec.params, sim_cfg or SimConfig(), threads=1).to_report()
        proposed = proposed.against(sim)
        base = base.against(sim) if base is not None else None
    log.info("%s %s %s done", spec.suite, spec.block, spec.inputs)
    return ExperimentRow(spec, proposed, base, sim)


def run_specs(
    specs: Sequence[RowSpec],
    sim_cfg: SimConfig | None = None,
    with_sim: bool = True,
    with_baseline: bool = True,
    threads: int | None = None,
) -> list[ExperimentRow]:
    """Solve rows, in parallel when allowed; output keeps the input order."""
    threads = thread_count() if threads is None else max(1, threads)

    def job(s):
        return run_row(s, sim_cfg, with_sim, with_baseline)

    if threads > 1 and len(specs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(job, specs))
    return [job(s) for s in specs]


def run_experiment(
    suite: str,
    overrides: dict | None = None,
    sim_cfg: SimConfig | None = None,
    with_sim: bool = True,
    with_baseline: bool = True,
    threads: int | None = None,
) -> list[ExperimentRow]:
    """Expand ``suite`` and solve every row with all three methods.

    Examples
    --------
    Small fixed caps keep this quick; the station-1 waits come from the
    single-station chain and are unaffected.

    >>> caps = {"queue_cap_ss2_st1": 12, "queue_cap_ss2_st2": 12, "auto_grow": False}
    >>> rows = run_experiment("symmetric", {"blocks": ["mu_s=5.00"], "truncation": caps},
    ...                       with_sim=False, with_baseline=False)
    >>> [round(r.proposed.w[0][0], 2) for r in rows]
    [0.9, 1.2, 1.7]
    """
    return run_specs(suite_rows(suite, overrides), sim_cfg, with_sim, with_baseline, threads)


# ---------------------------------------------------------------- rendering

W_KEYS = ("W11", "W12", "W1", "W21", "W22", "W2")
D_KEYS = ("d_W12", "d_W1", "d_W22", "d_W2")
B_KEYS = ("base_W12", "base_W1", "base_W22", "base_W2")


def _w_cells(r: PerformanceReport | None) -> list[float | None]:
    if r is None:
        return [None] * 6
    ws = r.w_system
    return [r.w[0][0], r.w[0][1], ws[0], r.w[1][0], r.w[1][1], ws[1]]


def _fmt(x: float | None) -> str:
    return "" if x is None or not np.isfinite(x) else f"{x:.2f}"


def _fmt_input(name: str, x: float) -> str:
    if name == "rho":
        # loads print like the published tables: 0.5, 0.56
        s = f"{x:.2f}".rstrip("0")
        return s + "0" if s.endswith(".") else s
    return f"{x:.2f}"


def header(rows: Sequence[ExperimentRow]) -> list[str]:
    names = {tuple(n for n, _ in r.spec.inputs) for r in rows}
    inputs = list(names.pop()) if len(names) == 1 else ["x1", "x2"]
    return [
        *inputs,
        *W_KEYS,
        *("sim_" + k for k in W_KEYS),
        *D_KEYS,
        *B_KEYS,
        "suite",
        "block",
    ]


def row_cells(row: ExperimentRow) -> list[str]:
    p = row.proposed
    cells = [_fmt_input(n, v) for n, v in row.spec.inputs]
    cells += [_fmt(x) for x in _w_cells(p)]
    cells += [_fmt(x) for x in _w_cells(row.simulation)]
    if p.delta_w is not None:
        d = [p.delta_w[0][1], p.delta_system[0], p.delta_w[1][1], p.delta_system[1]]
    else:
        d = [None] * 4
    cells += [_fmt(x) for x in d]
    b = row.baseline
    bw = [None] * 4 if b is None else [b.w[0][1], b.w_system[0], b.w[1][1], b.w_system[1]]
    cells += [_fmt(x) for x in bw]
    cells += [row.spec.suite, row.spec.block]
    return cells


def render(rows: Sequence[ExperimentRow], fmt: str = "csv") -> str:
    """Table text in ``"csv"`` or ``"markdown"`` with two-decimal numbers.

    Missing values (no simulation, no baseline) are blank cells.
    """
    if not rows:
        raise ValueError("nothing to render")
    head = header(rows)
    body = [row_cells(r) for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(head)
        w.writerows(body)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        lines += ["| " + " | ".join(c.replace("|", "\\|") for c in cells) + " |" for cells in body]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_markdown(text: str) -> list[list[str]]:
    """Inverse of the markdown layout of :func:`render` (header included)."""
    out = []
    for k, line in enumerate(text.strip().splitlines()):
        if k == 1:
            continue
        inner = line.strip()[1:-1]
        out.append([c.strip().replace("\\|", "|") for c in inner.split(" | ")])
    return out


def parse_csv(text: str) -> list[list[str]]:
    return [r for r in csv.reader(io.StringIO(text))]


# ---------------------------------------------------------------- summaries

@dataclass(frozen=True)
class ErrorSummary:
    n: int
    mean: float
    sd: float
    q50: float
    q75: float


def summarize_errors(values: Iterable[float]) -> ErrorSummary:
    """Average, SD and 50th/75th percentiles of ``|delta|``."""
    a = np.abs(np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float))
    if a.size == 0:
        raise ValueError("no error values to summarize")
    sd = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return ErrorSummary(int(a.size), float(a.mean()), sd, float(np.percentile(a, 50)),
                        float(np.percentile(a, 75)))


def error_values(rows: Iterable[ExperimentRow]) -> tuple[list[float], list[float]]:
    """Station-2 and system errors, one product per row for symmetric-product suites."""
    d2, ds = [], []
    for r in rows:
        p = r.proposed
        if p.delta_w is None:
            continue
        products = (0,) if r.spec.suite in SYMMETRIC_PRODUCTS else (0, 1)
        for i in products:
            d2.append(p.delta_w[i][1])
            ds.append(p.delta_system[i])
    return d2, ds


def error_values_from_table(table: list[list[str]]) -> tuple[list[float], list[float]]:
    """Same as :func:`error_values`, from a parsed CSV or markdown table."""
    head, body = table[0], table[1:]
    col = {name: k for k, name in enumerate(head)}
    d2, ds = [], []
    for cells in body:
        if not cells or cells[col["d_W12"]] == "":
            continue
        products = (1,) if cells[col["suite"]] in SYMMETRIC_PRODUCTS else (1, 2)
        for i in products:
            d2.append(float(cells[col[f"d_W{i}2"]]))
            ds.append(float(cells[col[f"d_W{i}"]]))
    return d2, ds


def render_summary(d2: Sequence[float], ds: Sequence[float], fmt: str = "markdown") -> str:
    """Four-line error table: average, SD, 50th and 75th percentile."""
    a, b = summarize_errors(d2), summarize_errors(ds)
    labels = [("Average error", "mean"), ("SD error", "sd"), ("50th quantile", "q50"),
              ("75th quantile", "q75")]
    head = ["statistic", "error_W_i2_pct", "error_W_i_pct"]
    body = [[lab, f"{getattr(a, k):.1f}", f"{getattr(b, k):.1f}"] for lab, k in labels]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(head)
        w.writerows(body)
        return buf.getvalue()
    lines = ["| " + " | ".join(head) + " |", "|---|---|---|"]
    lines += ["| " + " | ".join(c) + " |" for c in body]
    return "\n".join(lines) + "\n"


__all__ = [
    "SUITES",
    "RowSpec",
    "ExperimentRow",
    "suite_rows",
    "solve_proposed",
    "run_row",
    "run_specs",
    "run_experiment",
    "render",
    "parse_markdown",
    "parse_csv",
    "summarize_errors",
    "error_values",
    "error_values_from_table",
    "render_summary",
]
