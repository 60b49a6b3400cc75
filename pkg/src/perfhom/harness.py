"""Epsilon-sweep studies: construction, diagnostics, solves, trends.

A study runs a strictly decreasing list of epsilons.  The limit problem
is solved once on the finest grid and injected onto each row's grid, so
row errors compare against one fixed limit field.  Rows are computed
sequentially with fixed-order reductions, which makes reports
reproducible bit for bit for a given configuration.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .diagnostics import assumption_quantities, ldc_deviation
from .errors import ConfigError, InvalidParameterError, StudyError
from .inverse import construct_holes
from .potential import (
    DEFAULT_QUADRATURE,
    Potential,
    QuadratureSpec,
    parse_potential,
)
from .solver import (
    CUTOFF_NAME,
    Grid,
    corrector_field,
    field_from_callable,
    l2_distance,
    l2_norm,
    lump_measure,
    restrict,
    solve_limit,
    solve_perforated,
    weak_witness,
)
from .holes import disjointness_check
from .tiling import TilingSpec, cells_intersecting, unit_box

Array = np.ndarray

DEFAULT_WITNESS_MODES = ((1, 1, 1), (3, 1, 1), (1, 3, 3))


def sine_mode(mode: Sequence[int]) -> Callable[[Array], Array]:
    """Zero-trace test function ``prod_k sin(pi m_k x_k)``."""
    m = np.asarray(mode, dtype=float)

    def g(x):
        return np.prod(np.sin(np.pi * m * x), axis=1)

    return g


RHS_CONSTRUCTORS = {
    "constant": lambda dim, c: (lambda x: np.full(x.shape[0], float(c))),
    "sine": lambda dim, *m: sine_mode([int(v) for v in (m or (1,) * dim)]),
}


def parse_rhs(text: str, dim: int) -> Callable[[Array], Array]:
    """Parse a right-hand-side spec such as ``constant(1)`` or ``sine(1,1,1)``."""
    import ast

    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse rhs spec {text!r}: {exc}") from exc
    node = tree.body
    if (
        not isinstance(node, ast.Call)
        or not isinstance(node.func, ast.Name)
        or node.func.id not in RHS_CONSTRUCTORS
    ):
        raise ConfigError(f"unknown rhs constructor in {text!r}")
    args = []
    for a in node.args:
        if isinstance(a, ast.Constant) and isinstance(a.value, (int, float)):
            args.append(float(a.value))
        elif isinstance(a, ast.UnaryOp) and isinstance(a.op, ast.USub):
            args.append(-float(a.operand.value))
        else:
            raise ConfigError(f"rhs arguments must be numbers in {text!r}")
    return RHS_CONSTRUCTORS[node.func.id](dim, *args)


@dataclass(frozen=True)
class TrendSpec:
    """A registered trend assertion on one report column."""

    name: str
    column: str
    mode: str  # strict_decrease | min_ratio | slope | max_abs
    param: Optional[float] = None
    param2: Optional[float] = None


@dataclass
class StudyConfig:
    """Everything a study needs; see :func:`load_config` for the file format."""

    dim: int
    epsilons: tuple[float, ...]
    grids: tuple[int, ...]
    potential: Potential
    potential_spec: str
    rhs: Callable[[Array], Array]
    rhs_spec: str
    tol: float = 1e-8
    witness_modes: tuple[tuple[int, ...], ...] = DEFAULT_WITNESS_MODES
    quad: QuadratureSpec = DEFAULT_QUADRATURE
    out_dir: Optional[str] = None
    allow_oversized_holes: bool = False
    override_tiny_holes: bool = False
    threads: Optional[int] = None
    trends: tuple[TrendSpec, ...] = ()

    def __post_init__(self):
        if len(self.epsilons) != len(self.grids):
            raise ConfigError("epsilons and grids must have the same length")
        if not self.epsilons:
            raise ConfigError("study needs at least one epsilon")
        if any(e2 >= e1 for e1, e2 in zip(self.epsilons, self.epsilons[1:])):
            raise ConfigError("epsilon list must be strictly decreasing")
        if any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilons must be positive")
        if any(n < 1 for n in self.grids):
            raise ConfigError("grid sizes must be positive")
        finest = max(self.grids) + 1
        for n in self.grids:
            if finest % (n + 1) != 0:
                raise ConfigError(
                    f"grids are not nested: {n + 1} does not divide {finest}"
                )
        if not (self.tol > 0):
            raise ConfigError("tolerance must be positive")
        for mode in self.witness_modes:
            if len(mode) != self.dim or any(int(m) < 1 for m in mode):
                raise ConfigError(f"bad witness mode {mode}")


def _parse_number(text: str) -> float:
    """Accept plain floats and exact fractions like ``1/8``."""
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def load_config(path) -> StudyConfig:
    """Read a study configuration from a flat key = value file.

    Sections: ``[study]`` with keys ``dim``, ``epsilons``, ``grids``,
    ``potential``, ``f``, and optional ``tol``, ``witness_modes``,
    ``quad_volume_order``, ``quad_surface_refine``, ``out``,
    ``allow_oversized_holes``, ``override_tiny_holes``, ``threads``;
    optional ``[trends]`` with lines ``name = column mode [param]``.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "study" not in parser:
        raise ConfigError("config file needs a [study] section")
    section = parser["study"]
    try:
        dim = section.getint("dim", 3)
        epsilons = tuple(_parse_number(tok) for tok in section.get("epsilons", "").split())
        grids = tuple(int(tok) for tok in section.get("grids", "").split())
        potential_spec = section.get("potential", "zero()")
        rhs_spec = section.get("f", "constant(1)")
        tol = float(section.get("tol", "1e-8"))
        out_dir = section.get("out", fallback=None)
        allow_oversized = section.getboolean("allow_oversized_holes", fallback=False)
        override_tiny = section.getboolean("override_tiny_holes", fallback=False)
        threads_raw = section.get("threads", fallback=None)
        threads = int(threads_raw) if threads_raw else None
        quad = QuadratureSpec(
            volume_order=section.getint("quad_volume_order", DEFAULT_QUADRATURE.volume_order),
            surface_refine=section.getint(
                "quad_surface_refine", DEFAULT_QUADRATURE.surface_refine
            ),
        )
        modes_raw = section.get("witness_modes", fallback=None)
        if modes_raw:
            witness_modes = tuple(
                tuple(int(v) for v in grp.split(","))
                for grp in modes_raw.replace("(", " ").replace(")", " ").split()
                if grp.strip(",")
            )
        else:
            witness_modes = tuple(m[:dim] for m in DEFAULT_WITNESS_MODES) if dim <= 3 else (
                tuple([1] * dim),
            )
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(f"invalid value in [study]: {exc}") from exc

    trends = []
    if "trends" in parser:
        for name, value in parser["trends"].items():
            tokens = value.split()
            if len(tokens) < 2:
                raise ConfigError(f"trend {name!r} needs 'column mode [param]'")
            column, mode = tokens[0], tokens[1]
            param = float(tokens[2]) if len(tokens) > 2 else None
            param2 = float(tokens[3]) if len(tokens) > 3 else None
            trends.append(TrendSpec(name, column, mode, param, param2))

    try:
        potential = parse_potential(potential_spec, dim)
        rhs = parse_rhs(rhs_spec, dim)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from exc

    return StudyConfig(
        dim=dim,
        epsilons=epsilons,
        grids=grids,
        potential=potential,
        potential_spec=potential_spec,
        rhs=rhs,
        rhs_spec=rhs_spec,
        tol=tol,
        witness_modes=witness_modes,
        quad=quad,
        out_dir=out_dir,
        allow_oversized_holes=allow_oversized,
        override_tiny_holes=override_tiny,
        threads=threads,
        trends=tuple(trends),
    )


def _witness_column(mode: Sequence[int]) -> str:
    return "witness_" + "_".join(str(int(m)) for m in mode)


@dataclass
class StudyRow:
    epsilon: float
    n: int
    h: float
    cell_count: int
    hole_count: int
    min_radius: float
    max_radius: float
    max_radius_ratio: float
    sup_a_over_R: float
    sum_A2: float
    sup_A3: float
    sum_A4: float
    sum_A6: float
    ldc_deviation: float
    v_l2: float
    l2_error: float
    rel_l2_error: float
    witnesses: dict[str, float]
    solver_iterations: int
    solver_residual: float
    solver_seconds: float

    def as_dict(self) -> dict:
        out = {
            "epsilon": self.epsilon,
            "n": self.n,
            "h": self.h,
            "cell_count": self.cell_count,
            "hole_count": self.hole_count,
            "min_radius": self.min_radius,
            "max_radius": self.max_radius,
            "max_radius_ratio": self.max_radius_ratio,
            "sup_a_over_R": self.sup_a_over_R,
            "sum_A2": self.sum_A2,
            "sup_A3": self.sup_A3,
            "sum_A4": self.sum_A4,
            "sum_A6": self.sum_A6,
            "ldc_deviation": self.ldc_deviation,
            "v_l2": self.v_l2,
            "l2_error": self.l2_error,
            "rel_l2_error": self.rel_l2_error,
        }
        out.update(self.witnesses)
        out.update(
            {
                "solver_iterations": self.solver_iterations,
                "solver_residual": self.solver_residual,
                "solver_seconds": self.solver_seconds,
            }
        )
        return out


@dataclass
class TrendResult:
    spec: TrendSpec
    passed: bool
    values: tuple[float, ...]
    ratios: tuple[float, ...]
    detail: str = ""


@dataclass
class StudyReport:
    rows: list[StudyRow]
    metadata: dict

    def columns(self) -> list[str]:
        return list(self.rows[0].as_dict().keys()) if self.rows else []

    def column(self, name: str) -> list[float]:
        if not self.rows:
            raise InvalidParameterError("report has no rows")
        if name not in self.rows[0].as_dict():
            raise InvalidParameterError(f"unknown report column {name!r}")
        return [row.as_dict()[name] for row in self.rows]

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(self.columns())
        for row in self.rows:
            writer.writerow(
                [
                    format(v, ".17g") if isinstance(v, float) else str(v)
                    for v in row.as_dict().values()
                ]
            )
        return buffer.getvalue()

    def write(self, out_dir, trend_results: Sequence[TrendResult] = ()) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "study.csv").write_text(self.to_csv_text())
        summary = {
            "metadata": self.metadata,
            "trends": [
                {
                    "name": t.spec.name,
                    "column": t.spec.column,
                    "mode": t.spec.mode,
                    "passed": t.passed,
                    "values": list(t.values),
                    "ratios": list(t.ratios),
                    "detail": t.detail,
                }
                for t in trend_results
            ],
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


def trend_check(
    report: StudyReport,
    column: str,
    mode: str,
    *,
    min_ratio: Optional[float] = None,
    slope_target: Optional[float] = None,
    slope_tol: Optional[float] = None,
    bound: Optional[float] = None,
) -> TrendResult:
    """Evaluate a trend assertion on one report column.

    Modes: ``strict_decrease``; ``abs_decrease`` (strict decrease of
    magnitudes, for signed witness columns); ``min_ratio`` (consecutive
    ratios at least ``min_ratio``); ``slope`` (log-log fit against
    epsilon within ``slope_tol`` of ``slope_target``); ``max_abs`` (all
    values bounded by ``bound``).
    """
    values = report.column(column)
    if len(values) < 2:
        raise InvalidParameterError("trend check needs at least 2 rows")
    ratios = tuple(
        a / b if b != 0.0 else math.inf for a, b in zip(values, values[1:])
    )
    spec = TrendSpec("adhoc", column, mode, min_ratio or slope_target or bound)
    if mode == "strict_decrease":
        passed = all(a > b for a, b in zip(values, values[1:]))
        return TrendResult(spec, passed, tuple(values), ratios)
    if mode == "abs_decrease":
        passed = all(abs(a) > abs(b) for a, b in zip(values, values[1:]))
        return TrendResult(spec, passed, tuple(values), ratios)
    if mode == "min_ratio":
        if min_ratio is None:
            raise InvalidParameterError("min_ratio mode needs a ratio")
        passed = all(r >= min_ratio for r in ratios)
        return TrendResult(spec, passed, tuple(values), ratios)
    if mode == "slope":
        if slope_target is None or slope_tol is None:
            raise InvalidParameterError("slope mode needs target and tolerance")
        eps = report.column("epsilon")
        if any(v <= 0 for v in values):
            return TrendResult(spec, False, tuple(values), ratios, "nonpositive values")
        slope = float(np.polyfit(np.log(eps), np.log(values), 1)[0])
        passed = abs(slope - slope_target) <= slope_tol
        return TrendResult(spec, passed, tuple(values), ratios, f"slope={slope:.4f}")
    if mode == "max_abs":
        if bound is None:
            raise InvalidParameterError("max_abs mode needs a bound")
        passed = all(abs(v) <= bound for v in values)
        return TrendResult(spec, passed, tuple(values), ratios)
    raise InvalidParameterError(f"unknown trend mode {mode!r}")


def _run_trend(report: StudyReport, spec: TrendSpec) -> TrendResult:
    kwargs = {}
    if spec.mode == "min_ratio":
        kwargs["min_ratio"] = spec.param
    elif spec.mode == "slope":
        kwargs["slope_target"] = spec.param
        kwargs["slope_tol"] = spec.param2 if spec.param2 is not None else 0.1
    elif spec.mode == "max_abs":
        kwargs["bound"] = spec.param
    result = trend_check(report, spec.column, spec.mode, **kwargs)
    result.spec = spec
    return result


def run_trends(report: StudyReport, trends: Sequence[TrendSpec]) -> list[TrendResult]:
    return [_run_trend(report, spec) for spec in trends]


def run_study(cfg: StudyConfig) -> StudyReport:
    """Run the full sweep; deterministic for a fixed configuration.

    Stages per epsilon: construct holes, geometry and assumption checks,
    capacity-density deviation, corrector, perforated solve, errors
    against the injected limit field.  Any stage failure raises
    :class:`StudyError` carrying the rows finished so far.
    """
    domain = unit_box(cfg.dim)
    rows: list[StudyRow] = []
    metadata = {
        "dim": cfg.dim,
        "potential": cfg.potential_spec,
        "f": cfg.rhs_spec,
        "epsilons": list(cfg.epsilons),
        "grids": list(cfg.grids),
        "tol": cfg.tol,
        "cutoff": CUTOFF_NAME,
        "witness_modes": [list(m) for m in cfg.witness_modes],
    }
    report = StudyReport(rows, metadata)

    try:
        return _run_study_body(cfg, domain, report)
    except StudyError:
        # emit the rows finished before the failure
        if cfg.out_dir and report.rows:
            report.write(cfg.out_dir, [])
        raise


def _run_study_body(cfg: StudyConfig, domain, report: StudyReport) -> StudyReport:
    rows = report.rows
    metadata = report.metadata

    finest_n = max(cfg.grids)
    fine_grid = Grid(cfg.dim, finest_n)

    def stage(name, eps, fn):
        try:
            return fn()
        except StudyError:
            raise
        except Exception as exc:
            raise StudyError(name, eps, exc, partial=report) from exc

    start = time.perf_counter()
    weights = stage("lump_measure", None, lambda: lump_measure(cfg.potential, fine_grid, cfg.quad))
    f_fine = stage("rhs", None, lambda: field_from_callable(fine_grid, cfg.rhs))
    u_limit, limit_stats = stage(
        "solve_limit",
        None,
        lambda: solve_limit(f_fine, weights, fine_grid, cfg.tol, n_threads=cfg.threads),
    )
    metadata["limit_solver"] = {
        "n": finest_n,
        "iterations": limit_stats.iterations,
        "residual": limit_stats.residual,
        "seconds": limit_stats.seconds,
    }

    for eps, n in zip(cfg.epsilons, cfg.grids):
        grid = Grid(cfg.dim, n)
        spec = TilingSpec(cfg.dim, eps)
        construction = stage(
            "construct",
            eps,
            lambda: construct_holes(
                cfg.potential, spec, domain, cfg.quad, strict=not cfg.allow_oversized_holes
            ),
        )
        holes = construction.holes
        seps = construction.separation
        geometry = stage("disjointness", eps, lambda: disjointness_check(holes, seps))
        if not geometry.ok:
            raise StudyError(
                "disjointness", eps, "separation balls overlap or escape cells", report
            )
        cells = cells_intersecting(spec, domain)
        assumptions = stage(
            "assumptions", eps, lambda: assumption_quantities(holes, seps, cells)
        )
        ldc = stage(
            "ldc",
            eps,
            lambda: ldc_deviation(
                holes, cfg.potential, spec, grid, cfg.quad, n_threads=cfg.threads
            ),
        )
        nonempty = construction.nonempty
        if nonempty and max(h.radius for h in nonempty) < seps.R:
            _, v_l2 = stage(
                "corrector", eps, lambda: corrector_field(holes, seps, grid)
            )
        elif not nonempty:
            v_l2 = 0.0
        else:
            # oversized holes leave no cutoff annulus; metric undefined
            v_l2 = math.nan
        f_row = stage("rhs", eps, lambda: field_from_callable(grid, cfg.rhs))
        u_eps, stats = stage(
            "solve_perforated",
            eps,
            lambda: solve_perforated(
                f_row,
                holes,
                grid,
                cfg.tol,
                override_tiny=cfg.override_tiny_holes,
                n_threads=cfg.threads,
            ),
        )
        u_ref = stage("restrict", eps, lambda: restrict(u_limit, fine_grid, grid))
        error = l2_distance(u_eps, u_ref, grid)
        ref_norm = l2_norm(u_ref, grid)
        witnesses = {}
        for mode in cfg.witness_modes:
            g = field_from_callable(grid, sine_mode(mode))
            witnesses[_witness_column(mode)] = weak_witness(u_eps, u_ref, g, grid)
        radii = [h.radius for h in nonempty]
        rows.append(
            StudyRow(
                epsilon=eps,
                n=n,
                h=grid.h,
                cell_count=len(cells),
                hole_count=len(nonempty),
                min_radius=min(radii) if radii else 0.0,
                max_radius=max(radii) if radii else 0.0,
                max_radius_ratio=construction.max_radius_ratio,
                sup_a_over_R=assumptions.sup_a_over_R,
                sum_A2=assumptions.sum_A2,
                sup_A3=assumptions.sup_A3,
                sum_A4=assumptions.sum_A4,
                sum_A6=assumptions.sum_A6,
                ldc_deviation=ldc,
                v_l2=v_l2,
                l2_error=error,
                rel_l2_error=error / ref_norm if ref_norm > 0.0 else 0.0,
                witnesses=witnesses,
                solver_iterations=stats.iterations,
                solver_residual=stats.residual,
                solver_seconds=stats.seconds,
            )
        )
    metadata["total_seconds"] = time.perf_counter() - start

    trend_results = run_trends(report, cfg.trends)
    if cfg.out_dir:
        report.write(cfg.out_dir, trend_results)
    return report
