"""Command-line entry point.

Subcommands: ``capacity`` (exact and optionally numerical ball
capacity), ``construct`` (emit hole CSVs for a config), ``check``
(assumption quantities, optionally from previously emitted CSVs),
``solve`` (one perforated/limit pair at the first epsilon), ``study``
(the full sweep).

Exit codes: 0 success, 1 validation or configuration error, 2 numerical
failure, 3 failed trend check under ``study --assert``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .capacity import capacity_ball, capacity_extrapolate, capacity_variational
from .diagnostics import AssumptionReport, assumption_quantities
from .errors import (
    ConstructionError,
    EvaluationError,
    ExtrapolationError,
    GeometryError,
    InvalidParameterError,
    PerfhomError,
    ResolutionError,
    SolverError,
    StudyError,
)
from .harness import load_config, run_study, run_trends
from .holes import read_holes_csv
from .inverse import construct_holes
from .solver import Grid, field_from_callable, lump_measure, solve_limit, solve_perforated, write_field
from .tiling import TilingSpec, cells_intersecting, unit_box

VALIDATION_ERRORS = (InvalidParameterError, ConstructionError, GeometryError)
NUMERICAL_ERRORS = (SolverError, ResolutionError, ExtrapolationError, EvaluationError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfhom",
        description="Poisson problems on perforated domains: construction, "
        "diagnostics and convergence studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cap = sub.add_parser("capacity", help="exact (and optionally numerical) ball capacity")
    p_cap.add_argument("dim", type=int)
    p_cap.add_argument("radius", type=float)
    p_cap.add_argument(
        "--numeric",
        nargs=2,
        type=float,
        metavar=("L", "H"),
        help="also run the truncated variational solve at box half-width L, spacing H",
    )
    p_cap.add_argument(
        "--extrapolate",
        type=float,
        metavar="L2",
        help="extrapolate using a second truncation L2 (requires --numeric)",
    )
    p_cap.add_argument("--threads", type=int, default=None)

    for name, help_text in (
        ("construct", "emit hole CSVs for each epsilon in the config"),
        ("check", "emit assumption quantities for each epsilon"),
        ("solve", "solve one perforated/limit pair at the first epsilon"),
        ("study", "run the full epsilon sweep"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", type=Path)
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument(
            "--override-tiny-holes",
            action="store_true",
            help="collapse under-resolved holes to single-node constraints",
        )
        if name == "check":
            p.add_argument(
                "--holes-dir",
                type=Path,
                default=None,
                help="re-read hole CSVs emitted by 'construct' instead of constructing",
            )
        if name == "study":
            p.add_argument(
                "--assert",
                dest="assert_trends",
                action="store_true",
                help="exit 3 when a registered trend check fails",
            )
    return parser


def _out_dir(args, cfg) -> Path:
    out = args.out or (Path(cfg.out_dir) if cfg.out_dir else Path("."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_overrides(args, cfg):
    if args.threads is not None:
        cfg.threads = args.threads
    if args.override_tiny_holes:
        cfg.override_tiny_holes = True
    if args.out is not None:
        cfg.out_dir = str(args.out)
    return cfg


def _cmd_capacity(args) -> int:
    exact = capacity_ball(args.dim, args.radius)
    print(repr(exact.value))
    if args.numeric:
        L, h = args.numeric
        first = capacity_variational(args.dim, args.radius, L, h)
        print(f"variational L={L:g} h={h:g}: {first.value!r}")
        if args.extrapolate:
            second = capacity_variational(args.dim, args.radius, args.extrapolate, h)
            print(f"variational L={args.extrapolate:g} h={h:g}: {second.value!r}")
            extrapolated = capacity_extrapolate(first, second)
            print(f"extrapolated: {extrapolated.value!r}")
    elif args.extrapolate:
        raise InvalidParameterError("--extrapolate requires --numeric")
    return 0


def _constructions(cfg):
    domain = unit_box(cfg.dim)
    for eps in cfg.epsilons:
        spec = TilingSpec(cfg.dim, eps)
        yield eps, spec, construct_holes(
            cfg.potential, spec, domain, cfg.quad,
            strict=not cfg.allow_oversized_holes,
        )


def _cmd_construct(args) -> int:
    cfg = _apply_overrides(args, load_config(args.config))
    out = _out_dir(args, cfg)
    for k, (eps, _, construction) in enumerate(_constructions(cfg)):
        construction.write(out / f"holes_{k:02d}.csv", out / f"holes_{k:02d}.json")
        print(f"epsilon={eps:g}: {len(construction.nonempty)} holes -> holes_{k:02d}.csv")
    return 0


def _assumption_rows(cfg, args):
    from .holes import SeparationParams

    domain = unit_box(cfg.dim)
    for k, eps in enumerate(cfg.epsilons):
        spec = TilingSpec(cfg.dim, eps)
        cells = cells_intersecting(spec, domain)
        if getattr(args, "holes_dir", None):
            holes = read_holes_csv(args.holes_dir / f"holes_{k:02d}.csv")
            seps = SeparationParams(c1=1.0, epsilon=eps)
        else:
            construction = construct_holes(
                cfg.potential, spec, domain, cfg.quad,
                strict=not cfg.allow_oversized_holes,
            )
            holes = construction.holes
            seps = construction.separation
        yield assumption_quantities(holes, seps, cells)


def _cmd_check(args) -> int:
    cfg = _apply_overrides(args, load_config(args.config))
    out = _out_dir(args, cfg)
    rows = list(_assumption_rows(cfg, args))
    path = out / "assumptions.csv"
    with open(path, "w") as fh:
        fh.write(",".join(AssumptionReport._COLUMNS) + "\n")
        for row in rows:
            fh.write(
                ",".join(format(v, ".17g") for v in row.as_row().values()) + "\n"
            )
    print(f"wrote {path}")
    return 0


def _cmd_solve(args) -> int:
    cfg = _apply_overrides(args, load_config(args.config))
    out = _out_dir(args, cfg)
    eps = cfg.epsilons[0]
    n = cfg.grids[0]
    grid = Grid(cfg.dim, n)
    spec = TilingSpec(cfg.dim, eps)
    construction = construct_holes(
        cfg.potential, spec, unit_box(cfg.dim), cfg.quad,
        strict=not cfg.allow_oversized_holes,
    )
    f = field_from_callable(grid, cfg.rhs)
    u_eps, stats_eps = solve_perforated(
        f, construction.holes, grid, cfg.tol,
        override_tiny=cfg.override_tiny_holes, n_threads=cfg.threads,
    )
    weights = lump_measure(cfg.potential, grid, cfg.quad)
    u_lim, stats_lim = solve_limit(f, weights, grid, cfg.tol, n_threads=cfg.threads)
    write_field(out / "u_perforated.bin", grid, u_eps)
    write_field(out / "u_limit.bin", grid, u_lim)
    stats = {
        "epsilon": eps,
        "n": n,
        "perforated": stats_eps.__dict__,
        "limit": stats_lim.__dict__,
    }
    (out / "solve_stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    print(f"wrote fields and stats to {out}")
    return 0


def _cmd_study(args) -> int:
    cfg = _apply_overrides(args, load_config(args.config))
    if cfg.out_dir is None:
        cfg.out_dir = str(_out_dir(args, cfg))
    report = run_study(cfg)
    results = run_trends(report, cfg.trends)
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"trend {res.spec.name} [{res.spec.column} {res.spec.mode}]: {status}")
    print(f"wrote study report to {cfg.out_dir}")
    if args.assert_trends and any(not r.passed for r in results):
        print("trend assertions failed", file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "capacity": _cmd_capacity,
        "construct": _cmd_construct,
        "check": _cmd_check,
        "solve": _cmd_solve,
        "study": _cmd_study,
    }
    try:
        return handlers[args.command](args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except StudyError as exc:
        cause = exc.cause if isinstance(exc.cause, Exception) else None
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(cause, VALIDATION_ERRORS):
            return 1
        return 2
    except PerfhomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
