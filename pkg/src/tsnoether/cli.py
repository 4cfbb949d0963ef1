"""Command-line experiment runner.

::

    tsnoether run CONFIG [--out DIR] [--tol TOL] [--variant V] [--allow-noninvariant]
    tsnoether check CONFIG
    tsnoether bt-example [--out DIR]

Exit codes: 0 success, 1 usage or configuration error, 2 admissibility or
invariance failure, 3 solver failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import expr as ex
from .config import VARIANTS, ExperimentSpec, parse_config, parse_config_text
from .errors import ConfigError, ExprError, TimeScaleError, TsNoetherError
from .noether import (
    AdmissibilityReport,
    ConservationReport,
    Generator,
    InvarianceReport,
    SymmetryGroup,
    admissibility_check,
    conservation_report,
    extract_generator,
    infinitesimal_invariance_residual,
    invariance_check,
)
from .plot import emit_svg
from .timescale import GridFunction
from .variational import ELSolution, SymbolicLagrangian, solve_el

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANCE, EXIT_SOLVER = 0, 1, 2, 3


class StageError(TsNoetherError):
    """A module error tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, error: Exception, exit_code: int):
        super().__init__(f"[{stage}] {type(error).__name__}: {error}")
        self.stage = stage
        self.error = error
        self.exit_code = exit_code


@dataclass
class RunReport:
    admissibility: AdmissibilityReport | None = None
    invariance: InvarianceReport | None = None
    infinitesimal_residual: float | None = None
    generator: str = ""
    solutions: dict[str, ELSolution] = field(default_factory=dict)
    conservation: dict[str, ConservationReport] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    symmetry_ok: bool = True
    exit_code: int = EXIT_OK

    @property
    def drift(self) -> dict[str, dict[str, float]]:
        """Relative drift per pairing, e.g. ``drift["nonshifted"]["C"]``."""
        return {k: {"I": r.drift_I.relative, "C": r.drift_C.relative} for k, r in self.conservation.items()}

    def summary(self) -> str:
        parts = []
        if self.admissibility is not None:
            parts.append(self.admissibility.summary())
        if self.invariance is not None:
            parts.append(self.invariance.summary())
        if self.infinitesimal_residual is not None:
            parts.append(f"infinitesimal invariance residual (probe path): {self.infinitesimal_residual:.3e}")
        if self.generator:
            parts.append(f"generator: {self.generator}")
        for name, sol in self.solutions.items():
            parts.append(f"solution [{name}]: {len(sol.scale)} points, newton iterations max "
                         f"{int(sol.newton_iterations.max())}, max|EL residual| "
                         f"{float(np.max(np.abs(sol.residual.values))):.3e}")
        for rep in self.conservation.values():
            parts.append(rep.summary())
        if self.files:
            parts.append("files:\n" + "\n".join(f"  {p.name}" for p in self.files))
        if self.timings:
            parts.append("timings (s): " + ", ".join(f"{k}={v:.3f}" for k, v in self.timings.items()))
        return "\n\n".join(parts) + "\n"


def _stage(name, exit_code, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except TsNoetherError as err:
        raise StageError(name, err, exit_code) from err
    except (ValueError, ArithmeticError) as err:
        raise StageError(name, err, exit_code) from err


def _probe_path(spec: ExperimentSpec, ts) -> GridFunction:
    """The straight line through the initial data; deterministic invariance probe."""
    x0, v0 = np.asarray(spec.x0), np.asarray(spec.v0)
    return GridFunction(ts, x0[None, :] + (ts.points - ts.a)[:, None] * v0[None, :], "full")


def check(spec: ExperimentSpec, report: RunReport | None = None):
    """Admissibility and invariance stages; fills ``report`` and returns ``(report, L, G, gen, ts)``."""
    report = report or RunReport()
    clock = time.perf_counter()
    ts = _stage("scale", EXIT_CONFIG, spec.build_scale)
    L = _stage("lagrangian", EXIT_CONFIG, SymbolicLagrangian, spec.lagrangian, spec.dimension)
    G = None
    if spec.has_group:
        G = _stage("group", EXIT_CONFIG, SymmetryGroup.from_text, spec.group_g0, spec.group_g1, spec.dimension)
        report.admissibility = _stage("admissibility", EXIT_INVARIANCE, admissibility_check, G, ts, spec.s_samples)
        probe = _probe_path(spec, ts)
        report.invariance = _stage("invariance", EXIT_INVARIANCE, invariance_check, L, G, ts, probe, spec.s_samples)
        report.symmetry_ok = report.admissibility.passed and report.invariance.passed
    if spec.generator_zeta is not None:
        gen = _stage("generator", EXIT_CONFIG, Generator.from_text, spec.generator_zeta, spec.generator_xi,
                     spec.dimension)
        report.generator = f"zeta = {spec.generator_zeta}, xi = {', '.join(spec.generator_xi)} (given)"
    else:
        gen = _stage("generator", EXIT_INVARIANCE, extract_generator, G, ts)
        if hasattr(gen, "zeta_expr"):
            report.generator = (f"zeta = {ex.to_source(gen.zeta_expr)}, "
                                f"xi = {', '.join(ex.to_source(e) for e in gen.xi_exprs)} ({gen.provenance})")
        else:
            report.generator = f"numerical generator ({gen.provenance})"
    probe = _probe_path(spec, ts)
    r = _stage("invariance", EXIT_INVARIANCE, infinitesimal_invariance_residual, L, gen, probe)
    report.infinitesimal_residual = float(np.max(np.abs(r.values)))
    if G is None:
        scale = 1.0 + float(np.max(np.abs(L.value_batch(probe.t[:-1], probe.values[:-1],
                                                        np.diff(probe.values, axis=0) / ts.mu[:-1, None]))))
        report.symmetry_ok = report.infinitesimal_residual <= 1e-10 * scale
    if not report.symmetry_ok:
        report.exit_code = EXIT_INVARIANCE
    report.timings["check"] = time.perf_counter() - clock
    return report, L, G, gen, ts


def run(spec: ExperimentSpec, allow_noninvariant: bool = False, out_dir: str | Path | None = None,
        write: bool = True) -> RunReport:
    """Full pipeline: checks, solves, conserved quantities, files.

    A failed symmetry check stops before solving unless ``allow_noninvariant``.
    Stage errors are raised as :class:`StageError` carrying the exit code.
    """
    report, L, G, gen, ts = check(spec)
    if not report.symmetry_ok and not allow_noninvariant:
        return report
    clock = time.perf_counter()
    for variant in spec.variants:
        report.solutions[variant] = _stage(f"solve[{variant}]", EXIT_SOLVER, solve_el, L, ts, spec.x0, spec.v0,
                                           variant, spec.tol)
    report.timings["solve"] = time.perf_counter() - clock
    clock = time.perf_counter()
    for variant, sol in report.solutions.items():
        report.conservation[variant] = _stage(f"conservation[{variant}]", EXIT_SOLVER, conservation_report,
                                              L, gen, sol, variant)
    report.timings["conservation"] = time.perf_counter() - clock
    report.exit_code = EXIT_OK
    if write:
        out = Path(out_dir if out_dir is not None else spec.output_dir)
        report.files = _stage("output", EXIT_CONFIG, emit_all, report, out)
    return report


def emit_csv(report: RunReport, out_dir) -> list[Path]:
    """``solution_<variant>.csv`` and ``conservation_<variant>.csv`` for every solve."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for variant, sol in report.solutions.items():
        path = out / f"solution_{variant}.csv"
        sol.to_csv(path)
        files.append(path)
    for variant, rep in report.conservation.items():
        path = out / f"conservation_{variant}.csv"
        rep.to_csv(path)
        files.append(path)
    return files


def emit_all(report: RunReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    files = emit_csv(report, out)
    first = next(iter(report.conservation.values()))
    series = {f"I ({first.label})": (first.I.t, first.I.values[:, 0]),
              f"C ({first.label})": (first.C.t, first.C.values[:, 0])}
    files.append(emit_svg(series, out / "figure1.svg", title="conserved quantity I vs C", ylabel="value"))
    rpt = out / "report.txt"
    files.append(rpt)
    report.files = files
    rpt.write_text(report.summary(), encoding="utf-8", newline="\n")
    for path in files:
        if not path.exists() or path.stat().st_size == 0:
            raise OSError(f"output file {path} is missing or empty")
    return files


def bt_preset_text() -> str:
    return resources.files("tsnoether").joinpath("presets/bt_example.cfg").read_text(encoding="utf-8")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsnoether", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--tol", type=float, help="solver tolerance (overrides solver.tol)")
        p.add_argument("--variant", choices=VARIANTS, help="Euler-Lagrange variant (overrides solver.variant)")
        p.add_argument("--allow-noninvariant", action="store_true",
                       help="continue and exit 0 when the symmetry checks fail")

    p_run = sub.add_parser("run", help="run an experiment from a configuration file")
    p_run.add_argument("config")
    common(p_run)
    p_check = sub.add_parser("check", help="admissibility and invariance checks only")
    p_check.add_argument("config")
    common(p_check)
    p_bt = sub.add_parser("bt-example", help="reproduce the x^2/t + t v^2 example with its default settings")
    common(p_bt)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        spec = parse_config_text(bt_preset_text()) if args.command == "bt-example" else parse_config(args.config)
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol must be positive")
            spec = dataclasses.replace(spec, tol=args.tol)
        if args.variant is not None:
            spec = dataclasses.replace(spec, variant=args.variant)
    except (ConfigError, ExprError, TimeScaleError) as err:
        print(f"tsnoether: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "check":
            report = check(spec)[0]
            print(report.summary(), end="")
            if not report.symmetry_ok and not args.allow_noninvariant:
                return EXIT_INVARIANCE
            return EXIT_OK
        report = run(spec, allow_noninvariant=args.allow_noninvariant, out_dir=args.out)
    except StageError as err:
        print(f"tsnoether: {err}", file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f"tsnoether: output error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.summary(), end="")
    if not report.symmetry_ok and not args.allow_noninvariant:
        print("tsnoether: symmetry check failed (use --allow-noninvariant to continue)", file=sys.stderr)
        return EXIT_INVARIANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
