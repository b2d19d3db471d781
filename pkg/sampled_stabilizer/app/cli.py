"""
Command-line entry point.

    python -m app.cli simulate --preset drone-emulated --oracle --emit-plots
    python -m app.cli sweep --study taylor-remainder --preset drone-emulated
    python -m app.cli design --n 2 --poles -3,-3
    python -m app.cli estimate --input samples.csv --n 2 --rho 4 --out zhat.csv
    python -m app.cli presets --out configs/

Exit codes: 0 ok, 1 config/usage error, 2 simulation blow-up, 3 a sweep tolerance failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app import __version__
from app.config import ARTIFACT_VERSION, LOG_LEVEL, OUTPUT_DIR, SCHEMA_VERSION, SWEEP_WORKERS
from app.control.analysis import (
    STUDIES,
    adaptation_window_steps,
    convergence_metric,
    input_convergence,
    lyapunov_audit,
    run_study,
)
from app.control.controller import adaptation_margin, design_from_gain, design_gain
from app.control.errors import BlowUp, ConfigError, ControlError
from app.control.estimator import estimate_series
from app.control.export import (
    read_samples_csv,
    write_estimates_csv,
    write_gnuplot,
    write_report,
    write_summary,
    write_trace_csv,
)
from app.control.scenarios import (
    check_preset,
    dump_run_config,
    load_run_config,
    preset,
    preset_names,
    resolve,
    run_config_schema,
)
from app.control.simloop import run, run_oracle
from app.models.schemas import RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BLOWUP = 2
EXIT_SWEEP_FAILED = 3

LIST_FLAGS = ("--poles", "--k")


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from None


def _join_list_flags(argv: Sequence[str]) -> List[str]:
    """Let '--poles -3,-3' through argparse, which would read '-3,-3' as a flag."""
    out: List[str] = []
    it = iter(argv)
    for arg in it:
        if arg in LIST_FLAGS:
            nxt = next(it, None)
            out.append(arg if nxt is None else f"{arg}={nxt}")
        else:
            out.append(arg)
    return out


def _load(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        return load_run_config(args.config)
    return preset(args.preset)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out) if args.out else OUTPUT_DIR
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt_list(values) -> str:
    return json.dumps([float(x) for x in np.asarray(values).reshape(-1)])


# === simulate ===

def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    for finding in check_preset(cfg):
        print(f"WARNING={finding}")
    loop = resolve(cfg)
    out = _out_dir(args)
    stem = cfg.name

    try:
        trace = run(loop)
    except BlowUp as e:
        if e.trace is not None:
            write_trace_csv(e.trace, out / f"{stem}_trace.csv")
        write_summary({"status": "blowup", "message": str(e).splitlines()[0]}, out / f"{stem}_summary.txt")
        print(f"STATUS=blowup\nMESSAGE={e}")
        return EXIT_BLOWUP

    csv_path = write_trace_csv(trace, out / f"{stem}_trace.csv")
    metrics = convergence_metric(trace)
    audit = lyapunov_audit(trace, window=adaptation_window_steps(loop.T))
    conv = input_convergence(trace)
    margin = adaptation_margin(loop.plant, loop.gamma)
    summary: Dict[str, Any] = {
        "status": "ok",
        "preset": cfg.name,
        "steps": len(trace) - 1,
        "T": loop.T,
        "terminal_norm": metrics.terminal_norm,
        "settled": metrics.settled,
        "settling_time": metrics.settling_time,
        "steady_error": metrics.steady_error,
        "overshoot": metrics.overshoot,
        "lyapunov_violations": audit.violations,
        "lyapunov_late_violations": audit.late_violations,
        "lyapunov_audited": audit.audited,
        "fitted_lambda": audit.fitted_lambda,
        "input_settled_time": conv.settled_time,
        "gamma_beta_max": margin.gamma_beta_max,
        "lambda_u_max": margin.lambda_u_max,
    }
    if not metrics.settled:
        logger.warning(f"[CLI] {cfg.name} did not settle within the horizon")

    oracle_csv: Optional[Path] = None
    if args.oracle:
        try:
            oracle = run_oracle(loop)
        except BlowUp as e:
            if e.trace is not None:
                write_trace_csv(e.trace, out / f"{stem}_oracle_trace.csv")
            print(f"STATUS=blowup\nMESSAGE=oracle run: {e}")
            return EXIT_BLOWUP
        oracle_csv = write_trace_csv(oracle, out / f"{stem}_oracle_trace.csv")
        vs_oracle = input_convergence(trace, oracle)
        summary["oracle_terminal_norm"] = convergence_metric(oracle).terminal_norm
        summary["oracle_input_settled_time"] = vs_oracle.settled_time

    if args.emit_plots:
        write_gnuplot(csv_path, loop.plant.n, out / f"{stem}_trace.gp", oracle_csv=oracle_csv, title=cfg.name)

    write_summary(summary, out / f"{stem}_summary.txt")
    for key, val in summary.items():
        print(f"{key.upper()}={val if val is not None else ''}")
    return EXIT_OK


# === sweep ===

def cmd_sweep(args: argparse.Namespace) -> int:
    if args.study not in STUDIES:
        print(f"ERROR=unknown study '{args.study}'; choose from {sorted(STUDIES)}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = _load(args)
    loop = resolve(cfg)
    try:
        report = run_study(args.study, loop, workers=args.workers)
    except BlowUp as e:
        print(f"STATUS=blowup\nMESSAGE={e}")
        return EXIT_BLOWUP

    points, summary, _ = write_report(report, _out_dir(args))
    print(summary.read_text(encoding="utf-8"), end="")
    logger.info(f"[CLI] wrote {points} and {summary}")
    return EXIT_OK if report.passed else EXIT_SWEEP_FAILED


# === design ===

def cmd_design(args: argparse.Namespace) -> int:
    if (args.poles is None) == (args.k is None):
        print("ERROR=give exactly one of --poles or --k", file=sys.stderr)
        return EXIT_CONFIG
    if args.poles is not None:
        design = design_gain(args.n, args.poles)
    else:
        if len(args.k) != args.n:
            print(f"ERROR=--k needs {args.n} entries, got {len(args.k)}", file=sys.stderr)
            return EXIT_CONFIG
        design = design_from_gain(args.k)

    print(f"K={_fmt_list(design.K)}")
    print(f"P_Z={json.dumps(design.P_z.tolist())}")
    print(f"Q={json.dumps(design.Q.tolist())}")
    print(f"LAMBDA_MIN_Q={design.lambda_z}")
    print(f"CLOSED_LOOP_EIG_REAL={_fmt_list(design.closed_loop_eigs)}")
    return EXIT_OK


# === estimate ===

def cmd_estimate(args: argparse.Namespace) -> int:
    path = Path(args.input)
    if not path.is_file():
        print(f"ERROR=input file not found: {path}", file=sys.stderr)
        return EXIT_CONFIG
    times, outputs = read_samples_csv(path)
    rows = estimate_series(times, outputs, n=args.n, rho=args.rho)
    out = Path(args.out) if args.out else OUTPUT_DIR / f"{path.stem}_estimates.csv"
    write_estimates_csv(rows, args.n, out)
    print(f"ROWS={len(rows)}\nOUTPUT={out}")
    return EXIT_OK


# === presets ===

def cmd_presets(args: argparse.Namespace) -> int:
    if args.schema:
        schema = run_config_schema()
        if args.out:
            target = Path(args.out)
            target.mkdir(parents=True, exist_ok=True)
            (target / "run_config.schema.json").write_text(schema + "\n", encoding="utf-8")
        else:
            print(schema)
        return EXIT_OK

    for name in preset_names():
        text = dump_run_config(preset(name))
        if args.out:
            target = Path(args.out)
            target.mkdir(parents=True, exist_ok=True)
            (target / f"{name}.json").write_text(text + "\n", encoding="utf-8")
            print(f"PRESET={name} FILE={target / f'{name}.json'}")
        else:
            print(f"# {name}\n{text}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1; exit 2 is reserved for blow-ups."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="sampled-stabilizer",
        description="Data-driven sampled-data stabilization: simulate, sweep, design, estimate.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__} (artifact {ARTIFACT_VERSION}, schema {SCHEMA_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(p: argparse.ArgumentParser) -> None:
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="Run config JSON file")
        src.add_argument("--preset", choices=preset_names(), help="Named preset")
        p.add_argument("--out", type=str, default=None, help="Output directory (default: DDS_OUTPUT_DIR)")

    p = sub.add_parser("simulate", help="Run one closed loop and write trace + summary")
    add_source(p)
    p.add_argument("--oracle", action="store_true", help="Also run the known-model baseline")
    p.add_argument("--emit-plots", action="store_true", help="Write a gnuplot script next to the CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="Run a named study")
    p.add_argument("--study", required=True, help=f"One of: {', '.join(STUDIES)}")
    add_source(p)
    p.add_argument("--workers", type=int, default=SWEEP_WORKERS, help="Worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("design", help="Virtual gain with Lyapunov certificate")
    p.add_argument("--n", type=int, required=True, help="Relative degree")
    p.add_argument("--poles", type=_floats, default=None, help="Comma-separated poles, e.g. -3,-3")
    p.add_argument("--k", type=_floats, default=None, help="Comma-separated explicit gain")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("estimate", help="Offline least-squares differentiator over a (t, y) CSV")
    p.add_argument("--input", required=True, help="CSV with 't' and 'y' columns")
    p.add_argument("--n", type=int, required=True, help="Relative degree")
    p.add_argument("--rho", type=int, required=True, help="Window length (>= n+1)")
    p.add_argument("--out", type=str, default=None, help="Output CSV path")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("presets", help="List or dump presets")
    p.add_argument("--out", type=str, default=None, help="Directory to write one JSON per preset")
    p.add_argument("--schema", action="store_true", help="Emit the run config JSON schema instead")
    p.set_defaults(func=cmd_presets)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL)
    parser = build_parser()
    args = parser.parse_args(_join_list_flags(sys.argv[1:] if argv is None else argv))

    try:
        return args.func(args)
    except ConfigError as e:
        print(f"ERROR={e}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUp as e:
        print(f"STATUS=blowup\nMESSAGE={e}")
        return EXIT_BLOWUP
    except (ControlError, ValueError, OSError) as e:
        print(f"ERROR={type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001
        logger.error(f"[CLI] unexpected failure: {e}", exc_info=True)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
