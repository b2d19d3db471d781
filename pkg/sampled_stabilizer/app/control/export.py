"""
Export
Trace CSV, KEY=VALUE summaries, study point tables and gnuplot scripts.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.config import CSV_SIGNIFICANT_DIGITS
from app.control.simloop import Trace
from app.models.schemas import StudyReport

logger = logging.getLogger(__name__)


def fmt(x: Any) -> str:
    """Floats with fixed significant digits; everything else via str."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return f"{x:.{CSV_SIGNIFICANT_DIGITS}g}"
    if x is None:
        return ""
    return str(x)


def trace_header(n: int) -> List[str]:
    return (
        ["k", "t"]
        + [f"z{i}" for i in range(1, n + 1)]
        + ["y", "d"]
        + [f"zhat{i}" for i in range(1, n + 2)]
        + ["u", "v", "e_u", "Vz", "Veu", "W"]
    )


def trace_rows(trace: Trace) -> Iterable[List[str]]:
    for i in range(len(trace)):
        row: List[Any] = [int(trace.k[i]), float(trace.t[i])]
        row += [float(x) for x in trace.z[i]]
        row += [float(trace.y[i]), float(trace.d[i])]
        row += [float(x) for x in trace.z_hat[i]]
        row += [float(trace.u[i]), float(trace.v[i]), float(trace.e_u[i]),
                float(trace.Vz[i]), float(trace.Veu[i]), float(trace.W[i])]
        yield [fmt(x) for x in row]


def write_trace_csv(trace: Trace, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(trace_header(trace.n))
        writer.writerows(trace_rows(trace))
    logger.info(f"[Export] wrote {len(trace)} records to {path}")
    return path


def write_summary(values: Dict[str, Any], path: Path) -> Path:
    """One KEY=VALUE per line, keys upper-cased."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key.upper()}={fmt(val)}" for key, val in values.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def report_summary(report: StudyReport) -> Dict[str, Any]:
    values: Dict[str, Any] = {"study": report.study, "preset": report.preset}
    for key, val in report.fits.items():
        if isinstance(val, (list, tuple)):
            val = json.dumps(val)
        values[f"fit_{key}"] = val
    for check in report.checks:
        values[f"check_{check.name}"] = "PASS" if check.passed else "FAIL"
        if check.value is not None:
            values[f"value_{check.name}"] = check.value
    values["verdict"] = "PASS" if report.passed else "FAIL"
    return values


def write_points_csv(report: StudyReport, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keys: List[str] = []
    for p in report.points:
        keys += [k for k in p if k not in keys]
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(keys)
        for p in report.points:
            writer.writerow([fmt(p.get(k)) for k in keys])
    return path


def write_report(report: StudyReport, out_dir: Path) -> Tuple[Path, Path, Path]:
    out_dir = Path(out_dir)
    stem = f"{report.preset}_{report.study}"
    points = write_points_csv(report, out_dir / f"{stem}.csv")
    summary = write_summary(report_summary(report), out_dir / f"{stem}_summary.txt")
    full = out_dir / f"{stem}.json"
    full.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return points, summary, full


def write_gnuplot(
    csv_path: Path,
    n: int,
    path: Path,
    oracle_csv: Optional[Path] = None,
    title: str = "",
) -> Path:
    """Four stacked panels: output, z2, input (against the oracle run when given), W on a log scale."""
    csv_path = Path(csv_path)
    col = {name: i + 1 for i, name in enumerate(trace_header(n))}
    data = csv_path.name
    t = col["t"]

    u_plot = f"plot '{data}' using {t}:{col['u']} with lines title 'u'"
    if oracle_csv is not None:
        u_plot += f", \\\n     '{Path(oracle_csv).name}' using {t}:{col['u']} with lines title 'u oracle'"
    z2_plot = (
        f"plot '{data}' using {t}:{col['z2']} with lines title 'z2'"
        if n >= 2
        else f"plot '{data}' using {t}:{col['zhat2']} with lines title 'zhat2'"
    )

    script = "\n".join([
        "set datafile separator ','",
        "set terminal pngcairo size 900,1100",
        f"set output '{csv_path.stem}.png'",
        "set multiplot layout 4,1" + (f" title '{title}'" if title else ""),
        "set xlabel 't [s]'",
        "set ylabel 'z1'",
        f"plot '{data}' using {t}:{col['y']} with dots title 'y', \\",
        f"     '' using {t}:{col['z1']} with lines title 'z1'",
        "set ylabel 'z2'",
        z2_plot,
        "set ylabel 'u'",
        u_plot,
        "set ylabel 'W'",
        "set logscale y",
        f"plot '{data}' using {t}:{col['W']} with lines title 'W'",
        "unset multiplot",
        "",
    ])
    path = Path(path)
    path.write_text(script, encoding="utf-8")
    return path


def read_samples_csv(path: Path) -> Tuple[List[float], List[float]]:
    """(t, y) columns from a CSV with a header naming them."""
    path = Path(path)
    times: List[float] = []
    outputs: List[float] = []
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"t", "y"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain 't' and 'y' columns")
        for line, row in enumerate(reader, start=2):
            try:
                times.append(float(row["t"]))
                outputs.append(float(row["y"]))
            except (TypeError, ValueError) as e:
                raise ValueError(f"{path}:{line}: {e}") from e
    return times, outputs


def write_estimates_csv(rows: Sequence[Tuple[float, np.ndarray]], n: int, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t"] + [f"zhat{i}" for i in range(1, n + 2)])
        for t, z in rows:
            writer.writerow([fmt(t)] + [fmt(float(x)) for x in z])
    return path
