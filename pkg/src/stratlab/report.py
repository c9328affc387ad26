"""Report emission.

Each experiment writes ``<label>.csv`` and ``<label>.summary.txt``.

CSV schema (comma separated, ``\\n`` line ends, numbers as ``repr``-free
``.17g``)::

    member_id,lhs,rhs,ratio
    <one row per member, sorted by member_id>
    summary,<passed>,<n members>,<constant>

The summary record holds one ``key = value`` line per field in the fixed
order of :data:`SUMMARY_KEYS`.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from .lab import ExperimentReport

HEADER = ("member_id", "lhs", "rhs", "ratio")
SUMMARY_KEYS = ("experiment_id", "label", "params", "constant", "slope", "halfwidth", "verdicts", "passed", "flags",
                "runtime_s")


class ReportError(OSError):
    pass


def fmt(x) -> str:
    """17 significant digits, always with a ``.`` decimal point."""
    if isinstance(x, (bool,)):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def csv_lines(report: ExperimentReport) -> list[str]:
    lines = [",".join(HEADER)]
    for mid, lhs, rhs, ratio in sorted(report.rows, key=lambda r: str(r[0])):
        lines.append(",".join((str(mid), fmt(lhs), fmt(rhs), fmt(ratio))))
    lines.append(",".join(("summary", "PASS" if report.passed else "FAIL", str(len(report.rows)),
                           fmt(report.constant))))
    return lines


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def summary_record(report: ExperimentReport, label: str) -> dict:
    values = {
        "experiment_id": report.experiment_id,
        "label": label,
        "params": _plain(report.params),
        "constant": _plain(report.constant),
        "slope": _plain(report.slope),
        "halfwidth": _plain(report.halfwidth),
        "verdicts": _plain(report.verdicts),
        "passed": report.passed,
        "flags": list(report.flags),
        "runtime_s": round(report.runtime, 3),
    }
    return {k: values[k] for k in SUMMARY_KEYS}


def emit_report(report: ExperimentReport, out_dir, label: str | None = None) -> tuple[Path, Path]:
    """Write the CSV and summary record; returns both paths."""
    label = label or report.experiment_id
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{label}.csv"
        csv_path.write_text("\n".join(csv_lines(report)) + "\n", encoding="utf-8", newline="")
        rec = summary_record(report, label)
        txt = "\n".join(f"{k} = {json.dumps(v, ensure_ascii=False)}" for k, v in rec.items()) + "\n"
        sum_path = out / f"{label}.summary.txt"
        sum_path.write_text(txt, encoding="utf-8", newline="")
    except OSError as exc:
        raise ReportError(f"cannot write reports to {out}: {exc}") from None
    return csv_path, sum_path
