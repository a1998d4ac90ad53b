"""Result bundles: manifest.json, summary.csv, profile_<tag>.csv and fit_summary.csv.

CSV numbers use 17 significant digits so every double round-trips exactly;
missing values are written as empty fields.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .harness import RunRecord, SweepResult

SUMMARY_HEADER = ("trial", "E", "eta", "Lambda", "Phi", "max_T_minus_Theta", "residual_ratio", "deloc_fraction")
PROFILE_VALUE_COLUMNS = ("Theta", "theta_closed", "Upsilon", "T_trial_mean")
FIT_HEADER = ("axis_value", "statistic", "value", "fitted_slope", "stderr")


def fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, str)):
        return str(value)
    v = float(value)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_summary(record: RunRecord, path: Path) -> None:
    _write_rows(path, SUMMARY_HEADER, ([row[k] for k in SUMMARY_HEADER] for row in record.rows))


def write_table(table: dict[str, list], path: Path) -> None:
    header = list(table.keys())
    n = len(next(iter(table.values())))
    _write_rows(path, header, ([table[h][i] for h in header] for i in range(n)))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj


def manifest_payload(record: RunRecord, config: Optional[dict] = None, extra: Optional[dict] = None) -> dict:
    body = {
        "config": config,
        "spec": record.spec,
        "seed": record.provenance.get("master_seed"),
        "version": record.provenance.get("version"),
        "provenance": record.provenance,
        "aggregates": record.aggregates,
        "deterministic": record.deterministic,
        "files": {"summary": "summary.csv", "profiles": [f"profile_{t}.csv" for t in record.profiles]},
        "timing": record.timing,
    }
    if extra:
        body.update(extra)
    return _jsonable(body)


def write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_bundle(record: RunRecord, out_dir, config: Optional[dict] = None, extra: Optional[dict] = None,
                 formats: Sequence[str] = ("json", "csv")) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out / "manifest.json"
        write_json(manifest_payload(record, config, extra), p)
        written.append(p)
    if "csv" in formats:
        p = out / "summary.csv"
        write_summary(record, p)
        written.append(p)
        for tag, table in record.profiles.items():
            p = out / f"profile_{tag}.csv"
            write_table(table, p)
            written.append(p)
    return written


def write_fit_summary(result: SweepResult, path: Path) -> None:
    rows = []
    for fit in result.fits:
        for x, v in zip(fit.axis_values, fit.values):
            rows.append((x, fit.statistic, v, fit.slope, fit.stderr))
    _write_rows(path, FIT_HEADER, rows)


def read_csv(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
