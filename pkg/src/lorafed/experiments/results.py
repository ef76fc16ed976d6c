"""Plot-ready result files and the run manifest."""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path
from typing import Iterable

from .. import __version__
from ..engine.metrics import METRIC_NAMES
from ..radio import CALIBRATED_PHY, time_on_air
from .sweep import SweepTable

CSV_HEADER = ("device_count", "mode", "metric_mean", "metric_std")


def _writable_dir(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def emit_results(table: SweepTable, out_dir: str | Path,
                 formats: Iterable[str] = ("csv", "json"),
                 metrics: Iterable[str] = METRIC_NAMES) -> list[Path]:
    """One file per metric and format: x = device_count, one series per mode."""
    if not table.runs:
        raise ValueError("refusing to emit an empty result table")
    out = _writable_dir(Path(out_dir))
    written = []
    for metric in metrics:
        rows = [(n, s, *table.aggregate(s, n, metric))
                for s in table.series() for n in table.counts()
                if table.values(s, n, metric)]
        for fmt in formats:
            path = out / f"{metric}.{fmt}"
            try:
                if fmt == "csv":
                    with path.open("w", newline="", encoding="utf-8") as fh:
                        w = csv.writer(fh, lineterminator="\n")
                        w.writerow(CSV_HEADER)
                        w.writerows(rows)
                elif fmt == "json":
                    series: dict[str, list] = {}
                    for n, s, mean, std in rows:
                        series.setdefault(s, []).append(
                            {"device_count": n, "mean": mean, "std": std})
                    path.write_text(json.dumps({"metric": metric, "series": series},
                                               indent=2, sort_keys=True) + "\n")
                else:
                    raise ValueError(f"unknown format {fmt!r}")
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc}") from exc
            written.append(path)
    return written


def calibration_note() -> dict:
    sf7 = time_on_air(1, 7, CALIBRATED_PHY)
    sf12 = time_on_air(1, 12, CALIBRATED_PHY)
    return {"sf7_1byte_ms": sf7 * 1e3, "sf12_1byte_ms": sf12 * 1e3,
            "sf7_target_ms": 77.06, "sf12_target_ms": 1810.4,
            "sf7_deviation": sf7 * 1e3 / 77.06 - 1, "sf12_deviation": sf12 * 1e3 / 1810.4 - 1}


def write_manifest(table: SweepTable, out_dir: str | Path, extra: dict | None = None) -> Path:
    out = _writable_dir(Path(out_dir))
    manifest = {
        "package_version": __version__,
        "python": platform.python_version(),
        "calibration": calibration_note(),
        "configs": table.configs,
        "runs": [{"series": r.key.series, "device_count": r.key.device_count,
                  "seed": r.key.seed, "metrics": r.metrics.core(),
                  "log_sha256": r.log_digest, "audit": r.audit} for r in table.runs],
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path
