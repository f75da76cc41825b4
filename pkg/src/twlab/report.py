"""Report assembly and persistence: canonical JSON (a pure function of the
configuration), a delimited ratio table, and rendered figures.

Wall-clock timings are written to a separate sidecar file so the canonical
report stays byte-identical across reruns of the same configuration.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

from .calibration import CalibrationTable
from .config import RunConfig
from .suites import SuiteRecord, run_suite


def run_suites(config: RunConfig, calibration: CalibrationTable | None):
    records: list[SuiteRecord] = []
    timings: dict[str, float] = {}
    for name in config.suites:
        t0 = time.perf_counter()
        records.append(run_suite(name, config, calibration))
        timings[name] = time.perf_counter() - t0
    return records, timings


def build_report(config: RunConfig, records: list[SuiteRecord]) -> dict:
    return {
        "config": config.to_json(),
        "suites": [r.to_json() for r in records],
        "passed": all(r.passed for r in records),
    }


def report_rows(report: dict) -> list[dict]:
    rows = []
    for rec in report["suites"]:
        base = {
            "suite": rec["name"], "scenario": rec["scenario"],
            "instances": rec["instances"], "trials": rec["trials"],
            "skipped": rec["skipped"], "violations": rec["violations"],
        }
        cal = rec.get("details", {}).get("calibration")
        if cal:
            for metric, entry in sorted(cal.items()):
                rows.append({**base, "metric": metric,
                             "value": entry["measured"], "limit": entry["limit"],
                             "ok": entry["ok"]})
        else:
            rows.append({**base, "metric": "max_ratio",
                         "value": rec["max_ratio"], "limit": "",
                         "ok": rec["passed"]})
    return rows


def write_report(report: dict, out_prefix: str | Path, timings: dict | None = None,
                 figures: bool = True) -> dict:
    """Write {prefix}.json, {prefix}.csv, optional figures, and the timing
    sidecar; returns the file map."""
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    files = {}
    json_path = prefix.with_suffix(".json")
    json_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    files["json"] = str(json_path)

    csv_path = prefix.with_suffix(".csv")
    rows = report_rows(report)
    fieldnames = ["suite", "scenario", "metric", "value", "limit", "ok",
                  "instances", "trials", "skipped", "violations"]
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    files["csv"] = str(csv_path)

    if figures:
        from .figures import render_report_figures
        files["figures"] = render_report_figures(report, prefix.parent / f"{prefix.name}_figures")

    if timings is not None:
        timing_path = prefix.parent / f"{prefix.name}.timing.json"
        timing_path.write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
        files["timing"] = str(timing_path)
    return files
