"""Figure rendering for verification reports.

Figures are written next to the delimited output: one per-suite panel of
measured ratios against their calibration ceilings, and a summary grid of
pass/fail counts.  They are a reading aid; the JSON/CSV stay the canonical
artifacts.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

plt.rcParams.update({
    "figure.figsize": (6.0, 3.6),
    "font.size": 9,
    "axes.linewidth": 0.6,
    "axes.grid": True,
    "grid.linewidth": 0.3,
    "grid.alpha": 0.4,
})

PASS_COLOR = "#2b7a3d"
FAIL_COLOR = "#b03030"
LIMIT_COLOR = "#555555"


def _calibration_panel(ax, rec: dict) -> bool:
    cal = rec.get("details", {}).get("calibration")
    if not cal:
        return False
    names = sorted(cal)
    measured = [cal[k]["measured"] for k in names]
    limits = [cal[k]["limit"] for k in names]
    colors = [PASS_COLOR if cal[k]["ok"] else FAIL_COLOR for k in names]
    xs = range(len(names))
    ax.bar(xs, measured, color=colors, width=0.55, label="measured")
    ax.plot(xs, limits, "_", color=LIMIT_COLOR, markersize=24, label="frozen limit")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([k.split(".")[-1] for k in names], rotation=15, ha="right")
    ax.set_ylabel("worst ratio")
    ax.legend(loc="best", fontsize=8)
    return True


def _summary_panel(ax, report: dict) -> None:
    suites = report["suites"]
    names = [r["name"] for r in suites]
    viol = [r["violations"] for r in suites]
    colors = [PASS_COLOR if r["passed"] else FAIL_COLOR for r in suites]
    ax.barh(range(len(names)), [max(v, 0.04) for v in viol], color=colors, height=0.6)
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlabel("violations")


def render_report_figures(report: dict, out_dir: str | Path) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    fig, ax = plt.subplots()
    _summary_panel(ax, report)
    ax.set_title(f"suite outcomes ({report['suites'][0]['scenario']})"
                 if report["suites"] else "suite outcomes")
    fig.tight_layout()
    path = out / "summary.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(str(path))

    for rec in report["suites"]:
        fig, ax = plt.subplots()
        if _calibration_panel(ax, rec):
            ax.set_title(f"{rec['name']} on {rec['scenario']}")
        else:
            ax.bar([0], [rec["max_ratio"]],
                   color=PASS_COLOR if rec["passed"] else FAIL_COLOR, width=0.4)
            ax.set_xticks([0])
            ax.set_xticklabels(["worst ratio"])
            ax.set_title(f"{rec['name']} on {rec['scenario']} "
                         f"({rec['violations']} violations)")
        fig.tight_layout()
        path = out / f"{rec['name']}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(str(path))
    return written
