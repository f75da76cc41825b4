"""Frozen calibration constants for the implicit-constant inequalities.

The table is produced once by ``twlab calibrate`` over the golden seed set
and shipped with the package; verification runs assert measured ratios stay
within ``slack`` (default 1.05) times the frozen constant and fail loudly on
missing entries rather than inventing one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

DEFAULT_SLACK = 1.05


class CalibrationMissingError(KeyError):
    pass


@dataclass
class CalibrationTable:
    base_seed: int
    entries: dict = field(default_factory=dict)
    slack: float = DEFAULT_SLACK

    @staticmethod
    def _key(metric: str, scenario: str) -> str:
        return f"{metric}|{scenario}"

    def record(self, metric: str, scenario: str, measured: float, meta: dict | None = None):
        self.entries[self._key(metric, scenario)] = {
            "constant": float(measured), **({"meta": meta} if meta else {})}

    def constant(self, metric: str, scenario: str) -> float:
        key = self._key(metric, scenario)
        if key not in self.entries:
            raise CalibrationMissingError(
                f"no frozen constant for {key!r}; run `twlab calibrate` first")
        return float(self.entries[key]["constant"])

    def check(self, metric: str, scenario: str, measured: float) -> tuple[bool, float]:
        limit = self.constant(metric, scenario) * self.slack
        return measured <= limit, limit

    def to_json(self) -> dict:
        return {"base_seed": self.base_seed, "slack": self.slack,
                "entries": self.entries}

    @classmethod
    def from_json(cls, obj: dict) -> "CalibrationTable":
        return cls(base_seed=int(obj["base_seed"]),
                   entries=dict(obj.get("entries", {})),
                   slack=float(obj.get("slack", DEFAULT_SLACK)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationTable":
        return cls.from_json(json.loads(Path(path).read_text()))


def packaged_table() -> CalibrationTable:
    """The table shipped inside the package."""
    ref = resources.files("twlab").joinpath("data/calibration.json")
    return CalibrationTable.from_json(json.loads(ref.read_text()))


def calibrate(base_seed: int, instances: int = 200, trials: int = 1000,
              progress=None) -> CalibrationTable:
    """Run every calibrated suite over the golden scenarios and freeze the
    measured maxima."""
    from .config import RunConfig, SCENARIOS, scenario_config
    from .suites import CALIBRATED_METRICS, SUITE_RUNNERS

    table = CalibrationTable(base_seed=base_seed)
    base = RunConfig(seed=base_seed, instances=instances, trials=trials)
    for scenario in SCENARIOS:
        cfg = scenario_config(base, scenario)
        for suite in CALIBRATED_METRICS:
            if progress:
                progress(f"calibrating {suite} on {cfg.scenario_key()}")
            rec = SUITE_RUNNERS[suite](cfg, None)
            for metric, measured in CALIBRATED_METRICS[suite](rec).items():
                table.record(metric, cfg.scenario_key(), measured,
                             meta={"instances": rec.instances, "trials": rec.trials,
                                   "skipped": rec.skipped})
    return table
