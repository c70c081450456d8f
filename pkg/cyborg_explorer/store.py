"""Study output directories.

One directory per study::

    <out>/config.yaml            config snapshot
    <out>/trials/trial_NNN.json  one record per trial
    <out>/summary.json           records + aggregates
    <out>/*.csv, *.svg           traces and charts
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from pathlib import Path
from typing import Iterable

from .config import ExplorerConfig, dump_config
from .errors import EmptySummaryError
from .models import TrialRecord
from .utils import write_json

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
REPORT_FILE = "report.json"
TRAJECTORY_COLUMNS = ("t", "x", "y", "yaw", "phase")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


class StudyStore:
    """Writes and reads the artifacts of one study directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def trials_dir(self) -> Path:
        return self.root / "trials"

    @property
    def summary_path(self) -> Path:
        return self.root / SUMMARY_FILE

    def prepare(self) -> StudyStore:
        self.root.mkdir(parents=True, exist_ok=True)
        return self

    def write_config(self, config: ExplorerConfig) -> Path:
        path = self.prepare().root / "config.yaml"
        path.write_text(dump_config(config), encoding="utf-8")
        return path

    def write_trial(self, record: TrialRecord) -> Path:
        return write_json(self.trials_dir / f"trial_{record.index:03d}.json", dataclasses.asdict(record))

    def write_trials(self, records: Iterable[TrialRecord]) -> list[Path]:
        return [self.write_trial(r) for r in records]

    def write_summary(self, summary: dict) -> Path:
        path = write_json(self.summary_path, summary)
        logger.info("Summary written to %s", path)
        return path

    def write_report(self, report: dict) -> Path:
        return write_json(self.root / REPORT_FILE, report)

    def write_csv(self, name: str, header: Iterable[str], rows: Iterable[Iterable]) -> Path:
        path = self.prepare().root / name
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(list(header))
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return path

    def write_trajectory(self, rows: Iterable[Iterable], name: str = "trajectory.csv") -> Path:
        return self.write_csv(name, TRAJECTORY_COLUMNS, rows)

    def load_summary(self) -> dict:
        return read_summary(self.root)


def read_summary(path: str | Path) -> dict:
    """Load ``summary.json`` from a study directory or a direct file path."""
    path = Path(path)
    if path.is_dir():
        path = path / SUMMARY_FILE
    if not path.exists():
        raise EmptySummaryError(f"no summary at {path}")
    with open(path, encoding="utf-8") as f:
        return json.load(f)
