"""ADL and YCB benchmark ingestion and scoring.

ADL records carry task timing plus a 0..3 completion-quality score; YCB
trials are points awarded vs possible per object. Both arrive as CSV with
header-name based column mapping (two accepted ADL header dialects).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional


class MissingColumn(ValueError):
    """Neither accepted header variant names the required column."""


class MalformedNumber(ValueError):
    def __init__(self, row: int, column: str, detail: str):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {detail}")


class NoScores(ValueError):
    """score_adl needs at least one scored record."""


class EmptyTrials(ValueError):
    """score_ycb needs at least one trial."""


@dataclass(frozen=True)
class AdlRecord:
    task_category: str
    specific_task: str
    human_time_s: float
    reglove_time_s: float
    score: Optional[float] = None
    failure_rate_pct: Optional[float] = None


@dataclass(frozen=True)
class YcbTrial:
    object_name: str
    points_awarded: float
    points_possible: float

    def __post_init__(self) -> None:
        if self.points_possible <= 0:
            raise ValueError("points_possible must be > 0")
        if not 0 <= self.points_awarded <= self.points_possible:
            raise ValueError("points_awarded must lie in [0, points_possible]")


def _norm(header: str) -> str:
    return " ".join(header.strip().lower().replace("--", "-").split())


# Header dialects: the tabular form and the plot-data form.
_TASK_COLUMNS = ("specific task", "tasks")
_CATEGORY_COLUMNS = ("task category",)
_HUMAN_COLUMNS = ("human time (s)", "avg human execution time (s)")
_REGLOVE_COLUMNS = ("reglove time (s)", "avg reglove execution time (s)")
_SCORE_COLUMNS = ("score (0-3)",)
_FAILURE_COLUMNS = ("failure rate (%)",)


def _find(normalized: dict[str, str], candidates: tuple[str, ...]) -> Optional[str]:
    for cand in candidates:
        if cand in normalized:
            return normalized[cand]
    return None


def _parse_float(
    raw: str, row_idx: int, column: str, lo: float = -math.inf, hi: float = math.inf
) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise MalformedNumber(row_idx, column, f"{raw!r} is not a number") from None
    if not math.isfinite(value):
        raise MalformedNumber(row_idx, column, f"{raw!r} is not finite")
    if not lo <= value <= hi:
        raise MalformedNumber(row_idx, column, f"{value} outside [{lo}, {hi}]")
    return value


def load_adl_csv(path: str | Path) -> list[AdlRecord]:
    """Header-name based ADL ingestion accepting both published dialects.

    Unknown columns are ignored; score and failure-rate bounds are enforced
    at load so downstream scoring never sees an out-of-range record.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MissingColumn("empty file: no header row")
        normalized = {_norm(name): name for name in reader.fieldnames if name}
        task_col = _find(normalized, _TASK_COLUMNS)
        if task_col is None:
            raise MissingColumn(
                f"no task column; expected one of {_TASK_COLUMNS}, got {reader.fieldnames}"
            )
        human_col = _find(normalized, _HUMAN_COLUMNS)
        reglove_col = _find(normalized, _REGLOVE_COLUMNS)
        if human_col is None or reglove_col is None:
            raise MissingColumn("missing human/reglove time columns")
        category_col = _find(normalized, _CATEGORY_COLUMNS)
        score_col = _find(normalized, _SCORE_COLUMNS)
        failure_col = _find(normalized, _FAILURE_COLUMNS)

        records = []
        for row_idx, row in enumerate(reader, start=2):  # header is line 1
            task = (row.get(task_col) or "").strip()
            if not task:
                continue
            score = None
            if score_col is not None and (row.get(score_col) or "").strip():
                score = _parse_float(row[score_col], row_idx, score_col, 0.0, 3.0)
            failure = None
            if failure_col is not None and (row.get(failure_col) or "").strip():
                failure = _parse_float(row[failure_col], row_idx, failure_col, 0.0, 100.0)
            records.append(
                AdlRecord(
                    task_category=(row.get(category_col) or "").strip() if category_col else "",
                    specific_task=task,
                    human_time_s=_parse_float(row.get(human_col), row_idx, human_col, 0.0),
                    reglove_time_s=_parse_float(row.get(reglove_col), row_idx, reglove_col, 0.0),
                    score=score,
                    failure_rate_pct=failure,
                )
            )
    return records


def score_adl(records: list[AdlRecord]) -> dict:
    """Mean and population sigma of scores, plus the mean reglove/human time ratio."""
    scored = [r.score for r in records if r.score is not None]
    if not scored:
        raise NoScores("no record carries a score")
    n = len(scored)
    mean = sum(scored) / n
    std = math.sqrt(sum((s - mean) ** 2 for s in scored) / n)
    ratios = [r.reglove_time_s / r.human_time_s for r in records if r.human_time_s > 0]
    return {
        "mean_score": mean,
        "std_score": std,
        "n": n,
        "mean_time_ratio": (sum(ratios) / len(ratios)) if ratios else None,
    }


_YCB_OBJECT = ("object", "object name", "object_name")
_YCB_AWARDED = ("points awarded", "points_awarded", "awarded")
_YCB_POSSIBLE = ("points possible", "points_possible", "possible")


def load_ycb_csv(path: str | Path) -> list[YcbTrial]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MissingColumn("empty file: no header row")
        normalized = {_norm(name): name for name in reader.fieldnames if name}
        obj_col = _find(normalized, _YCB_OBJECT)
        awarded_col = _find(normalized, _YCB_AWARDED)
        possible_col = _find(normalized, _YCB_POSSIBLE)
        if obj_col is None or awarded_col is None or possible_col is None:
            raise MissingColumn(f"need object/awarded/possible columns, got {reader.fieldnames}")
        trials = []
        for row_idx, row in enumerate(reader, start=2):
            name = (row.get(obj_col) or "").strip()
            if not name:
                continue
            awarded = _parse_float(row.get(awarded_col), row_idx, awarded_col, 0.0)
            possible = _parse_float(row.get(possible_col), row_idx, possible_col)
            if possible <= 0:
                raise MalformedNumber(row_idx, possible_col, f"{possible} must be > 0")
            if awarded > possible:
                raise MalformedNumber(row_idx, awarded_col, f"{awarded} exceeds possible {possible}")
            trials.append(YcbTrial(name, awarded, possible))
    return trials


def score_ycb(trials: list[YcbTrial]) -> dict:
    """Success rate as 100 * total awarded / total possible."""
    if not trials:
        raise EmptyTrials("no trials")
    points = sum(t.points_awarded for t in trials)
    possible = sum(t.points_possible for t in trials)
    return {
        "success_rate_pct": 100.0 * points / possible,
        "points": points,
        "possible": possible,
        "n": len(trials),
    }
