"""Trial records and the delimited trial-log format shared by the simulator and the fitters."""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError

OUTCOMES = ("correct", "hijack", "hallucination", "abstain")
CONTEXTS = ("no_state", "correct_state", "wrong_state")

COLUMNS = (
    "trial_id", "model_label", "n_exposed", "k_step", "gold_id", "chosen_id", "outcome",
    "p_a", "p_b", "observed_delta", "context",
)
_REQUIRED = COLUMNS[:7]


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    n_exposed: int
    gold_id: str
    chosen_id: str
    outcome: str
    k_step: int = 1
    model_label: str = "sim"
    context: str = "no_state"
    p_a: float | None = None
    p_b: float | None = None
    observed_delta: float | None = None

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if self.context not in CONTEXTS:
            raise ValueError(f"unknown context {self.context!r}")
        if (self.outcome == "correct") != (self.chosen_id == self.gold_id):
            raise ValueError(f"trial {self.trial_id}: outcome/choice mismatch")

    @property
    def correct(self) -> bool:
        return self.outcome == "correct"


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def format_trials(records: Iterable[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        writer.writerow([
            r.trial_id, r.model_label, r.n_exposed, r.k_step, r.gold_id, r.chosen_id, r.outcome,
            _fmt(r.p_a), _fmt(r.p_b), _fmt(r.observed_delta), r.context,
        ])
    return buf.getvalue()


def write_trials(records: Iterable[TrialRecord], path: str | Path) -> None:
    Path(path).write_text(format_trials(records), encoding="utf-8")


def _opt_float(row: dict, key: str) -> float | None:
    v = (row.get(key) or "").strip()
    return float(v) if v else None


def read_trials(path: str | Path) -> list[TrialRecord]:
    label = str(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in _REQUIRED if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(label, missing[0], "missing trial-log column")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                out.append(
                    TrialRecord(
                        trial_id=row["trial_id"],
                        model_label=row["model_label"],
                        n_exposed=int(row["n_exposed"]),
                        k_step=int(row["k_step"] or 1),
                        gold_id=row["gold_id"],
                        chosen_id=row["chosen_id"],
                        outcome=row["outcome"],
                        p_a=_opt_float(row, "p_a"),
                        p_b=_opt_float(row, "p_b"),
                        observed_delta=_opt_float(row, "observed_delta"),
                        context=(row.get("context") or "no_state").strip(),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise ParseError(f"{label}:{line}", "row", str(exc)) from None
    return out


def read_columns(path: str | Path, columns: Iterable[str]) -> list[tuple[float, ...]]:
    """Read named numeric columns from any delimited file with a header row."""
    columns = list(columns)
    label = str(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for c in columns:
            if c not in (reader.fieldnames or []):
                raise ParseError(label, c, "missing column")
        rows = []
        for line, row in enumerate(reader, start=2):
            if any(not (row[c] or "").strip() for c in columns):
                continue
            try:
                rows.append(tuple(float(row[c]) for c in columns))
            except ValueError as exc:
                raise ParseError(f"{label}:{line}", "row", str(exc)) from None
    return rows


def write_columns(rows: Iterable[Iterable[object]], header: Iterable[str], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
