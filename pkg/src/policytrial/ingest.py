"""Reading case-count and policy CSVs and turning them into outcome panels."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import math
from dataclasses import dataclass

from .errors import (
    DuplicateObservation,
    DuplicateUnit,
    EmptyInput,
    InvalidCount,
    MissingSeries,
    ParseError,
)
from .panel import PanelDataset, TimeMode, TreatmentSchedule, align, date_to_offset
from .report import Report


class OutcomeKind(str, enum.Enum):
    LOG_CASES = "log-cases"
    LOG_GROWTH = "log-growth"
    RAW_CASES = "raw-cases"
    RAW_GROWTH = "raw-growth"


@dataclass(frozen=True)
class OutcomeSpec:
    kind: OutcomeKind = OutcomeKind.LOG_GROWTH
    min_count_threshold: int = 10

    def __post_init__(self):
        object.__setattr__(self, "kind", OutcomeKind(self.kind))
        if self.min_count_threshold < 1:
            raise ValueError("min_count_threshold must be >= 1")


@dataclass(frozen=True)
class RawCaseSeries:
    unit: str
    entries: tuple[tuple[dt.date, int], ...]

    def count_on(self, day: dt.date) -> int | None:
        for d, c in self.entries:
            if d == day:
                return c
        return None


def _text_stream(stream):
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(bytes(stream).decode("utf-8-sig"))
    if isinstance(stream, str):
        return io.StringIO(stream)
    if isinstance(stream, io.TextIOBase):
        return stream
    return io.TextIOWrapper(stream, encoding="utf-8-sig", newline="")


def _parse_date(text: str, line: int) -> dt.date:
    text = text.strip()
    if len(text) != 10:
        raise ParseError(f"expected YYYY-MM-DD date, got {text!r}", line)
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise ParseError(f"expected YYYY-MM-DD date, got {text!r}", line) from None


def _reader(stream, required: tuple[str, ...]):
    reader = csv.reader(_text_stream(stream))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyInput("file is empty") from None
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"header lacks column(s) {', '.join(missing)}", 1)
    cols = [header.index(c) for c in required]
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
        yield lineno, [row[i] for i in cols]


def parse_cases(stream, report: Report | None = None) -> list[RawCaseSeries]:
    """Parse a ``date,state,cases`` file of cumulative counts.

    Extra columns (``fips``, ``deaths`` in the NYT layout) are ignored. Dates
    may have gaps; decreasing cumulative counts are kept and noted in
    ``report``.
    """
    by_unit: dict[str, dict[dt.date, int]] = {}
    for lineno, (date_s, unit, cases_s) in _reader(stream, ("date", "state", "cases")):
        day = _parse_date(date_s, lineno)
        unit = unit.strip()
        if not unit:
            raise ParseError("empty state name", lineno)
        try:
            count = int(cases_s.strip())
        except ValueError:
            raise ParseError(f"cases must be an integer, got {cases_s!r}", lineno) from None
        if count < 0:
            raise InvalidCount(f"negative count {count}", lineno)
        entries = by_unit.setdefault(unit, {})
        if day in entries:
            raise DuplicateObservation(f"second row for ({unit}, {day})", lineno)
        entries[day] = count

    out = []
    for unit in sorted(by_unit):
        entries = tuple(sorted(by_unit[unit].items()))
        if report is not None:
            for (d0, c0), (d1, c1) in zip(entries, entries[1:]):
                if c1 < c0:
                    report.add("revision", unit, f"cumulative count fell from {c0} to {c1} on {d1}")
        out.append(RawCaseSeries(unit, entries))
    return out


def parse_policy(stream, epoch: dt.date | None = None) -> TreatmentSchedule:
    """Parse a ``state,order_date`` file; an empty date means never adopted."""
    dates: dict[str, dt.date | None] = {}
    for lineno, (unit, date_s) in _reader(stream, ("state", "order_date")):
        unit = unit.strip()
        if not unit:
            raise ParseError("empty state name", lineno)
        if unit in dates:
            raise DuplicateUnit(f"{unit} listed twice", lineno)
        dates[unit] = _parse_date(date_s, lineno) if date_s.strip() else None
    if not dates:
        raise EmptyInput("policy file lists no units")
    if epoch is None:
        dated = [d for d in dates.values() if d is not None]
        epoch = min(dated) if dated else dt.date(1970, 1, 1)
    return TreatmentSchedule(
        {u: None if d is None else date_to_offset(d, epoch) for u, d in dates.items()},
        TimeMode.CALENDAR,
        epoch,
    )


def transform_outcome(
    series: list[RawCaseSeries], spec: OutcomeSpec, report: Report | None = None
) -> PanelDataset:
    """Build a calendar-time panel of the requested outcome.

    Points where the outcome is undefined (log of zero, no adjacent previous
    day) are simply absent. The epoch is the earliest date in ``series``.
    """
    if not series:
        raise EmptyInput("no case series")
    days = [d for s in series for d, _ in s.entries]
    if not days:
        raise EmptyInput("case series contain no rows")
    epoch = min(days)
    kind = spec.kind
    values = {}
    for s in series:
        prev_day, prev = None, None
        for day, count in s.entries:
            t = date_to_offset(day, epoch)
            adjacent = prev_day is not None and (day - prev_day).days == 1
            if kind is OutcomeKind.LOG_CASES:
                if count >= 1:
                    values[(s.unit, t)] = math.log(count)
            elif kind is OutcomeKind.RAW_CASES:
                values[(s.unit, t)] = float(count)
            elif kind is OutcomeKind.LOG_GROWTH:
                if adjacent and count >= 1 and prev >= 1:
                    values[(s.unit, t)] = math.log(count / prev)
            elif adjacent:
                values[(s.unit, t)] = float(count - prev)
            prev_day, prev = day, count
    panel = PanelDataset(
        values,
        time_mode=TimeMode.CALENDAR,
        outcome_label=kind.value,
        epoch=epoch,
        units=tuple(s.unit for s in series),
    )
    if report is not None:
        for u in panel.empty_units():
            report.add("empty", u, f"no defined {kind.value} observations")
    return panel


def threshold_day(series: RawCaseSeries, threshold: int) -> dt.date | None:
    for day, count in series.entries:
        if count >= threshold:
            return day
    return None


def to_case_time(
    panel: PanelDataset,
    raw: list[RawCaseSeries],
    schedule: TreatmentSchedule,
    threshold: int = 10,
    report: Report | None = None,
) -> tuple[PanelDataset, TreatmentSchedule, dict[str, str]]:
    """Re-index a calendar panel and schedule by days since ``threshold`` cases.

    Returns the case-time panel, the case-time schedule and a mapping of
    excluded units to the reason for exclusion.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    panel, schedule = align(panel, schedule)
    by_unit = {s.unit: s for s in raw}
    missing = [u for u in panel.units if u not in by_unit]
    if missing:
        raise MissingSeries(f"no raw case series for: {', '.join(missing)}")

    zero: dict[str, int] = {}
    excluded: dict[str, str] = {}
    for u in schedule.units:
        if u not in by_unit:
            excluded[u] = "no case series"
            continue
        day = threshold_day(by_unit[u], threshold)
        if day is None:
            excluded[u] = f"never reached {threshold} cases"
        else:
            zero[u] = date_to_offset(day, panel.epoch)

    values = {(u, t - zero[u]): v for (u, t), v in panel.values.items() if u in zero}
    case_panel = PanelDataset(
        values,
        time_mode=TimeMode.CASE,
        outcome_label=panel.outcome_label,
        epoch=None,
        units=tuple(u for u in panel.units if u in zero),
    )
    case_schedule = TreatmentSchedule(
        {u: None if a is None else a - zero[u] for u, a in schedule.adoption.items() if u in zero},
        TimeMode.CASE,
        None,
    )
    if report is not None:
        for u, why in sorted(excluded.items()):
            report.add("excluded", u, why)
    return case_panel, case_schedule, excluded


def log_to_percent(x: float) -> float:
    """Convert a log-scale difference to a proportional change, ``exp(x) - 1``."""
    return math.expm1(x)
