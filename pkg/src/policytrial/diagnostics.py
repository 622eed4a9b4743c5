"""Placebo (pre-trend) summaries and adoption-timing tables.

These are descriptive. Small placebo estimates do not establish parallel
trends: with few units the check has little power, and no verdict is issued.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .did import EventStudyEstimate
from .errors import NoData
from .panel import TreatmentSchedule


@dataclass(frozen=True)
class PlaceboPoint:
    event_time: int
    estimate: float
    se: float | None
    ratio: float | None


@dataclass(frozen=True)
class PreTrendReport:
    reference_offset: int
    points: tuple[PlaceboPoint, ...]
    max_abs_placebo: float
    n_large: int
    fitted_pre_slope: float | None

    def to_dict(self) -> dict:
        return {
            "reference_offset": self.reference_offset,
            "max_abs_placebo": self.max_abs_placebo,
            "n_large": self.n_large,
            "fitted_pre_slope": self.fitted_pre_slope,
            "placebos": [
                {"event_time": p.event_time, "estimate": p.estimate, "se": p.se, "ratio": p.ratio}
                for p in self.points
            ],
        }

    def to_text(self) -> str:
        slope = "n/a" if self.fitted_pre_slope is None else f"{self.fitted_pre_slope:.6g}"
        lines = [
            f"placebo estimates (k < 0, k != {self.reference_offset}): {len(self.points)}",
            f"max |placebo|: {self.max_abs_placebo:.6g}",
            f"|estimate/se| > 2: {self.n_large}",
            f"least-squares pre-trend slope: {slope}",
        ]
        return "\n".join(lines) + "\n"


def pretrend_report(estimates: list[EventStudyEstimate], reference_offset: int = -1) -> PreTrendReport:
    pts = []
    for e in sorted(estimates, key=lambda e: e.event_time):
        if e.event_time >= 0 or e.event_time == reference_offset:
            continue
        ratio = e.estimate / e.se if e.se else None
        pts.append(PlaceboPoint(e.event_time, e.estimate, e.se, ratio))
    if not pts:
        raise NoData("no placebo estimates")
    slope = None
    if len(pts) >= 2:
        k = np.array([p.event_time for p in pts], dtype=float)
        y = np.array([p.estimate for p in pts])
        kc = k - k.mean()
        slope = float((kc * (y - y.mean())).sum() / (kc * kc).sum())
    return PreTrendReport(
        reference_offset,
        tuple(pts),
        max(abs(p.estimate) for p in pts),
        sum(1 for p in pts if p.ratio is not None and abs(p.ratio) > 2),
        slope,
    )


@dataclass(frozen=True)
class TimingRow:
    unit: str
    calendar: str
    case_time: int | None
    status: str  # "treated", "never", or "excluded"
    reason: str = ""


def timing_summary(
    calendar: TreatmentSchedule,
    case: TreatmentSchedule | None,
    exclusions: dict[str, str] | None = None,
    order: str = "calendar",
) -> list[TimingRow]:
    """One row per policy unit with its adoption in both time scales."""
    exclusions = exclusions or {}
    rows = []
    for u in calendar.units:
        a = calendar.adoption[u]
        if u in exclusions or case is None or u not in case.adoption:
            status = "never" if a is None else "excluded"
            reason = exclusions.get(u, "no case-time schedule" if case is None else "not in case-time schedule")
            rows.append(TimingRow(u, calendar.format_time(a), None, status, reason))
        else:
            rows.append(TimingRow(u, calendar.format_time(a), case.adoption[u], "never" if a is None else "treated"))

    def key(r: TimingRow):
        if order == "case":
            return (r.case_time is None, r.case_time if r.case_time is not None else math.inf, r.unit)
        if order == "unit":
            return (r.unit,)
        never = r.calendar == "never"
        return (never, r.calendar, r.unit)

    if order not in ("calendar", "case", "unit"):
        raise ValueError(f"unknown order {order!r}")
    return sorted(rows, key=key)
