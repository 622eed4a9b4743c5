"""Units, time indices, outcome panels and treatment schedules.

Time is an integer day offset. In calendar mode the offset counts days since
``epoch`` (a :class:`datetime.date`); in case mode it counts days since the
unit's own threshold crossing and ``epoch`` is ``None``. Offsets from the two
modes are never compared: every container carries its ``time_mode`` and joins
check it.
"""

from __future__ import annotations

import datetime as dt
import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    EmptyComparisonPool,
    EmptyInput,
    InputError,
    NoTreatedUnits,
    TimeModeMismatch,
    UnknownUnit,
)

NEVER = None  # adoption value for units that never adopt (g = infinity)


class TimeMode(str, enum.Enum):
    CALENDAR = "calendar"
    CASE = "case"


class ComparisonPolicy(str, enum.Enum):
    NEVER_TREATED = "never-treated"
    NOT_YET_TREATED = "not-yet-treated"


def date_to_offset(day: dt.date, epoch: dt.date) -> int:
    return (day - epoch).days


def offset_to_date(offset: int, epoch: dt.date) -> dt.date:
    return epoch + dt.timedelta(days=offset)


@dataclass(frozen=True)
class Grid:
    """Dense unit x time view of a panel; undefined cells are NaN."""

    units: tuple[str, ...]
    times: np.ndarray
    values: np.ndarray

    @cached_property
    def row(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.units)}

    def column(self, t: int) -> int | None:
        if len(self.times) == 0:
            return None
        j = t - int(self.times[0])
        return j if 0 <= j < len(self.times) else None


@dataclass(frozen=True)
class PanelDataset:
    """Outcome observations keyed by ``(unit, time)``.

    ``units`` lists every unit in the panel, including units with no defined
    observation (those are kept so they can be reported, never dropped).
    """

    values: Mapping[tuple[str, int], float]
    time_mode: TimeMode = TimeMode.CALENDAR
    outcome_label: str = "value"
    epoch: dt.date | None = None
    units: tuple[str, ...] = ()

    def __post_init__(self):
        seen = set(self.units)
        extra = sorted({u for u, _ in self.values} - seen)
        object.__setattr__(self, "units", tuple(sorted(seen.union(extra))))
        for key, v in self.values.items():
            if not math.isfinite(v):
                raise InputError(f"non-finite outcome at {key}")
        for u in self.units:
            if not u:
                raise InputError("empty unit label")
        if self.time_mode is TimeMode.CASE and self.epoch is not None:
            raise TimeModeMismatch("case-time panels carry no calendar epoch")

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, int, float]], **kwargs) -> "PanelDataset":
        values = {}
        for unit, t, v in records:
            key = (unit, int(t))
            if key in values:
                raise InputError(f"duplicate observation for {key}")
            values[key] = float(v)
        return cls(values=values, **kwargs)

    def __len__(self):
        return len(self.values)

    @cached_property
    def grid(self) -> Grid:
        if not self.values:
            return Grid(self.units, np.arange(0), np.empty((len(self.units), 0)))
        ts = [t for _, t in self.values]
        t0, t1 = min(ts), max(ts)
        arr = np.full((len(self.units), t1 - t0 + 1), np.nan)
        row = {u: i for i, u in enumerate(self.units)}
        for (u, t), v in self.values.items():
            arr[row[u], t - t0] = v
        arr.setflags(write=False)
        return Grid(self.units, np.arange(t0, t1 + 1), arr)

    @property
    def time_range(self) -> tuple[int, int] | None:
        if not self.values:
            return None
        return int(self.grid.times[0]), int(self.grid.times[-1])

    def observation_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(self.units, 0)
        for u, _ in self.values:
            counts[u] += 1
        return counts

    def empty_units(self) -> list[str]:
        return [u for u, n in self.observation_counts().items() if n == 0]

    def drop_units(self, units: Iterable[str]) -> "PanelDataset":
        drop = set(units)
        return PanelDataset(
            values={k: v for k, v in self.values.items() if k[0] not in drop},
            time_mode=self.time_mode,
            outcome_label=self.outcome_label,
            epoch=self.epoch,
            units=tuple(u for u in self.units if u not in drop),
        )

    def map_values(self, fn) -> "PanelDataset":
        """Apply ``fn(unit, time, value)`` to every observation."""
        return PanelDataset(
            values={(u, t): float(fn(u, t, v)) for (u, t), v in self.values.items()},
            time_mode=self.time_mode,
            outcome_label=self.outcome_label,
            epoch=self.epoch,
            units=self.units,
        )

    def rebase(self, epoch: dt.date) -> "PanelDataset":
        if self.time_mode is not TimeMode.CALENDAR or self.epoch is None:
            raise TimeModeMismatch("only calendar panels with an epoch can be rebased")
        shift = (self.epoch - epoch).days
        return PanelDataset(
            values={(u, t + shift): v for (u, t), v in self.values.items()},
            time_mode=self.time_mode,
            outcome_label=self.outcome_label,
            epoch=epoch,
            units=self.units,
        )


@dataclass(frozen=True)
class TreatmentSchedule:
    """First adoption time per unit; ``None`` means never adopted."""

    adoption: Mapping[str, int | None]
    time_mode: TimeMode = TimeMode.CALENDAR
    epoch: dt.date | None = None

    def __post_init__(self):
        for u, a in self.adoption.items():
            if not u:
                raise InputError("empty unit label")
            if a is not None and not isinstance(a, (int, np.integer)):
                raise InputError(f"adoption time for {u} must be an integer offset")

    def __len__(self):
        return len(self.adoption)

    @property
    def units(self) -> list[str]:
        return sorted(self.adoption)

    def treated(self) -> list[str]:
        return sorted(u for u, a in self.adoption.items() if a is not None)

    def never_treated(self) -> list[str]:
        return sorted(u for u, a in self.adoption.items() if a is None)

    def drop_units(self, units: Iterable[str]) -> "TreatmentSchedule":
        drop = set(units)
        return TreatmentSchedule(
            {u: a for u, a in self.adoption.items() if u not in drop},
            self.time_mode,
            self.epoch,
        )

    def rebase(self, epoch: dt.date) -> "TreatmentSchedule":
        if self.time_mode is not TimeMode.CALENDAR or self.epoch is None:
            raise TimeModeMismatch("only calendar schedules with an epoch can be rebased")
        shift = (self.epoch - epoch).days
        return TreatmentSchedule(
            {u: None if a is None else a + shift for u, a in self.adoption.items()},
            self.time_mode,
            epoch,
        )

    def format_time(self, t: int | None) -> str:
        if t is None:
            return "never"
        if self.time_mode is TimeMode.CALENDAR and self.epoch is not None:
            return offset_to_date(t, self.epoch).isoformat()
        return str(t)


def align(panel: PanelDataset, schedule: TreatmentSchedule) -> tuple[PanelDataset, TreatmentSchedule]:
    """Check that a panel and schedule can be joined; rebase calendar epochs.

    Every panel unit must be in the schedule. Silently treating unknown units as
    never-treated would invent comparison units, so that is an error.
    """
    if panel.time_mode is not schedule.time_mode:
        raise TimeModeMismatch(
            f"panel is in {panel.time_mode.value} time, schedule in {schedule.time_mode.value} time"
        )
    unknown = sorted(set(panel.units) - set(schedule.adoption))
    if unknown:
        raise UnknownUnit(f"units with outcome data but no policy entry: {', '.join(unknown)}")
    if panel.time_mode is TimeMode.CALENDAR and panel.epoch != schedule.epoch:
        if panel.epoch is None or schedule.epoch is None:
            raise TimeModeMismatch("cannot align a calendar epoch with an epoch-free container")
        schedule = schedule.rebase(panel.epoch)
    return panel, schedule


@dataclass(frozen=True)
class Cohort:
    adoption: int
    units: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.units)


@dataclass(frozen=True)
class CohortSet:
    cohorts: tuple[Cohort, ...]
    comparison_pool: frozenset[str]
    policy: ComparisonPolicy
    schedule: TreatmentSchedule
    excluded: frozenset[str] = field(default_factory=frozenset)

    @property
    def treated_units(self) -> list[str]:
        return sorted(u for c in self.cohorts for u in c.units)

    def cohort_at(self, adoption: int) -> Cohort:
        for c in self.cohorts:
            if c.adoption == adoption:
                return c
        raise KeyError(adoption)

    def comparison_units(self, cohort: Cohort, k: int, reference_offset: int) -> frozenset[str]:
        """Comparison units for ``cohort`` at event time ``k``.

        Never-treated: the fixed pool. Not-yet-treated: the pool plus every unit
        outside the cohort whose adoption is strictly after both the evaluated
        period and the reference period.
        """
        if self.policy is ComparisonPolicy.NEVER_TREATED:
            return self.comparison_pool
        cutoff = cohort.adoption + max(k, reference_offset)
        later = {
            u
            for c in self.cohorts
            if c.adoption > cutoff and c.adoption != cohort.adoption
            for u in c.units
        }
        return self.comparison_pool | later

    def restrict(self, adoption: int) -> "CohortSet":
        """Single-trial view keeping one cohort; other cohorts become excluded."""
        keep = self.cohort_at(adoption)
        dropped = {u for c in self.cohorts if c is not keep for u in c.units}
        if self.policy is ComparisonPolicy.NOT_YET_TREATED:
            # later adopters stay available as not-yet-treated comparisons
            return CohortSet((keep,), self.comparison_pool, self.policy, self.schedule, self.excluded)
        return CohortSet((keep,), self.comparison_pool, self.policy, self.schedule,
                         self.excluded | frozenset(dropped))


def build_cohorts(
    schedule: TreatmentSchedule,
    policy: ComparisonPolicy = ComparisonPolicy.NEVER_TREATED,
    exclude: Iterable[str] = (),
) -> CohortSet:
    """Partition a schedule into adoption-time cohorts and a comparison pool."""
    if len(schedule) == 0:
        raise EmptyInput("treatment schedule is empty")
    excluded = frozenset(exclude) & frozenset(schedule.adoption)
    by_time: dict[int, list[str]] = {}
    never = []
    for u in schedule.units:
        if u in excluded:
            continue
        a = schedule.adoption[u]
        if a is None:
            never.append(u)
        else:
            by_time.setdefault(int(a), []).append(u)
    if not by_time:
        raise NoTreatedUnits("schedule contains no treated units")
    if policy is ComparisonPolicy.NEVER_TREATED and not never:
        raise EmptyComparisonPool("never-treated comparison requested but no unit is never treated")
    cohorts = tuple(Cohort(a, tuple(sorted(us))) for a, us in sorted(by_time.items()))
    return CohortSet(cohorts, frozenset(never), ComparisonPolicy(policy), schedule, excluded)
