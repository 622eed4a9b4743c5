"""Difference-in-differences estimators: 2x2 tables, cohort event studies and
cohort-size weighted aggregation across nested trials."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingReference, NoData, NoTreatedUnits
from .panel import (
    Cohort,
    CohortSet,
    ComparisonPolicy,
    PanelDataset,
    TreatmentSchedule,
    align,
    build_cohorts,
)
from .report import Report


@dataclass(frozen=True)
class TrialWindow:
    pre_start: int
    pre_end: int
    post_start: int
    post_end: int
    reference_offset: int = -1

    def __post_init__(self):
        if not (self.pre_start <= self.pre_end < self.post_start <= self.post_end):
            raise ValueError("windows must satisfy pre_start <= pre_end < post_start <= post_end")
        if self.reference_offset >= 0:
            raise ValueError("reference_offset must be negative")


@dataclass(frozen=True)
class TwoByTwo:
    treated_pre: float
    treated_post: float
    comparison_pre: float
    comparison_post: float
    counts: dict

    @property
    def treated_change(self) -> float:
        return self.treated_post - self.treated_pre

    @property
    def comparison_change(self) -> float:
        return self.comparison_post - self.comparison_pre

    @property
    def did(self) -> float:
        return self.treated_change - self.comparison_change


@dataclass(frozen=True)
class CohortPoint:
    estimate: float
    n_treated: int
    n_comparison: int
    comparison_units: frozenset


@dataclass(frozen=True)
class CohortEventStudy:
    adoption: int
    units: tuple[str, ...]
    reference_offset: int
    points: dict[int, CohortPoint]
    omitted: tuple[tuple[int, str], ...] = ()

    @property
    def size(self) -> int:
        return len(self.units)

    @property
    def event_times(self) -> list[int]:
        return sorted(self.points)

    def estimate(self, k: int) -> float:
        return self.points[k].estimate


@dataclass(frozen=True)
class EventStudyEstimate:
    event_time: int
    estimate: float
    se: float | None
    n_cohorts: int
    n_treated: int
    weights: tuple[tuple[int, float], ...] = ()

    @property
    def placebo(self) -> bool:
        return self.event_time < 0


def _rows(panel: PanelDataset, units) -> list[int]:
    row = panel.grid.row
    return sorted(row[u] for u in units if u in row)


def _cols(panel: PanelDataset, t_a: int, t_b: int) -> slice | None:
    times = panel.grid.times
    if len(times) == 0:
        return None
    lo = max(t_a, int(times[0])) - int(times[0])
    hi = min(t_b, int(times[-1])) - int(times[0])
    if hi < lo:
        return None
    return slice(lo, hi + 1)


def mean_outcome(panel: PanelDataset, units, window: tuple[int, int]) -> tuple[float, int]:
    """Pooled mean of every defined (unit, time) observation in ``window``.

    Each observation counts once, so units observed on more days weigh more
    when the panel is unbalanced.
    """
    t_a, t_b = window
    if t_b < t_a:
        raise ValueError("empty window")
    rows = _rows(panel, units)
    cols = _cols(panel, t_a, t_b)
    if not rows or cols is None:
        raise NoData()
    block = panel.grid.values[rows, cols]
    defined = ~np.isnan(block)
    n = int(defined.sum())
    if n == 0:
        raise NoData()
    return float(block[defined].sum() / n), n


def two_by_two(panel: PanelDataset, cohort_units, comparison_units, window: TrialWindow) -> TwoByTwo:
    pre = (window.pre_start, window.pre_end)
    post = (window.post_start, window.post_end)
    cells = {}
    counts = {}
    for name, units, win in (
        ("treated_pre", cohort_units, pre),
        ("treated_post", cohort_units, post),
        ("comparison_pre", comparison_units, pre),
        ("comparison_post", comparison_units, post),
    ):
        try:
            cells[name], counts[name] = mean_outcome(panel, units, win)
        except NoData:
            raise NoData("cell has no defined observations", cell=name) from None
    return TwoByTwo(counts=counts, **cells)


def _group_sums(panel: PanelDataset, units) -> tuple[np.ndarray, np.ndarray]:
    block = panel.grid.values[_rows(panel, units), :]
    return np.nansum(block, axis=0), (~np.isnan(block)).sum(axis=0)


def cohort_event_study(
    panel: PanelDataset,
    cohort: Cohort,
    cohorts: CohortSet,
    reference_offset: int = -1,
    k_range: tuple[int | None, int | None] = (None, None),
    min_cell_size: int = 1,
) -> CohortEventStudy:
    """Event-study DiD for one cohort against its comparison units.

    At each event time ``k`` the estimate is
    ``(Y[a+k] - Y[a+ref]) - (C[a+k] - C[a+ref])`` with ``Y``/``C`` the mean
    outcome of the cohort and of the comparison units at an absolute time.
    Event times with an empty or undersized cell are omitted and listed.
    """
    if reference_offset >= 0:
        raise ValueError("reference_offset must be negative")
    grid = panel.grid
    if len(grid.times) == 0:
        raise MissingReference(f"cohort {cohort.adoption}: panel has no observations")
    t0 = int(grid.times[0])
    a = cohort.adoption
    ref_col = grid.column(a + reference_offset)
    tr_sum, tr_n = _group_sums(panel, cohort.units)
    if ref_col is None or tr_n[ref_col] == 0:
        raise MissingReference(f"cohort {a}: no treated observations in the reference period")

    fixed_pool = cohorts.policy is ComparisonPolicy.NEVER_TREATED
    if fixed_pool:
        pool = cohorts.comparison_pool
        cp_sum, cp_n = _group_sums(panel, pool)
        if cp_n[ref_col] == 0:
            raise MissingReference(f"cohort {a}: no comparison observations in the reference period")

    k_lo = int(grid.times[0]) - a
    k_hi = int(grid.times[-1]) - a
    if k_range[0] is not None:
        k_lo = max(k_lo, k_range[0])
    if k_range[1] is not None:
        k_hi = min(k_hi, k_range[1])

    tr_ref = tr_sum[ref_col] / tr_n[ref_col]
    points = {}
    omitted = []
    for k in range(k_lo, k_hi + 1):
        col = a + k - t0
        if not fixed_pool:
            pool = cohorts.comparison_units(cohort, k, reference_offset)
            if not pool:
                omitted.append((k, "no not-yet-treated comparison units"))
                continue
            cp_sum, cp_n = _group_sums(panel, pool)
        counts = (tr_n[col], tr_n[ref_col], cp_n[col], cp_n[ref_col])
        if min(counts) == 0:
            omitted.append((k, "empty cell"))
            continue
        if min(counts) < min_cell_size:
            omitted.append((k, f"cell smaller than {min_cell_size}"))
            continue
        tr_k = tr_sum[col] / tr_n[col]
        cp_k = cp_sum[col] / cp_n[col]
        cp_ref = cp_sum[ref_col] / cp_n[ref_col]
        est = float((tr_k - tr_ref) - (cp_k - cp_ref))
        if k == reference_offset:
            est = 0.0
        points[k] = CohortPoint(est, int(tr_n[col]), int(cp_n[col]), frozenset(pool))
    return CohortEventStudy(a, cohort.units, reference_offset, points, tuple(omitted))


def aggregate_event_study(studies: list[CohortEventStudy]) -> list[EventStudyEstimate]:
    """Cohort-size weighted average of cohort estimates at each event time.

    Weights are renormalised over the cohorts that have an estimate at that
    event time, so each aggregate stays a convex combination.
    """
    if not studies:
        raise ValueError("need at least one cohort event study")
    studies = sorted(studies, key=lambda s: s.adoption)
    ks = sorted({k for s in studies for k in s.points})
    out = []
    for k in ks:
        contrib = [s for s in studies if k in s.points]
        total = sum(s.size for s in contrib)
        weights = tuple((s.adoption, s.size / total) for s in contrib)
        if len(contrib) == 1:
            est = contrib[0].points[k].estimate
        else:
            est = math.fsum(s.size * s.points[k].estimate for s in contrib) / total
        out.append(EventStudyEstimate(k, est, None, len(contrib), total, weights))
    return out


def overall_att(aggregated: list[EventStudyEstimate], counts: dict[int, float] | None = None) -> float:
    """Average of post-period (k >= 0) estimates weighted by treated counts."""
    post = [e for e in aggregated if e.event_time >= 0]
    if not post:
        raise NoData("no post-treatment estimates")
    w = [counts[e.event_time] if counts is not None else e.n_treated for e in post]
    total = math.fsum(w)
    if total <= 0:
        raise NoData("post-treatment weights sum to zero")
    return math.fsum(wi * e.estimate for wi, e in zip(w, post)) / total


@dataclass(frozen=True)
class EventStudyConfig:
    policy: ComparisonPolicy = ComparisonPolicy.NEVER_TREATED
    reference_offset: int = -1
    k_min: int | None = None
    k_max: int | None = None
    min_cell_size: int = 1
    cohort: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "policy", ComparisonPolicy(self.policy))
        if self.reference_offset >= 0:
            raise ValueError("reference_offset must be negative")
        if self.min_cell_size < 1:
            raise ValueError("min_cell_size must be >= 1")


@dataclass(frozen=True)
class EventStudyResult:
    cohorts: CohortSet
    studies: tuple[CohortEventStudy, ...]
    estimates: tuple[EventStudyEstimate, ...]
    failed: tuple[tuple[int, str], ...] = field(default=())

    def at(self, k: int) -> EventStudyEstimate:
        for e in self.estimates:
            if e.event_time == k:
                return e
        raise KeyError(k)


def estimate_event_study(
    panel: PanelDataset,
    schedule: TreatmentSchedule,
    config: EventStudyConfig = EventStudyConfig(),
    report: Report | None = None,
) -> EventStudyResult:
    """Run every cohort's trial and aggregate (or one trial if ``config.cohort``)."""
    panel, schedule = align(panel, schedule)
    cohorts = build_cohorts(schedule, config.policy)
    if config.cohort is not None:
        try:
            cohorts = cohorts.restrict(config.cohort)
        except KeyError:
            raise NoTreatedUnits(f"no cohort adopts at {schedule.format_time(config.cohort)}") from None
    studies, failed = [], []
    for c in cohorts.cohorts:
        try:
            s = cohort_event_study(
                panel, c, cohorts, config.reference_offset,
                (config.k_min, config.k_max), config.min_cell_size,
            )
        except MissingReference as exc:
            failed.append((c.adoption, str(exc)))
            continue
        studies.append(s)
    if report is not None:
        for a, why in failed:
            report.add("cohort-dropped", schedule.format_time(a), why)
        for s in studies:
            for k, why in s.omitted:
                report.add("cell-suppressed", f"{schedule.format_time(s.adoption)} k={k}", why)
    if not studies:
        raise NoData("no cohort produced an event study")
    return EventStudyResult(cohorts, tuple(studies), tuple(aggregate_event_study(studies)), tuple(failed))
