"""Leave-one-unit-out jackknife standard errors."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

from .did import EventStudyConfig, EventStudyResult, estimate_event_study
from .errors import InferenceUnavailable, PolicyTrialError
from .panel import PanelDataset, TreatmentSchedule


@dataclass(frozen=True)
class JackknifeResult:
    point: float
    se: float | None
    n_replicates: int
    failed_replicates: tuple[tuple[str, str], ...] = ()
    replicates: tuple[float, ...] = field(default=(), repr=False)


def jackknife_se(replicates) -> float:
    """Delete-1 jackknife SE: ``sqrt((n-1)/n * sum((r_i - mean)^2))``."""
    n = len(replicates)
    if n < 2:
        raise InferenceUnavailable(f"need at least 2 replicates, have {n}")
    mean = math.fsum(replicates) / n
    return math.sqrt((n - 1) / n * math.fsum((r - mean) ** 2 for r in replicates))


def _map(fn, items, threads):
    if threads is None or threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def jackknife(
    estimator: Callable[[PanelDataset, frozenset], float],
    panel: PanelDataset,
    units_in_scope,
    threads: int | None = None,
) -> JackknifeResult:
    """Jackknife ``estimator(panel, units)`` over ``units_in_scope``.

    Each replicate drops one unit from both the panel and the unit set. A
    replicate that raises a package error is left out and recorded; the SE uses
    the number of successful replicates. Replicates are combined in sorted unit
    order, so the result does not depend on ``threads``.
    """
    scope = frozenset(units_in_scope)
    if len(scope) < 2:
        raise InferenceUnavailable("jackknife needs at least 2 units in scope")
    point = estimator(panel, scope)
    order = sorted(scope)

    def one(u):
        try:
            return u, estimator(panel.drop_units([u]), scope - {u}), None
        except PolicyTrialError as exc:
            return u, None, f"{type(exc).__name__}: {exc}"

    done = _map(one, order, threads)
    reps = tuple(v for _, v, _ in done if v is not None)
    failed = tuple((u, why) for u, v, why in done if v is None)
    se = jackknife_se(reps) if len(reps) >= 2 else None
    return JackknifeResult(point, se, len(reps), failed, reps)


def units_in_scope(result: EventStudyResult, k: int) -> frozenset:
    """Treated units of cohorts contributing at ``k`` plus their comparison units."""
    units = set()
    for s in result.studies:
        if k in s.points:
            units.update(s.units)
            units.update(s.points[k].comparison_units)
    return frozenset(units)


def attach_ses(
    result: EventStudyResult,
    panel: PanelDataset,
    schedule: TreatmentSchedule,
    config: EventStudyConfig = EventStudyConfig(),
    threads: int | None = None,
) -> tuple[EventStudyResult, dict[int, JackknifeResult]]:
    """Jackknife SE for every aggregated event time.

    Each replicate reruns the full pipeline (cohort studies and aggregation,
    with weights renormalised when a cohort shrinks or disappears) without one
    unit. The estimate at ``k`` uses only replicates dropping a unit in that
    event time's scope.
    """
    all_units = sorted(set().union(*(units_in_scope(result, e.event_time) for e in result.estimates)))

    def rerun(u):
        try:
            rep = estimate_event_study(panel.drop_units([u]), schedule.drop_units([u]), config)
        except PolicyTrialError as exc:
            return u, None, f"{type(exc).__name__}: {exc}"
        return u, {e.event_time: e.estimate for e in rep.estimates}, None

    runs = _map(rerun, all_units, threads)
    details = {}
    estimates = []
    for e in result.estimates:
        scope = units_in_scope(result, e.event_time)
        reps, failed = [], []
        for u, by_k, why in runs:
            if u not in scope:
                continue
            if by_k is None:
                failed.append((u, why))
            elif e.event_time not in by_k:
                failed.append((u, "event time has no contributing cohort"))
            else:
                reps.append(by_k[e.event_time])
        se = jackknife_se(reps) if len(reps) >= 2 else None
        details[e.event_time] = JackknifeResult(e.estimate, se, len(reps), tuple(failed), tuple(reps))
        estimates.append(replace(e, se=se))
    return replace(result, estimates=tuple(estimates)), details
