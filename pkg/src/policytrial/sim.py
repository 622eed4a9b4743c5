"""Synthetic panels with known potential outcomes, and a brute-force DiD.

The data-generating process is additive on the analysis scale::

    y0[i, t] = unit_effect[i] + time_effect[t] + slope * t * ever_treated[i] + noise
    y1[i, t] = y0[i, t] + tau(t - adoption[i] + lead)

and the observed outcome is ``y1`` from ``lead`` periods before adoption
onward, ``y0`` otherwise.

``oracle_did`` deliberately shares nothing with :mod:`policytrial.did`: it
loops over raw observations so the two can check each other.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NoData, ParseError
from .panel import PanelDataset, TimeMode, TreatmentSchedule


@dataclass(frozen=True)
class ConstantEffect:
    value: float
    slope: float = 0.0

    def __call__(self, k: int) -> float:
        return self.value + self.slope * k


@dataclass(frozen=True)
class DgpConfig:
    n_units: int
    n_periods: int
    unit_effects: tuple[float, ...]
    time_effects: tuple[float, ...]
    schedule: TreatmentSchedule
    treatment_effect: Callable[[int], float] = ConstantEffect(0.0)
    differential_trend_slope: float = 0.0
    anticipation_lead: int = 0
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_units < 2:
            raise ConfigError("n_units", "must be at least 2")
        if self.n_periods < 2:
            raise ConfigError("n_periods", "must be at least 2")
        if len(self.unit_effects) != self.n_units:
            raise ConfigError("unit_effects", f"expected {self.n_units} values, got {len(self.unit_effects)}")
        if len(self.time_effects) != self.n_periods:
            raise ConfigError("time_effects", f"expected {self.n_periods} values, got {len(self.time_effects)}")
        if len(self.schedule) != self.n_units:
            raise ConfigError("schedule", f"expected {self.n_units} units, got {len(self.schedule)}")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd", "must be >= 0")
        if self.anticipation_lead < 0:
            raise ConfigError("anticipation_lead", "must be >= 0")
        for u, a in self.schedule.adoption.items():
            if a is not None and not 0 <= a < self.n_periods:
                raise ConfigError("schedule", f"adoption of {u} at {a} outside 0..{self.n_periods - 1}")

    @classmethod
    def staggered(
        cls,
        n_units: int,
        n_periods: int,
        cohorts: dict[int, int],
        tau=0.0,
        seed: int = 0,
        noise_sd: float = 0.0,
        differential_trend_slope: float = 0.0,
        anticipation_lead: int = 0,
        unit_effect_sd: float = 1.0,
        time_effect_sd: float = 1.0,
    ) -> "DgpConfig":
        """Build a config with cohorts ``{adoption: size}``; the remaining
        units are never treated. Unit and time effects are drawn from ``seed``
        on a stream separate from the noise."""
        for name, sd in (("unit_effect_sd", unit_effect_sd), ("time_effect_sd", time_effect_sd)):
            if sd < 0:
                raise ConfigError(name, "must be >= 0")
        n_treated = sum(cohorts.values())
        if n_treated > n_units:
            raise ConfigError("cohorts", f"{n_treated} treated units but only {n_units} units")
        width = len(str(n_units - 1))
        labels = [f"u{i:0{width}d}" for i in range(n_units)]
        adoption: dict[str, int | None] = {}
        it = iter(labels)
        for a, size in sorted(cohorts.items()):
            for _ in range(size):
                adoption[next(it)] = int(a)
        for u in it:
            adoption[u] = None
        rng = np.random.default_rng([seed, 1])
        unit_effects = tuple(float(x) for x in rng.normal(0.0, unit_effect_sd, n_units))
        time_effects = tuple(float(x) for x in rng.normal(0.0, time_effect_sd, n_periods))
        effect = tau if callable(tau) else ConstantEffect(float(tau))
        return cls(
            n_units, n_periods, unit_effects, time_effects,
            TreatmentSchedule(adoption, TimeMode.CALENDAR, None),
            effect, differential_trend_slope, anticipation_lead, noise_sd, seed,
        )


@dataclass(frozen=True)
class SimPanel:
    observed: PanelDataset
    y0: np.ndarray = field(repr=False)
    y1: np.ndarray = field(repr=False)
    units: tuple[str, ...]
    schedule: TreatmentSchedule
    truth: dict[int, float]
    config: DgpConfig = field(repr=False)


def simulate(config: DgpConfig) -> SimPanel:
    units = tuple(sorted(config.schedule.adoption))
    n, T = config.n_units, config.n_periods
    t = np.arange(T, dtype=float)
    ever = np.array([config.schedule.adoption[u] is not None for u in units], dtype=float)
    rng = np.random.default_rng(config.seed)
    noise = rng.normal(0.0, config.noise_sd, (n, T)) if config.noise_sd > 0 else np.zeros((n, T))
    y0 = (
        np.asarray(config.unit_effects)[:, None]
        + np.asarray(config.time_effects)[None, :]
        + config.differential_trend_slope * t[None, :] * ever[:, None]
        + noise
    )
    effect = np.zeros((n, T))
    active = np.zeros((n, T), dtype=bool)
    lead = config.anticipation_lead
    truth: dict[int, float] = {}
    for i, u in enumerate(units):
        a = config.schedule.adoption[u]
        if a is None:
            continue
        for tt in range(T):
            k = tt - a
            if k + lead >= 0:
                active[i, tt] = True
                effect[i, tt] = config.treatment_effect(k + lead)
                truth[k] = float(config.treatment_effect(k + lead))
            else:
                truth.setdefault(k, 0.0)
    y1 = y0 + effect
    obs = np.where(active, y1, y0)
    values = {(u, tt): float(obs[i, tt]) for i, u in enumerate(units) for tt in range(T)}
    observed = PanelDataset(values, TimeMode.CALENDAR, "simulated", None, units)
    return SimPanel(observed, y0, y1, units, config.schedule, dict(sorted(truth.items())), config)


def oracle_truth(sim: SimPanel, k: int) -> float:
    """Average of ``y1 - y0`` over treated units observed at event time ``k``."""
    total, n = 0.0, 0
    for i, u in enumerate(sim.units):
        a = sim.schedule.adoption[u]
        if a is None or not 0 <= a + k < sim.y0.shape[1]:
            continue
        total += sim.y1[i, a + k] - sim.y0[i, a + k]
        n += 1
    if n == 0:
        raise NoData(f"no treated unit observed at event time {k}")
    return total / n


def oracle_did(panel: PanelDataset, cohort_units, adoption: int, comparison_units, k: int,
               reference_offset: int = -1) -> float:
    """Event-study DiD at ``k`` computed by scanning every observation."""
    cohort_units = set(cohort_units)
    comparison_units = set(comparison_units)

    def cell(group, when, name):
        total = 0.0
        count = 0
        for (unit, time), value in panel.values.items():
            if unit in group and time == when:
                total = total + value
                count = count + 1
        if count == 0:
            raise NoData(cell=name)
        return total / count

    treated_now = cell(cohort_units, adoption + k, "treated k")
    treated_ref = cell(cohort_units, adoption + reference_offset, "treated reference")
    comp_now = cell(comparison_units, adoption + k, "comparison k")
    comp_ref = cell(comparison_units, adoption + reference_offset, "comparison reference")
    return (treated_now - treated_ref) - (comp_now - comp_ref)


# -- file round-trip --------------------------------------------------------

def write_panel_csv(panel: PanelDataset, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["unit", "time", "value"])
    for (u, t) in sorted(panel.values):
        w.writerow([u, t, repr(panel.values[(u, t)])])


def read_panel_csv(stream, outcome_label: str = "value") -> PanelDataset:
    text = stream if isinstance(stream, str) else stream.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["unit", "time", "value"]:
        raise ParseError("expected header unit,time,value", 1)
    recs = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            recs.append((row[0], int(row[1]), float(row[2])))
        except (ValueError, IndexError):
            raise ParseError(f"bad row {row!r}", lineno) from None
    return PanelDataset.from_records(recs, time_mode=TimeMode.CALENDAR, outcome_label=outcome_label)


def write_schedule_csv(schedule: TreatmentSchedule, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["unit", "adoption"])
    for u in schedule.units:
        a = schedule.adoption[u]
        w.writerow([u, "" if a is None else a])


def read_schedule_csv(stream) -> TreatmentSchedule:
    text = stream if isinstance(stream, str) else stream.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    if next(reader, None) != ["unit", "adoption"]:
        raise ParseError("expected header unit,adoption", 1)
    adoption = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            adoption[row[0]] = int(row[1]) if row[1].strip() else None
        except (ValueError, IndexError):
            raise ParseError(f"bad row {row!r}", lineno) from None
    return TreatmentSchedule(adoption, TimeMode.CALENDAR, None)


def write_truth_csv(sim: SimPanel, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["event_time", "truth"])
    for k, v in sim.truth.items():
        w.writerow([k, repr(v)])


# -- flat key = value config files -------------------------------------------

_FLOAT_KEYS = {"noise_sd", "tau", "tau_slope", "trend_slope", "unit_effect_sd", "time_effect_sd"}
_INT_KEYS = {"n_units", "n_periods", "seed", "anticipation"}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def config_from_mapping(raw: dict) -> DgpConfig:
    known = _FLOAT_KEYS | _INT_KEYS | {"cohorts"}
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown setting")
    vals = {}
    for key, value in raw.items():
        if key == "cohorts":
            continue
        try:
            vals[key] = int(value) if key in _INT_KEYS else float(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"cannot parse {value!r}") from None
    cohorts = {}
    for item in str(raw.get("cohorts", "")).split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, size = item.split(":")
            cohorts[int(a)] = cohorts.get(int(a), 0) + int(size)
        except ValueError:
            raise ConfigError("cohorts", f"expected adoption:size, got {item!r}") from None
    for key in ("n_units", "n_periods"):
        if key not in vals:
            raise ConfigError(key, "required")
    if not cohorts:
        raise ConfigError("cohorts", "required, e.g. cohorts = 10:3, 15:2")
    tau = ConstantEffect(vals.get("tau", 0.0), vals.get("tau_slope", 0.0))
    return DgpConfig.staggered(
        vals["n_units"], vals["n_periods"], cohorts,
        tau=tau,
        seed=vals.get("seed", 0),
        noise_sd=vals.get("noise_sd", 0.0),
        differential_trend_slope=vals.get("trend_slope", 0.0),
        anticipation_lead=vals.get("anticipation", 0),
        unit_effect_sd=vals.get("unit_effect_sd", 1.0),
        time_effect_sd=vals.get("time_effect_sd", 1.0),
    )
