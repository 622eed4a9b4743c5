"""Policy trial emulation: cohort-based difference-in-differences for
staggered policy adoption on group-level panels."""

__version__ = "0.1.0"

from .did import (
    CohortEventStudy,
    EventStudyConfig,
    EventStudyEstimate,
    EventStudyResult,
    TrialWindow,
    TwoByTwo,
    aggregate_event_study,
    cohort_event_study,
    estimate_event_study,
    mean_outcome,
    overall_att,
    two_by_two,
)
from .diagnostics import PreTrendReport, pretrend_report, timing_summary
from .ingest import (
    OutcomeKind,
    OutcomeSpec,
    RawCaseSeries,
    log_to_percent,
    parse_cases,
    parse_policy,
    to_case_time,
    transform_outcome,
)
from .jackknife import JackknifeResult, attach_ses, jackknife
from .panel import (
    NEVER,
    Cohort,
    CohortSet,
    ComparisonPolicy,
    PanelDataset,
    TimeMode,
    TreatmentSchedule,
    build_cohorts,
)
from .sim import DgpConfig, SimPanel, oracle_did, oracle_truth, simulate
