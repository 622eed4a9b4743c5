"""Command-line interface: ``policytrial {table1,estimate,timing,simulate}``.

Exit status is 0 on success (suppressed cells or missing SEs still count as
success and are listed in the report), 2 for unreadable or invalid input and
1 when the estimators cannot produce the requested quantity.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import os
import re
import sys

from . import __version__
from .diagnostics import pretrend_report, timing_summary
from .did import EventStudyConfig, estimate_event_study, overall_att, two_by_two, TrialWindow
from .errors import EstimationError, InputError, NoTreatedUnits
from .ingest import (
    OutcomeKind,
    OutcomeSpec,
    log_to_percent,
    parse_cases,
    parse_policy,
    to_case_time,
    transform_outcome,
)
from .jackknife import attach_ses
from .panel import ComparisonPolicy, TimeMode, align, build_cohorts, date_to_offset
from .report import Report
from .sim import (
    config_from_mapping,
    parse_config_text,
    simulate,
    write_panel_csv,
    write_schedule_csv,
    write_truth_csv,
)

DEFAULT_CASES = os.path.join("data", "us-states.csv")
DEFAULT_POLICY = os.path.join("data", "policy_dates.csv")

ESTIMATE_FIELDS = ["event_time", "estimate", "se", "n_cohorts", "n_treated", "placebo"]
META_FIELDS = ["outcome", "time_mode", "comparison", "reference_offset"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_rows(rows: list[dict], fields: list[str], fmt: str, out) -> None:
    if fmt == "json":
        json.dump(rows, out, indent=2, sort_keys=False)
        out.write("\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])


def _open_out(path):
    if path is None or path == "-":
        return _NoClose(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


class _NoClose:
    def __init__(self, fh):
        self.fh = fh

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        self.fh.flush()


# -- input loading -----------------------------------------------------------

def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def load_inputs(args, report: Report):
    """Parse, transform and align the case and policy files per ``args``."""
    schedule = parse_policy(_read_bytes(args.policy))
    raw = parse_cases(_read_bytes(args.cases), report)
    if args.drop_unlisted:
        for s in raw:
            if s.unit not in schedule.adoption:
                report.add("unlisted", s.unit, "in case file but not in policy file; dropped")
        raw = [s for s in raw if s.unit in schedule.adoption]
    spec = OutcomeSpec(OutcomeKind(args.outcome), args.threshold)
    panel = transform_outcome(raw, spec, report)
    panel, schedule = align(panel, schedule)
    calendar_schedule = schedule
    exclusions: dict[str, str] = {}
    if args.time_mode == TimeMode.CASE.value:
        panel, schedule, exclusions = to_case_time(panel, raw, schedule, args.threshold, report)
    return panel, schedule, calendar_schedule, raw, exclusions


def _parse_time(text: str, mode: str, epoch: dt.date | None) -> int:
    if mode == TimeMode.CALENDAR.value:
        try:
            day = dt.date.fromisoformat(text.strip())
        except ValueError:
            raise InputError(f"expected YYYY-MM-DD, got {text!r}") from None
        return date_to_offset(day, epoch)
    try:
        return int(text)
    except ValueError:
        raise InputError(f"expected an integer case-time offset, got {text!r}") from None


def _parse_window(text: str, mode: str, epoch) -> tuple[int, int]:
    if mode == TimeMode.CALENDAR.value:
        a, sep, b = text.partition(":")
    else:
        m = re.fullmatch(r"\s*(-?\d+)\s*:\s*(-?\d+)\s*", text)
        a, sep, b = (m.group(1), ":", m.group(2)) if m else (text, "", "")
    if not sep:
        raise InputError(f"window must look like START:END, got {text!r}")
    return _parse_time(a, mode, epoch), _parse_time(b, mode, epoch)


def _meta(args) -> dict:
    return {
        "outcome": args.outcome,
        "time_mode": args.time_mode,
        "comparison": args.comparison,
        "reference_offset": args.reference,
    }


# -- subcommands -------------------------------------------------------------

def cmd_table1(args, report: Report) -> int:
    panel, schedule, _, _, _ = load_inputs(args, report)
    epoch = panel.epoch
    cohort_t = _parse_time(args.cohort, args.time_mode, epoch)
    pre = _parse_window(args.pre, args.time_mode, epoch)
    post = _parse_window(args.post, args.time_mode, epoch)
    window = TrialWindow(pre[0], pre[1], post[0], post[1], args.reference)
    cohorts = build_cohorts(schedule, ComparisonPolicy(args.comparison))
    try:
        cohort = cohorts.cohort_at(cohort_t)
    except KeyError:
        raise NoTreatedUnits(f"no cohort adopts at {args.cohort}") from None
    comparison = set(cohorts.comparison_pool)
    if cohorts.policy is ComparisonPolicy.NOT_YET_TREATED:
        comparison |= {u for c in cohorts.cohorts if c.adoption > window.post_end for u in c.units}
    tab = two_by_two(panel, cohort.units, comparison, window)

    cells = [
        ("treated", tab.treated_pre, tab.treated_post, tab.treated_change,
         tab.counts["treated_pre"], tab.counts["treated_post"]),
        ("comparison", tab.comparison_pre, tab.comparison_post, tab.comparison_change,
         tab.counts["comparison_pre"], tab.counts["comparison_post"]),
        ("difference", tab.treated_pre - tab.comparison_pre, tab.treated_post - tab.comparison_post,
         tab.did, None, None),
    ]
    rows = []
    for name, pre_v, post_v, diff_v, n_pre, n_post in cells:
        rows.append({
            "row": name,
            "pre": pre_v,
            "post": post_v,
            "difference": diff_v,
            "pre_pct": 100 * log_to_percent(pre_v),
            "post_pct": 100 * log_to_percent(post_v),
            "difference_pct": 100 * log_to_percent(diff_v),
            "n_pre": n_pre,
            "n_post": n_post,
            "cohort": args.cohort,
            "n_cohort_units": cohort.size,
            "n_comparison_units": len(comparison),
            **_meta(args),
        })
    fields = ["row", "pre", "post", "difference", "pre_pct", "post_pct", "difference_pct",
              "n_pre", "n_post", "cohort", "n_cohort_units", "n_comparison_units", *META_FIELDS]
    with _open_out(args.output) as out:
        _write_rows(rows, fields, args.format, out)
    return 0


def _event_config(args, epoch) -> EventStudyConfig:
    cohort = None if args.cohort is None else _parse_time(args.cohort, args.time_mode, epoch)
    return EventStudyConfig(
        policy=ComparisonPolicy(args.comparison),
        reference_offset=args.reference,
        k_min=args.k_min,
        k_max=args.k_max,
        min_cell_size=args.min_cell_size,
        cohort=cohort,
    )


def cmd_estimate(args, report: Report) -> int:
    panel, schedule, _, _, _ = load_inputs(args, report)
    config = _event_config(args, panel.epoch)
    result = estimate_event_study(panel, schedule, config, report)
    if not args.no_se:
        result, details = attach_ses(result, panel, schedule, config, threads=args.threads)
        for k, jk in details.items():
            if jk.se is None:
                report.add("se-missing", f"k={k}", f"{jk.n_replicates} successful replicates")
    meta = _meta(args)
    rows = [
        {
            "event_time": e.event_time,
            "estimate": e.estimate,
            "se": e.se,
            "n_cohorts": e.n_cohorts,
            "n_treated": e.n_treated,
            "placebo": e.placebo,
            **meta,
        }
        for e in result.estimates
    ]
    with _open_out(args.output) as out:
        _write_rows(rows, ESTIMATE_FIELDS + META_FIELDS, args.format, out)

    if args.cohort_detail:
        detail = []
        for s in result.studies:
            for k in s.event_times:
                p = s.points[k]
                detail.append({
                    "cohort": schedule.format_time(s.adoption),
                    "cohort_size": s.size,
                    "event_time": k,
                    "estimate": p.estimate,
                    "n_treated": p.n_treated,
                    "n_comparison": p.n_comparison,
                    **meta,
                })
        fields = ["cohort", "cohort_size", "event_time", "estimate", "n_treated", "n_comparison", *META_FIELDS]
        with _open_out(args.cohort_detail) as out:
            _write_rows(detail, fields, args.format, out)

    if args.diagnose is not None:
        pre = pretrend_report(list(result.estimates), args.reference)
        sys.stderr.write(pre.to_text())
        if args.diagnose != "-":
            with open(args.diagnose, "w", encoding="utf-8") as fh:
                json.dump({**pre.to_dict(), **meta}, fh, indent=2)
                fh.write("\n")
    return 0


def cmd_timing(args, report: Report) -> int:
    args.time_mode = TimeMode.CASE.value
    _, case_schedule, calendar_schedule, _, exclusions = load_inputs(args, report)
    rows = timing_summary(calendar_schedule, case_schedule, exclusions, order=args.order)
    out_rows = [
        {
            "unit": r.unit,
            "calendar_adoption": r.calendar,
            "case_time_adoption": "never" if r.status == "never" else r.case_time,
            "status": r.status,
            "reason": r.reason,
            "threshold": args.threshold,
        }
        for r in rows
    ]
    fields = ["unit", "calendar_adoption", "case_time_adoption", "status", "reason", "threshold"]
    with _open_out(args.output) as out:
        _write_rows(out_rows, fields, args.format, out)
    return 0


def cmd_simulate(args, report: Report) -> int:
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw.update(parse_config_text(fh.read()))
    for item in args.set or []:
        raw.update(parse_config_text(item))
    config = config_from_mapping(raw)
    sim = simulate(config)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "panel.csv"), "w", encoding="utf-8", newline="") as fh:
        write_panel_csv(sim.observed, fh)
    with open(os.path.join(args.out_dir, "schedule.csv"), "w", encoding="utf-8", newline="") as fh:
        write_schedule_csv(sim.schedule, fh)
    with open(os.path.join(args.out_dir, "truth.csv"), "w", encoding="utf-8", newline="") as fh:
        write_truth_csv(sim, fh)
    if not args.and_estimate:
        return 0

    ev_config = EventStudyConfig(
        policy=ComparisonPolicy(args.comparison), reference_offset=args.reference,
        k_min=args.k_min, k_max=args.k_max,
    )
    result = estimate_event_study(sim.observed, sim.schedule, ev_config, report)
    if not args.no_se:
        result, _ = attach_ses(result, sim.observed, sim.schedule, ev_config, threads=args.threads)
    meta = {"outcome": "simulated", "time_mode": "calendar", "comparison": args.comparison,
            "reference_offset": args.reference}
    rows = [
        {"event_time": e.event_time, "estimate": e.estimate, "se": e.se, "n_cohorts": e.n_cohorts,
         "n_treated": e.n_treated, "placebo": e.placebo, **meta}
        for e in result.estimates
    ]
    with open(os.path.join(args.out_dir, "estimates.csv"), "w", encoding="utf-8", newline="") as fh:
        _write_rows(rows, ESTIMATE_FIELDS + META_FIELDS, "csv", fh)
    comp, worst = [], 0.0
    for e in result.estimates:
        truth = sim.truth.get(e.event_time, 0.0)
        err = e.estimate - truth
        worst = max(worst, abs(err))
        comp.append({"event_time": e.event_time, "estimate": e.estimate, "truth": truth, "error": err})
    with open(os.path.join(args.out_dir, "comparison.csv"), "w", encoding="utf-8", newline="") as fh:
        _write_rows(comp, ["event_time", "estimate", "truth", "error"], "csv", fh)
    att = overall_att(list(result.estimates))
    sys.stdout.write(f"max_abs_error={worst!r}\noverall_att={att!r}\n")
    return 0


# -- argument parsing ----------------------------------------------------------

def _add_data_args(p):
    p.add_argument("--cases", default=DEFAULT_CASES,
                   help="cumulative counts CSV with columns date,state,cases (default: %(default)s)")
    p.add_argument("--policy", default=DEFAULT_POLICY,
                   help="policy CSV with columns state,order_date; empty date = never (default: %(default)s)")
    p.add_argument("--outcome", default="log-growth", choices=[k.value for k in OutcomeKind],
                   help="outcome scale (default: %(default)s)")
    p.add_argument("--time-mode", default="calendar", choices=[m.value for m in TimeMode],
                   help="calendar dates or case time (default: %(default)s)")
    p.add_argument("--threshold", type=int, default=10,
                   help="case count that defines case-time zero (default: %(default)s)")
    p.add_argument("--comparison", default="never-treated", choices=[c.value for c in ComparisonPolicy],
                   help="comparison units (default: %(default)s). Not-yet-treated comparisons change "
                        "composition over follow-up, which can masquerade as changing effects.")
    p.add_argument("--reference", type=int, default=-1,
                   help="reference event time (default: %(default)s, the day before adoption)")
    p.add_argument("--drop-unlisted", action="store_true",
                   help="drop units present in the case file but absent from the policy file "
                        "(otherwise an error)")
    _add_output_args(p)


def _add_output_args(p):
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.add_argument("-o", "--output", default=None, help="output path (default: stdout)")
    p.add_argument("--report", default=None, help="exclusion/suppression report path (default: stderr)")


def _add_estimation_args(p):
    p.add_argument("--k-min", type=int, default=None, help="first event time to report (e.g. -21)")
    p.add_argument("--k-max", type=int, default=None, help="last event time to report (e.g. 35)")
    p.add_argument("--min-cell-size", type=int, default=1,
                   help="suppress estimates whose smallest cell has fewer observations (default: %(default)s)")
    p.add_argument("--no-se", action="store_true", help="skip jackknife standard errors")
    p.add_argument("--threads", type=int, default=1, help="threads for jackknife replicates (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="policytrial",
        description="Cohort-based difference-in-differences for staggered policy adoption.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("table1", help="2x2 pre/post table for one adoption cohort")
    _add_data_args(p)
    p.add_argument("--cohort", default="2020-03-23",
                   help="cohort adoption date, or integer in case time (default: %(default)s)")
    p.add_argument("--pre", default="2020-03-08:2020-03-22", help="pre window START:END (default: %(default)s)")
    p.add_argument("--post", default="2020-03-23:2020-04-26", help="post window START:END (default: %(default)s)")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("estimate", help="event-study estimates, nested across cohorts or for one cohort")
    _add_data_args(p)
    _add_estimation_args(p)
    p.add_argument("--cohort", default=None, help="restrict to one cohort (single target trial)")
    p.add_argument("--cohort-detail", default=None, help="also write per-cohort estimates here")
    p.add_argument("--diagnose", nargs="?", const="-", default=None,
                   help="print a placebo pre-trend summary; with a path, also write it as JSON")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("timing", help="adoption timing in calendar and case time")
    _add_data_args(p)
    p.add_argument("--order", default="calendar", choices=["calendar", "case", "unit"])
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("simulate", help="simulate a panel with known effects")
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config setting")
    p.add_argument("--out-dir", default="sim-out")
    p.add_argument("--and-estimate", action="store_true", help="estimate on the simulated panel and compare")
    p.add_argument("--comparison", default="never-treated", choices=[c.value for c in ComparisonPolicy])
    p.add_argument("--reference", type=int, default=-1)
    p.add_argument("--report", default=None)
    _add_estimation_args(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    report = Report()
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        code = args.func(args, report)
    except (OSError, InputError) as exc:
        sys.stderr.write(f"policytrial: error: {type(exc).__name__}: {exc}\n")
        code = 2
    except (EstimationError, ValueError) as exc:
        sys.stderr.write(f"policytrial: error: {type(exc).__name__}: {exc}\n")
        code = 1
    if len(report):
        report.write(args.report)
    return code


if __name__ == "__main__":
    sys.exit(main())
