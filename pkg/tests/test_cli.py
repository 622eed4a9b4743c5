import csv
import datetime as dt
import json

import numpy as np
import pytest

from policytrial.cli import main

START = dt.date(2020, 3, 1)
ADOPTION = {"S0": "2020-03-20", "S1": "2020-03-20", "S2": "2020-03-23", "S3": "2020-03-25",
            "S4": "2020-03-25", "S5": "", "S6": "", "S7": ""}


def write_inputs(tmp_path, constant=False, seed=0, extra_unit=False):
    rng = np.random.default_rng(seed)
    rows = []
    for i, unit in enumerate(sorted(ADOPTION) + (["Guam"] if extra_unit else [])):
        count = 20 if constant else 1 + i
        for d in range(45):
            if not constant:
                count = int(count * (1 + rng.uniform(0.0, 0.4))) + int(rng.integers(0, 3))
            rows.append(((START + dt.timedelta(days=d)).isoformat(), unit, count))
    cases = tmp_path / "cases.csv"
    with open(cases, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "state", "cases"])
        w.writerows(rows)
    policy = tmp_path / "policy.csv"
    policy.write_text("state,order_date\n" + "".join(f"{u},{d}\n" for u, d in ADOPTION.items()))
    return ["--cases", str(cases), "--policy", str(policy)]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_table1_constant_input_is_all_zero(tmp_path):
    out = tmp_path / "t1.csv"
    args = write_inputs(tmp_path, constant=True)
    code = main(["table1", *args, "--cohort", "2020-03-23", "--pre", "2020-03-08:2020-03-22",
                 "--post", "2020-03-23:2020-04-10", "-o", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert [r["row"] for r in rows] == ["treated", "comparison", "difference"]
    for r in rows:
        for col in ("pre", "post", "difference", "pre_pct", "post_pct", "difference_pct"):
            assert float(r[col]) == 0.0
        assert r["outcome"] == "log-growth" and r["time_mode"] == "calendar"


def test_table1_did_matches_cells(tmp_path):
    out = tmp_path / "t1.json"
    args = write_inputs(tmp_path)
    assert main(["table1", *args, "--cohort", "2020-03-20", "--pre", "2020-03-05:2020-03-19",
                 "--post", "2020-03-20:2020-04-10", "--format", "json", "-o", str(out)]) == 0
    treated, comparison, diff = json.loads(out.read_text())
    assert diff["difference"] == pytest.approx(treated["difference"] - comparison["difference"], abs=1e-12)
    assert treated["n_cohort_units"] == 2 and treated["n_comparison_units"] == 3


def test_missing_policy_file_exits_2(tmp_path, capsys):
    args = write_inputs(tmp_path)
    args[3] = str(tmp_path / "nope.csv")
    assert main(["table1", *args]) == 2
    assert "FileNotFoundError" in capsys.readouterr().err


def test_empty_policy_file_exits_2(tmp_path):
    args = write_inputs(tmp_path)
    (tmp_path / "policy.csv").write_text("")
    assert main(["timing", *args]) == 2


def test_unlisted_units_are_an_error_unless_dropped(tmp_path):
    args = write_inputs(tmp_path, extra_unit=True)
    assert main(["estimate", *args, "--no-se", "-o", str(tmp_path / "e.csv")]) == 2
    report = tmp_path / "report.tsv"
    assert main(["estimate", *args, "--no-se", "--drop-unlisted", "-o", str(tmp_path / "e.csv"),
                 "--report", str(report)]) == 0
    assert "unlisted\tGuam" in report.read_text()


def test_estimate_schema_and_determinism(tmp_path):
    args = write_inputs(tmp_path)
    outs = []
    for threads in (1, 8):
        out = tmp_path / f"est{threads}.csv"
        assert main(["estimate", *args, "--threads", str(threads), "-o", str(out),
                     "--report", str(tmp_path / "r.tsv")]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    rows = read_csv(tmp_path / "est1.csv")
    assert list(rows[0]) == ["event_time", "estimate", "se", "n_cohorts", "n_treated", "placebo",
                             "outcome", "time_mode", "comparison", "reference_offset"]
    ref = [r for r in rows if r["event_time"] == "-1"][0]
    assert float(ref["estimate"]) == 0.0
    assert all(r["placebo"] == ("true" if int(r["event_time"]) < 0 else "false") for r in rows)


def test_estimate_single_trial_detail_and_diagnose(tmp_path):
    args = write_inputs(tmp_path)
    detail, diag = tmp_path / "detail.csv", tmp_path / "pre.json"
    assert main(["estimate", *args, "--cohort", "2020-03-23", "--k-min", "-10", "--k-max", "10",
                 "--cohort-detail", str(detail), "--diagnose", str(diag), "-o", str(tmp_path / "e.csv")]) == 0
    rows = read_csv(tmp_path / "e.csv")
    assert [int(r["event_time"]) for r in rows] == list(range(-10, 11))
    assert {r["cohort"] for r in read_csv(detail)} == {"2020-03-23"}
    rep = json.loads(diag.read_text())
    assert len(rep["placebos"]) == 9 and rep["reference_offset"] == -1


def test_estimate_case_time_and_other_outcomes(tmp_path):
    args = write_inputs(tmp_path)
    for outcome in ("log-cases", "raw-cases", "raw-growth"):
        out = tmp_path / f"{outcome}.csv"
        assert main(["estimate", *args, "--time-mode", "case", "--outcome", outcome, "--no-se",
                     "-o", str(out), "--report", str(tmp_path / "r.tsv")]) == 0
        rows = read_csv(out)
        assert rows[0]["time_mode"] == "case" and rows[0]["outcome"] == outcome


def test_not_yet_treated_flag(tmp_path):
    args = write_inputs(tmp_path)
    out = tmp_path / "e.csv"
    assert main(["estimate", *args, "--comparison", "not-yet-treated", "--no-se", "-o", str(out),
                 "--report", str(tmp_path / "r.tsv")]) == 0
    assert read_csv(out)[0]["comparison"] == "not-yet-treated"


def test_timing_rows(tmp_path):
    args = write_inputs(tmp_path)
    out = tmp_path / "timing.csv"
    assert main(["timing", *args, "--order", "case", "-o", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == len(ADOPTION)
    assert {r["unit"] for r in rows if r["status"] == "never"} == {"S5", "S6", "S7"}
    assert all(r["case_time_adoption"] == "never" for r in rows if r["status"] == "never")


def test_simulate_and_estimate(tmp_path, capsys):
    out = tmp_path / "sim"
    code = main(["simulate", "--set", "n_units=12", "--set", "n_periods=20", "--set", "cohorts=8:3,11:3",
                 "--set", "tau=0.5", "--out-dir", str(out), "--and-estimate"])
    assert code == 0
    assert "max_abs_error=" in capsys.readouterr().out
    worst = max(abs(float(r["error"])) for r in read_csv(out / "comparison.csv"))
    assert worst < 1e-12
    assert all(float(r["se"]) < 1e-12 for r in read_csv(out / "estimates.csv"))


def test_simulate_is_byte_identical(tmp_path):
    cfg = tmp_path / "dgp.conf"
    cfg.write_text("n_units = 10\nn_periods = 15\ncohorts = 5:2, 8:2\ntau = 0.2\nnoise_sd = 0.3\nseed = 7\n")
    outs = []
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / name), "--and-estimate"]) == 0
        outs.append([(tmp_path / name / f).read_bytes() for f in ("panel.csv", "truth.csv", "estimates.csv")])
    assert outs[0] == outs[1]


def test_simulate_rejects_bad_config(tmp_path, capsys):
    code = main(["simulate", "--set", "n_units=5", "--set", "n_periods=10", "--set", "cohorts=3:1",
                 "--set", "noise_sd=-1", "--out-dir", str(tmp_path / "x")])
    assert code == 2
    assert "noise_sd" in capsys.readouterr().err


def test_timing_on_state_data(tmp_path):
    from conftest import CASES, POLICY

    if not CASES.exists():
        pytest.skip("state case-count file not fetched")
    out = tmp_path / "timing.csv"
    assert main(["timing", "--cases", str(CASES), "--policy", str(POLICY), "-o", str(out),
                 "--report", str(tmp_path / "r.tsv")]) == 0
    rows = {r["unit"]: r for r in read_csv(out)}
    assert len(rows) == 50
    for state in ("Iowa", "Arkansas"):
        assert rows[state]["calendar_adoption"] == "never"
        assert rows[state]["case_time_adoption"] == "never"
    treated = [r for r in rows.values() if r["status"] == "treated"]
    by_calendar = sorted(treated, key=lambda r: r["calendar_adoption"])
    by_case = sorted(treated, key=lambda r: int(r["case_time_adoption"]))
    assert by_calendar[0]["unit"] == "California"
    assert [r["unit"] for r in by_case].index("California") >= len(by_case) // 2
