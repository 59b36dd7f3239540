"""Run orchestration: config handling, artifact writers, summarize, CLI."""

import csv
import io
import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from mpc_autotune.cli import main
from mpc_autotune.design import DesignVector, ShapingVector
from mpc_autotune.runner import (
    NOTE_DELTA,
    NOTE_ETA,
    SETTINGS_COLUMNS,
    ConfigError,
    ResultFileError,
    RunConfig,
    coverage_note,
    run,
    summarize,
    trace_dict,
    write_settings_csv,
    write_trace_json,
    _fmt,
)
from mpc_autotune.tuning import (
    ELIMINATED,
    INFEASIBLE_AT_A0,
    RT,
    RT_AT_ZERO,
    SURVIVING,
    CandidateRecord,
    TuningResult,
    required_scenarios,
)


# RunConfig ---------------------------------------------------------------------------


def test_config_defaults_round_trip():
    cfg = RunConfig()
    assert RunConfig.from_mapping(cfg.to_mapping()) == cfg
    assert RunConfig.from_mapping({}) == cfg


def test_config_file_round_trip(tmp_path):
    cfg = RunConfig(n_trials=7, gamma=0.9, timing_mode="cost-model", c_eval=2.5e-6)
    path = tmp_path / "config.json"
    cfg.to_file(path)
    assert RunConfig.from_file(path) == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys: not_a_knob"):
        RunConfig.from_mapping({"not_a_knob": 1})


def test_config_coercion():
    cfg = RunConfig.from_mapping({"n_trials": 5.0, "gamma": 1, "c_eval": None})
    assert cfg.n_trials == 5 and isinstance(cfg.n_trials, int)
    assert cfg.gamma == 1.0 and isinstance(cfg.gamma, float)
    assert cfg.c_eval is None
    with pytest.raises(ConfigError, match="must be an integer"):
        RunConfig.from_mapping({"n_trials": 5.5})
    with pytest.raises(ConfigError, match="must be an integer"):
        RunConfig.from_mapping({"n_trials": True})
    with pytest.raises(ConfigError, match="must be a string"):
        RunConfig.from_mapping({"problem": 3})
    with pytest.raises(ConfigError, match="must be a boolean"):
        RunConfig.from_mapping({"dump_reports": 1})
    with pytest.raises(ConfigError, match="must be a number"):
        RunConfig.from_mapping({"gamma": "high"})


@pytest.mark.parametrize(
    "overrides",
    [
        {"n_trials": 0},
        {"nb": 0},
        {"nsb": 0},
        {"sigma_bar": 0},
        {"duration": 0.0},
        {"jobs": 0},
        {"timing_mode": "gut-feeling"},
        {"timing_repeats": 0},
        {"c_eval": 0.0},
        {"gamma": 0.0},          # certification params reject it
        {"eps": 1.0},
        {"kappa_min": 0},        # design bounds reject it
        {"n_contr_min": 3, "n_contr_max": 2},
    ],
)
def test_config_validation(overrides):
    with pytest.raises(ConfigError):
        RunConfig(**overrides)


def test_config_from_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        RunConfig.from_file(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        RunConfig.from_file(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="root must be an object"):
        RunConfig.from_file(arr)


def test_config_replaced():
    cfg = RunConfig()
    other = cfg.replaced(n_trials=3.0, seed=9)
    assert other.n_trials == 3 and other.seed == 9
    assert cfg.n_trials == RunConfig().n_trials  # original untouched
    with pytest.raises(ConfigError, match="unknown config key"):
        cfg.replaced(tries=3)


def test_config_maps_to_bounds_and_params():
    cfg = RunConfig(kappa_min=2, kappa_max=8, rho_f_min=5.0, rho_f_max=50.0,
                    rho_log_space=True, gamma=0.9, eps=0.2, dev_acc=2.0, c_max=0.3)
    bounds = cfg.design_bounds()
    assert bounds.kappa == (2, 8)
    assert bounds.rho_f == (5.0, 50.0)
    assert bounds.rho_log_space is True
    params = cfg.certification_params()
    assert (params.gamma, params.eps, params.dev_acc, params.c_max) == (0.9, 0.2, 2.0, 0.3)


# artifact writers --------------------------------------------------------------------


def test_fmt_values():
    assert _fmt(None) == ""
    assert _fmt(3) == "3"
    assert _fmt(0.1) == "0.1"
    assert _fmt(1e-06) == "1e-06"
    # repr round-trips doubles exactly
    v = 2527.069156186994
    assert float(_fmt(v)) == v


def make_design(kappa=2, n_pred=8):
    return DesignVector(kappa=kappa, mu_d=0.5, n_pred=n_pred, n_contr=2,
                        rho_f=10.0, rho_constr=1.0e4, max_iter=10)


def synthetic_result():
    sh = ShapingVector((1, 1, 1, 1, 1, 1, 1))
    records = [
        CandidateRecord(index=0, shaping=sh, status=SURVIVING, alpha_hat=0.5,
                        design=make_design(), cumulative_cost=7.25,
                        scenarios_evaluated=6, alpha_evaluations=4),
        CandidateRecord(index=1, shaping=sh, status=ELIMINATED, alpha_hat=0.25,
                        design=make_design(kappa=3), cumulative_cost=1.5,
                        scenarios_evaluated=4, alpha_evaluations=5,
                        eliminated_batch=2, eliminated_criterion=RT),
        CandidateRecord(index=2, shaping=sh, status=SURVIVING, alpha_hat=1.0,
                        design=make_design(n_pred=12), cumulative_cost=5.0,
                        scenarios_evaluated=6, alpha_evaluations=2),
        CandidateRecord(index=3, shaping=sh, status=INFEASIBLE_AT_A0,
                        scenarios_evaluated=2, alpha_evaluations=1,
                        eliminated_batch=1, eliminated_criterion=RT_AT_ZERO),
    ]
    return TuningResult(records=records, survivors=[2, 0], best_index=2,
                        elimination_trace=[1, 1], ocp_solve_count=123,
                        step3_rejections=0, nb=3, nsb=2)


def test_settings_csv_schema_and_ordering(tmp_path):
    path = tmp_path / "settings.csv"
    write_settings_csv(path, synthetic_result(), tau=0.01)
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    # survivors by cost, then eliminated, then infeasible
    assert [r["index"] for r in rows] == ["2", "0", "1", "3"]
    assert list(rows[0]) == SETTINGS_COLUMNS
    best = rows[0]
    assert best["status"] == SURVIVING
    assert best["kappa"] == "2" and best["N_pred"] == "12"
    assert float(best["tau_u"]) == pytest.approx(0.02)
    assert float(best["T"]) == pytest.approx(0.24)
    assert best["cumulative_cost"] == "5.0"
    assert best["eliminated_batch"] == "" and best["eliminated_criterion"] == ""
    gone = rows[2]
    assert gone["status"] == ELIMINATED
    assert gone["eliminated_batch"] == "2" and gone["eliminated_criterion"] == RT
    bad = rows[3]
    assert bad["status"] == INFEASIBLE_AT_A0
    assert bad["alpha_hat"] == "" and bad["kappa"] == "" and bad["cumulative_cost"] == ""
    assert bad["eliminated_criterion"] == RT_AT_ZERO
    # unix line endings regardless of platform
    assert b"\r" not in path.read_bytes()


def test_trace_dict_echo_and_content():
    result = synthetic_result()
    cfg = RunConfig(n_trials=4, nb=3, nsb=2, jobs=7, out_dir="somewhere",
                    timing_repeats=5, dump_reports=True)
    seeds = {"master": 0, "shaping_stream": "spawn:0", "cloud_seed": 42}
    trace = trace_dict(result, cfg, seeds)
    for key in ("jobs", "out_dir", "timing_repeats", "dump_reports"):
        assert key not in trace["config"]
    assert trace["config"]["n_trials"] == 4
    assert trace["seeds"] == seeds
    assert trace["survivors"] == [2, 0]
    assert trace["best"]["index"] == 2
    assert trace["elimination_trace"] == [1, 1]
    assert trace["ocp_solve_count"] == 123
    assert len(trace["records"]) == 4
    assert trace["records"][3]["design"] is None
    assert trace["records"][0]["shaping"] == [1, 1, 1, 1, 1, 1, 1]


def test_write_trace_json(tmp_path):
    path = tmp_path / "trace.json"
    write_trace_json(path, synthetic_result(), RunConfig(n_trials=4, nb=3, nsb=2), {"master": 0})
    text = path.read_text()
    assert text.endswith("\n")
    data = json.loads(text)
    assert data["best"]["design"]["kappa"] == 2


def test_coverage_note_numbers():
    lines = coverage_note(nb=5, nsb=4, n_trials=10)
    single = required_scenarios(NOTE_ETA, NOTE_DELTA, 1)
    simultaneous = required_scenarios(NOTE_ETA, NOTE_DELTA, 10)
    text = "\n".join(lines)
    assert "scenarios beyond the freezing batch: 16" in text
    assert f"single-candidate requirement: {single} (not covered)" in text
    assert f"simultaneous requirement for 10 candidates: {simultaneous} (not covered)" in text
    big = "\n".join(coverage_note(nb=300, nsb=2, n_trials=1))
    assert f"single-candidate requirement: {single} (covered)" in big


# real tiny runs ----------------------------------------------------------------------


TINY = dict(problem="pvtol", n_trials=2, nb=2, nsb=1, duration=0.1,
            timing_mode="cost-model", c_eval=1e-6, seed=3)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_run")
    code = run(RunConfig(**TINY, out_dir=str(out)))
    return out, code


def test_run_writes_artifacts(tiny_run):
    out, code = tiny_run
    assert (out / "settings.csv").is_file()
    assert (out / "trace.json").is_file()
    assert (out / "run.log").is_file()
    assert not (out / "reports.jsonl").exists()
    trace = json.loads((out / "trace.json").read_text())
    assert code == (0 if trace["survivors"] else 3)
    assert trace["seeds"]["master"] == 3
    assert isinstance(trace["seeds"]["cloud_seed"], int)
    for key in ("jobs", "out_dir", "timing_repeats", "dump_reports"):
        assert key not in trace["config"]
    assert trace["config"]["n_trials"] == 2
    assert len(trace["records"]) == 2
    assert trace["ocp_solve_count"] > 0
    assert len(trace["elimination_trace"]) == trace["nb"] - 1
    with open(out / "settings.csv", newline="") as f:
        reader = csv.DictReader(f)
        assert reader.fieldnames == SETTINGS_COLUMNS
        assert len(list(reader)) == 2
    log = (out / "run.log").read_text()
    assert "seeds" in log and "certification coverage" in log


def test_run_deterministic_across_runs_and_jobs(tiny_run, tmp_path):
    out, _ = tiny_run
    for jobs in (1, 2):
        repeat = tmp_path / f"repeat{jobs}"
        run(RunConfig(**TINY, jobs=jobs, out_dir=str(repeat)))
        assert (repeat / "settings.csv").read_bytes() == (out / "settings.csv").read_bytes()
        assert (repeat / "trace.json").read_bytes() == (out / "trace.json").read_bytes()


def test_run_dump_reports(tmp_path):
    out = tmp_path / "dump"
    run(RunConfig(**TINY, dump_reports=True, out_dir=str(out)))
    lines = (out / "reports.jsonl").read_text().splitlines()
    assert lines
    for line in lines:
        entry = json.loads(line)
        assert {"context", "report"} <= set(entry)
        assert entry["context"]["phase"] in (1, 2)
        assert "solver_times" in entry["report"]


def test_run_wallclock_clamps_jobs(tmp_path):
    out = tmp_path / "wall"
    jobs = (os.cpu_count() or 1) + 1
    cfg = RunConfig(problem="pvtol", n_trials=1, nb=1, nsb=1, duration=0.05,
                    timing_mode="wallclock", seed=1, jobs=jobs, out_dir=str(out))
    run(cfg)
    assert "clamping" in (out / "run.log").read_text()


def test_run_calibrates_c_eval(tmp_path):
    out = tmp_path / "cal"
    cfg = RunConfig(problem="pvtol", n_trials=1, nb=1, nsb=1, duration=0.05,
                    timing_mode="cost-model", c_eval=None, seed=1, out_dir=str(out))
    run(cfg)
    assert "calibrated c_eval" in (out / "run.log").read_text()


def test_run_unknown_problem(tmp_path):
    cfg = RunConfig(**{**TINY, "problem": "warp-drive"}, out_dir=str(tmp_path / "x"))
    with pytest.raises(ConfigError, match="warp-drive"):
        run(cfg)


# summarize ---------------------------------------------------------------------------


def write_synthetic_dir(path: Path) -> None:
    path.mkdir(parents=True, exist_ok=True)
    result = synthetic_result()
    write_settings_csv(path / "settings.csv", result, tau=0.01)
    write_trace_json(path / "trace.json", result, RunConfig(n_trials=4, nb=3, nsb=2), {"master": 0})


def test_summarize_happy_path(tmp_path):
    write_synthetic_dir(tmp_path)
    stream = io.StringIO()
    assert summarize(tmp_path, stream=stream) == 0
    lines = stream.getvalue().splitlines()
    assert lines[0].split()[0] == "index"
    assert lines[1].split()[0] == "2"  # best survivor first
    assert lines[2].split()[0] == "0"
    with open(tmp_path / "elimination_curve.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["batch", "cumulative_eliminated"]
    assert rows[1:] == [["2", "1"], ["3", "1"]]


def test_summarize_no_survivors(tmp_path):
    result = synthetic_result()
    for rec in result.records:
        if rec.status == SURVIVING:
            rec.status = ELIMINATED
            rec.eliminated_batch = 2
            rec.eliminated_criterion = RT
    result.survivors = []
    result.best_index = None
    write_settings_csv(tmp_path / "settings.csv", result, tau=0.01)
    write_trace_json(tmp_path / "trace.json", result, RunConfig(n_trials=4, nb=3, nsb=2), {})
    stream = io.StringIO()
    assert summarize(tmp_path, stream=stream) == 3
    assert "no admissible setting" in stream.getvalue()


def test_summarize_on_real_run(tiny_run):
    out, code = tiny_run
    stream = io.StringIO()
    assert summarize(out, stream=stream) == code
    assert (out / "elimination_curve.csv").is_file()


def test_summarize_missing_and_corrupt_files(tmp_path):
    with pytest.raises(ResultFileError, match="missing"):
        summarize(tmp_path)
    (tmp_path / "trace.json").write_text("{broken")
    with pytest.raises(ResultFileError, match="corrupt"):
        summarize(tmp_path)
    (tmp_path / "trace.json").write_text("{}")
    with pytest.raises(ResultFileError, match="missing"):
        summarize(tmp_path)  # settings.csv still absent


def tamper(path: Path, old: str, new: str) -> None:
    text = path.read_text()
    assert old in text
    path.write_text(text.replace(old, new))


def test_summarize_rejects_bad_header(tmp_path):
    write_synthetic_dir(tmp_path)
    tamper(tmp_path / "settings.csv", "index,status", "idx,status")
    with pytest.raises(ResultFileError, match="unexpected header"):
        summarize(tmp_path)


def test_summarize_rejects_bad_rows(tmp_path):
    write_synthetic_dir(tmp_path)
    tamper(tmp_path / "settings.csv", "2,surviving", "2,zombie")
    with pytest.raises(ResultFileError, match="row 2: unknown status"):
        summarize(tmp_path)

    write_synthetic_dir(tmp_path)
    tamper(tmp_path / "settings.csv", "2,surviving,1.0", "2,surviving,1.5")
    with pytest.raises(ResultFileError, match="alpha_hat outside"):
        summarize(tmp_path)

    write_synthetic_dir(tmp_path)
    tamper(tmp_path / "settings.csv", ",5.0,", ",five,")
    with pytest.raises(ResultFileError, match="not a number"):
        summarize(tmp_path)

    write_synthetic_dir(tmp_path)
    lines = (tmp_path / "settings.csv").read_text().splitlines()
    lines[1] += ",extra"
    (tmp_path / "settings.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(ResultFileError, match="row 2: wrong number of columns"):
        summarize(tmp_path)


def test_summarize_rejects_inconsistent_survivors(tmp_path):
    write_synthetic_dir(tmp_path)
    tamper(tmp_path / "trace.json", '"survivors": [\n    2,\n    0\n  ]',
           '"survivors": [\n    2\n  ]')
    with pytest.raises(ResultFileError, match="disagree on the survivor set"):
        summarize(tmp_path)


def test_summarize_rejects_unsorted_survivor_costs(tmp_path):
    write_synthetic_dir(tmp_path)
    # make the first survivor row dearer than the second without touching order
    tamper(tmp_path / "settings.csv", ",5.0,", ",9.0,")
    with pytest.raises(ResultFileError, match="not sorted by cumulative cost"):
        summarize(tmp_path)


def test_summarize_rejects_decreasing_trace(tmp_path):
    write_synthetic_dir(tmp_path)
    tamper(tmp_path / "trace.json", '"elimination_trace": [\n    1,\n    1\n  ]',
           '"elimination_trace": [\n    1,\n    0\n  ]')
    with pytest.raises(ResultFileError, match="not nondecreasing"):
        summarize(tmp_path)


# command line ------------------------------------------------------------------------


def test_cli_tune_with_config_and_overrides(tmp_path):
    cfg_path = tmp_path / "config.json"
    RunConfig(**TINY, out_dir="ignored").to_file(cfg_path)
    out = tmp_path / "cli_out"
    code = main(["tune", "--config", str(cfg_path), "--out", str(out), "--jobs", "1"])
    trace = json.loads((out / "trace.json").read_text())
    assert code == (0 if trace["survivors"] else 3)
    assert trace["config"]["n_trials"] == 2


def test_cli_tune_errors(tmp_path, capsys):
    assert main(["tune", "--config", str(tmp_path / "nope.json")]) == 2
    assert capsys.readouterr().err.startswith("error:")
    out = tmp_path / "bad_problem"
    assert main(["tune", "--problem", "warp-drive", "--n-trials", "1",
                 "--nb", "1", "--nsb", "1", "--out", str(out)]) == 2
    assert "warp-drive" in capsys.readouterr().err


def test_cli_summarize(tmp_path, capsys):
    write_synthetic_dir(tmp_path)
    assert main(["summarize", "--in", str(tmp_path)]) == 0
    assert main(["summarize", "--in", str(tmp_path / "void")]) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_cli_entry_points_exist():
    assert shutil.which("mpc-autotune") is not None
    proc = subprocess.run([sys.executable, "-m", "mpc_autotune.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "tune" in proc.stdout and "summarize" in proc.stdout
