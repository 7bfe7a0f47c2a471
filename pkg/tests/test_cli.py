#!/usr/bin/env python3

import json

import pytest

from compverify.cli import RunConfig, build_parser, main
from compverify.config import get_settings
from compverify.formats import read_aut
from compverify.lts import are_isomorphic, check_safety
from compverify import taxinet
from database.models import DatabaseManager


@pytest.fixture
def run(capsys):
    def invoke(*argv):
        code = main([str(a) for a in argv])
        captured = capsys.readouterr()
        return code, captured.out, captured.err
    return invoke


def write(path, text):
    path.write_text(text)
    return str(path)


# ==================== CHECK ====================

def test_check_perfect_is_safe(run, tmp_path):
    code, out, _ = run("check", "--taxinet", 2, "--out", tmp_path)
    assert code == 0
    assert out.startswith("SAFE taxinet_m2_perfect")


def test_check_worst_reports_counterexample(run, tmp_path):
    code, out, _ = run("check", "--taxinet", 2, "--perception", "Worst", "--out", tmp_path)
    assert code == 1
    assert out.startswith("UNSAFE taxinet_m2_worst")
    assert "counterexample: act[1][0], turn, est[" in out


def test_check_fsp_files_with_property(run, tmp_path):
    model = write(tmp_path / "m.fsp", "P = (a -> b -> P).\nOnlyA = (a -> OnlyA) + {b}.\n")
    code, out, _ = run("check", model, "--compose", "P", "--property", "OnlyA", "--out", tmp_path)
    assert code == 1
    assert "counterexample: a, b" in out


def test_missing_file_is_an_error(run, tmp_path):
    code, _, err = run("check", tmp_path / "missing.fsp", "--compose", "P")
    assert code == 2
    assert "error:" in err


def test_no_model_is_an_error(run):
    code, _, err = run("check")
    assert code == 2
    assert "--taxinet" in err


def test_files_need_compose(run, tmp_path):
    model = write(tmp_path / "m.fsp", "P = (a -> P).\n")
    assert run("assume", model)[0] == 2


def test_unknown_subcommand(run):
    assert run("prove")[0] == 2


def test_fsp_errors_exit_2(run, tmp_path):
    model = write(tmp_path / "bad.fsp", "P = (a -> Q).\n")
    code, _, err = run("check", model, "--compose", "P")
    assert code == 2
    assert "Unbound identifier 'Q'" in err


# ==================== ASSUME ====================

def test_assume_taxinet(run, tmp_path):
    code, out, _ = run("assume", "--taxinet", 2, "--out", tmp_path)
    assert code == 0
    assert out.startswith("m=2 states=7 ")
    data = json.loads((tmp_path / "taxinet_m2_M1_est.assume.json").read_text())
    assert data["stats"]["states"] == 7
    assert (tmp_path / "taxinet_m2_M1_est.assumption.aut").exists()
    assert (tmp_path / "taxinet_m2_M1_est.err.dot").exists()


def test_assume_artifacts_are_deterministic(run, tmp_path):
    for name in ("first", "second"):
        run("assume", "--taxinet", 2, "--alphabet", "est+act", "--out", tmp_path / name)
    for suffix in ("assumption.aut", "err.aut", "assumption.dot", "err.dot"):
        first = (tmp_path / "first" / f"taxinet_m2_M1_est_act.{suffix}").read_text()
        second = (tmp_path / "second" / f"taxinet_m2_M1_est_act.{suffix}").read_text()
        assert first == second


def test_assume_empty_language_warns(run, tmp_path):
    model = write(tmp_path / "p.fsp", "P = (tau -> ERROR | est -> P).\n")
    code, out, _ = run("assume", model, "--compose", "P", "--out", tmp_path, "--format", "json")
    assert code == 0
    assert "warning: assumption language is empty" in out
    assert json.loads((tmp_path / "P_est.assume.json").read_text())["empty"] is True


# ==================== LOCALSPEC ====================

def test_localspec_prints_interval_specs(run, tmp_path):
    code, out, _ = run("localspec", "--taxinet", 2, "--merge", "--out", tmp_path)
    assert code == 0
    assert "(s=[2][2]) ⇒ (s_est=[1][2] ∨ s_est=[2][0] ∨ s_est=[2][2])" in out
    assert "(cte* ∈ [2.7,8) ∧ he* ∈ (11.66,35.0]) ⇒ " in out
    records = json.loads((tmp_path / "taxinet_m2_M1.localspecs.json").read_text(encoding="utf-8"))
    assert len({json.dumps(r["actual"]) for r in records}) == len(records)


def test_localspec_merges_unless_separate(run, tmp_path):
    code, merged, _ = run("localspec", "--taxinet", 2, "--out", tmp_path / "merged")
    assert code == 0
    code, separate, _ = run("localspec", "--taxinet", 2, "--separate", "--out", tmp_path / "separate")
    assert code == 0
    assert merged.count("(s=") <= separate.count("(s=")
    records = json.loads((tmp_path / "merged" / "taxinet_m2_M1.localspecs.json").read_text(encoding="utf-8"))
    assert len({json.dumps(r["actual"]) for r in records}) == len(records)


# ==================== TAXINET ====================

def test_generated_sources_check_clean(run, tmp_path):
    code, out, _ = run("taxinet-gen", "--max-cte", 2, "--out", tmp_path)
    assert code == 0
    assert out.strip().splitlines()[-1] == "m=2 M1 states=99 transitions=155"
    source = tmp_path / "taxinet_m2.fsp"
    code, out, _ = run("check", source, "--compose", "Controller,Dynamics,Perfect", "--out", tmp_path)
    assert code == 0
    code, _, _ = run("check", source, "--compose", "WorstLoop", "--out", tmp_path)
    assert code == 1


@pytest.mark.slow
def test_largest_granularity(run, tmp_path):
    code, out, _ = run("taxinet-gen", "--max-cte", 100, "--out", tmp_path)
    assert code == 0
    assert out.strip().splitlines()[-1].startswith("m=100 M1 states=92709 ")
    code, out, _ = run("assume", "--taxinet", 100, "--out", tmp_path)
    assert code == 0
    assert out.startswith("m=100 states=301 ")


def test_monitor_replays_readings(run, tmp_path):
    readings = write(tmp_path / "ok.csv", "cte,he\n0.0,0.0\n1.5,-4.0\n")
    code, out, _ = run("monitor", "--readings", readings, "--out", tmp_path)
    assert code == 0
    assert out.startswith("m=2 OK steps=2 ")


def test_monitor_aborts_on_violating_estimates(run, tmp_path, cfg2):
    loop = taxinet.closed_loop(cfg2, taxinet.worst_perception(cfg2))
    trace = check_safety(loop, taxinet.safety_property()).counterexample
    rows = "".join(f"{x.indices[0]},{x.indices[1]}\n" for x in trace if x.base == "est")
    readings = write(tmp_path / "bad.csv", "est_cte,est_he\n" + rows)
    code, out, _ = run("monitor", "--readings", readings, "--out", tmp_path)
    assert code == 1
    assert "ABORT step=" in out


def test_monitor_needs_readings(run, tmp_path):
    assert run("monitor", "--readings", tmp_path / "none.csv")[0] == 2
    assert run("monitor")[0] == 2


def test_monitor_prob_identity(run, tmp_path):
    code, out, _ = run("monitor-prob", "--profile", "identity", "--horizon", 10, "--out", tmp_path)
    assert code == 0
    assert "horizon=10 P_abort=0 P_unsafe=0" in out
    assert (tmp_path / "monitor_m2.csv").exists()


def test_monitor_prob_outputs(run, tmp_path):
    code, out, _ = run("monitor-prob", "--profile", "noisy:0.9", "--horizon", 20,
                       "--plot", "--prism", "--simulate", 200, "--seed", 3, "--out", tmp_path)
    assert code == 0
    assert "simulated P_abort=" in out
    assert (tmp_path / "monitor_m2.html").exists()
    assert (tmp_path / "monitor_m2.pm").read_text().startswith("dtmc")


def test_monitor_prob_bad_profile(run, tmp_path):
    assert run("monitor-prob", "--profile", "noisy:high", "--out", tmp_path)[0] == 2
    assert run("monitor-prob", "--profile", tmp_path / "none.csv", "--out", tmp_path)[0] == 2


def test_export_round_trip(run, tmp_path, cfg2):
    target = tmp_path / "perfect.aut"
    code, _, _ = run("export", "--taxinet", 2, "--process", "Perfect", "--format", "aut", "-o", target)
    assert code == 0
    assert are_isomorphic(read_aut(target.read_text()), taxinet.perfect_perception(cfg2))


def test_export_to_stdout(run):
    code, out, _ = run("export", "--taxinet", 2, "--process", "Perfect", "--format", "dot")
    assert code == 0
    assert out.startswith('digraph "Perfect" {')


# ==================== RUN LEDGER ====================

def test_record_stores_runs(run, tmp_path, monkeypatch):
    url = f"sqlite:///{tmp_path / 'ledger.db'}"
    monkeypatch.setenv("DATABASE_URL", url)
    assert run("check", "--taxinet", 2, "--perception", "Worst", "--record", "--out", tmp_path)[0] == 1
    runs = DatabaseManager(url).recent_runs()
    assert list(runs["kind"]) == ["check"]
    assert list(runs["verdict"]) == ["unsafe"]
    assert runs["detail"][0].startswith("act[1][0]")


# ==================== RUN CONFIG ====================

def test_run_config_discretization():
    settings = get_settings()
    args = build_parser().parse_args(["assume", "--taxinet", "3"])
    config = RunConfig.from_args(args, settings)
    assert config.cfg == taxinet.DiscretizationConfig(3)
    args = build_parser().parse_args(["assume", "m.fsp", "--compose", "P"])
    assert RunConfig.from_args(args, settings).cfg is None
