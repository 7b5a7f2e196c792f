import csv
import json

import pytest

from dagex.cli import main
from dagex.latency import WorkloadProfile, speedup

FIG2_QUERY = "What is the ratio of Microsoft's market cap to Apple's market cap?"


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_fig2_prints_ratio(capsys, tmp_path, data_dir):
    code, out, _ = _run(capsys, "run", FIG2_QUERY, "--config", str(data_dir / "fig2.toml"),
                        "--runs-dir", str(tmp_path))
    assert code == 0
    assert float(out.strip()) == pytest.approx(2800 / 2950, abs=1e-9)
    traces = list(tmp_path.glob("*.jsonl"))
    assert len(traces) == 1
    kinds = {json.loads(line)["event"] for line in traces[0].read_text().splitlines()}
    assert {"dispatch", "complete", "join"} <= kinds


def test_run_json_and_explicit_trace(capsys, tmp_path, data_dir):
    trace = tmp_path / "t.jsonl"
    code, out, _ = _run(capsys, "run", FIG2_QUERY, "--config", str(data_dir / "fig2.toml"), "--stream",
                        "--cap", "1", "--trace", str(trace), "--json")
    assert code == 0
    payload = json.loads(out)
    assert payload["status"] == "finish"
    assert trace.exists()


def test_run_exhausted_exit_code(capsys, tmp_path, data_dir):
    code, out, _ = _run(capsys, "run", "1 1 1 1", "--config", str(data_dir / "game24.toml"),
                        "--runs-dir", str(tmp_path))
    assert code == 2
    assert "ExhaustedRounds" in out


def test_run_bad_config_exit_code(capsys, tmp_path):
    code, _, err = _run(capsys, "run", "q", "--config", str(tmp_path / "missing.toml"))
    assert code == 1
    assert "cannot read config" in err


def test_run_planner_error_exit_code(capsys, tmp_path, data_dir):
    code, _, err = _run(capsys, "run", "unscripted question", "--config", str(data_dir / "fig2.toml"),
                        "--runs-dir", str(tmp_path))
    assert code == 1
    assert "ScriptMiss" in err


def test_validate_plan(capsys, tmp_path, data_dir):
    code, out, _ = _run(capsys, "validate-plan", str(data_dir / "plan_game24_round2.txt"), "--json")
    assert code == 0
    summary = json.loads(out)
    assert summary["tasks"] == 12
    assert summary["critical_path"] == 3
    bad = tmp_path / "bad.txt"
    bad.write_text("1. a($2)\n2. join()\n")
    code, _, err = _run(capsys, "validate-plan", str(bad))
    assert code == 1
    assert "ForwardReference" in err


def test_bench_json_lines(capsys):
    code, out, _ = _run(capsys, "bench", "chain-3", "--trials", "1", "--latency-ms", "50", "--json")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 1
    row = json.loads(lines[0])
    # a chain has no parallelism
    assert row["parallel_ms"] == pytest.approx(row["sequential_ms"], rel=0.2)
    assert row["predicted_parallel_ms"] == pytest.approx(150)


def test_bench_parallel_one(capsys):
    code, out, _ = _run(capsys, "bench", "parallel-1", "--trials", "1", "--latency-ms", "50", "--json")
    assert json.loads(out)["speedup"] == pytest.approx(1, rel=0.2)


@pytest.mark.slow
def test_bench_parallel_8_near_analytic(capsys):
    code, out, _ = _run(capsys, "bench", "parallel-8", "--trials", "1", "--json")
    row = json.loads(out)
    gamma = float(speedup(WorkloadProfile.uniform(8, 0, 0.5)).gamma)
    assert row["gamma_analytic"] == gamma == 8
    assert 0.7 * gamma <= row["speedup"] <= 1.0 * gamma * 1.02


@pytest.mark.parametrize("pattern", ["parallel-0", "parallel-65", "tree-4"])
def test_bench_rejects_bad_patterns(capsys, pattern):
    assert _run(capsys, "bench", pattern)[0] == 1


def test_bench_rejects_zero_trials(capsys):
    assert _run(capsys, "bench", "parallel-2", "--trials", "0")[0] == 1


def test_simulate_workload_and_csv(capsys, tmp_path):
    wl = tmp_path / "w.json"
    wl.write_text(json.dumps({"n": 2, "plan_react": [1, 1], "plan_compiler": [1, 1], "exec": [3, 5]}))
    out_csv = tmp_path / "m.csv"
    code, out, _ = _run(capsys, "simulate", str(wl), "--csv", str(out_csv))
    assert code == 0
    report = json.loads(out)
    assert report["t_react"] == 10 and report["t_compiler"] == 7 and report["t_streamed"] == 7
    rows = list(csv.DictReader(out_csv.open()))
    assert [r["n"] for r in rows] == ["1", "2"]


def test_simulate_plan(capsys, tmp_path):
    plan = tmp_path / "p.txt"
    plan.write_text('1. search("a")\n2. search("b")\n3. math("$1 / $2")\n4. join()\n')
    durations = tmp_path / "d.json"
    durations.write_text(json.dumps({"search": 1, "math": 1}))
    code, out, _ = _run(capsys, "simulate", "--plan", str(plan), "--durations", str(durations))
    assert code == 0
    assert json.loads(out)["makespan"] == 2


def test_trace_export(capsys, tmp_path, data_dir):
    _run(capsys, "run", FIG2_QUERY, "--config", str(data_dir / "fig2.toml"), "--runs-dir", str(tmp_path))
    run_id = next(tmp_path.glob("*.jsonl")).stem
    out_csv = tmp_path / "export.csv"
    code, _, _ = _run(capsys, "trace-export", run_id, str(out_csv), "--runs-dir", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert rows and set(rows[0]) == {"t_ms", "event", "task_id", "tool", "ok"}
    assert _run(capsys, "trace-export", "nope", str(out_csv), "--runs-dir", str(tmp_path))[0] == 1
