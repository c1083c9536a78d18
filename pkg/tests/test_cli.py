import csv
import json

import pytest

from rishm.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from rishm.scenario import load_instance, save_instance

from conftest import toy_instance


@pytest.fixture()
def toy_file(tmp_path):
    path = tmp_path / "toy.json"
    save_instance(toy_instance(5, n_sites=5, n_targets=5, k=2), path)
    return path


def fake_result(path, instance, variant, seed, fitness, trace_len=3):
    doc = {
        "format": "rishm-result", "version": 1, "instance": instance, "variant": variant, "seed": seed,
        "fe_used": trace_len,
        "best": {"fitness": fitness, "coverage_fraction": 0.5, "residual_fraction": 0.5},
        "trace": [[i + 1, fitness + trace_len - i - 1] for i in range(trace_len)],
    }
    path.write_text(json.dumps(doc))
    return path


def test_gen(tmp_path, capsys):
    out = tmp_path / "a"
    assert main(["gen", "--scale", "small", "--seed", "7", "--out", str(out)]) == EXIT_OK
    inst = load_instance(out / "small-7.json")
    assert (inst.n_sites, inst.n_targets) == (25, 300)
    assert main(["gen", "--scale", "small", "--seed", "7", "--out", str(tmp_path / "b")]) == EXIT_OK
    assert (out / "small-7.json").read_bytes() == (tmp_path / "b" / "small-7.json").read_bytes()


def test_usage_errors(tmp_path, capsys):
    assert main(["gen", "--scale", "huge", "--seed", "1", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["run", "x.json", "--variant", "nope"]) == EXIT_USAGE
    assert main(["run", "x.json", "--threads", "0"]) == EXIT_USAGE


def test_env_var_sets_default_out(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("RISHM_OUT", str(tmp_path / "env"))
    assert main(["gen", "--scale", "small", "--seed", "2"]) == EXIT_OK
    assert (tmp_path / "env" / "small-2.json").exists()


def test_corrupt_instance_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "rishm-instance",\n oops')
    assert main(["run", str(bad), "--out", str(tmp_path)]) == EXIT_DATA
    assert "line 2" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_DATA


def test_run_variants(tmp_path, toy_file, capsys):
    out = tmp_path / "runs"
    args = ["run", str(toy_file), "--variant", "ga_only", "--variant", "rishm_wo_local",
            "--seed", "3", "--max-fes", "60", "--out", str(out)]
    assert main(args) == EXIT_OK
    ga = json.loads((out / "toy-5__ga_only__s3.json").read_text())
    assert ga["fe_used"] == 60 and len(ga["trace"]) == 60
    wol = json.loads((out / "toy-5__rishm_wo_local__s3.json").read_text())
    assert "local" not in wol["phase_counts"]
    assert wol["config"]["variant"] == "rishm_wo_local" and wol["code_version"]


def test_run_budget_too_small(tmp_path, toy_file, capsys):
    assert main(["run", str(toy_file), "--max-fes", "10", "--out", str(tmp_path)]) == EXIT_USAGE


def test_run_is_deterministic(tmp_path, toy_file, capsys):
    for name in ("a", "b"):
        assert main(["run", str(toy_file), "--variant", "rishm", "--seed", "1", "--max-fes", "45",
                     "--out", str(tmp_path / name)]) == EXIT_OK
    f = "toy-5__rishm__s1.json"
    assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_report_statistics(tmp_path, capsys):
    files = [fake_result(tmp_path / "r1.json", "i", "ga_only", 1, 10.0, 3),
             fake_result(tmp_path / "r2.json", "i", "ga_only", 2, 20.0, 4),
             fake_result(tmp_path / "r3.json", "i", "rishm", 1, 7.0, 5)]
    out = tmp_path / "rep"
    assert main(["report", *map(str, files), "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out / "summary.csv")))
    ga = next(r for r in rows if r["variant"] == "ga_only")
    assert float(ga["fitness_avg"]) == 15.0 and float(ga["fitness_std_pop"]) == 5.0
    single = next(r for r in rows if r["variant"] == "rishm")
    assert float(single["fitness_std_pop"]) == 0.0
    conv = list(csv.reader(open(out / "convergence.csv")))
    assert conv[0] == ["variant", "seed", "fe", "best_fitness"]
    assert len(conv) - 1 == 3 + 4 + 5
    assert (out / "convergence.png").stat().st_size > 0
    assert "15(5)" in capsys.readouterr().out


def test_report_mixed_instances(tmp_path, capsys):
    files = [fake_result(tmp_path / "a.json", "i1", "rishm", 1, 3.0),
             fake_result(tmp_path / "b.json", "i2", "rishm", 1, 4.0)]
    assert main(["report", *map(str, files), "--out", str(tmp_path / "r")]) == EXIT_USAGE
    assert main(["report", *map(str, files), "--group", "--no-plot", "--out", str(tmp_path / "r")]) == EXIT_OK
    assert (tmp_path / "r" / "convergence_i1.csv").exists()
    assert not (tmp_path / "r" / "convergence_i1.png").exists()


def test_report_is_deterministic(tmp_path, capsys):
    files = [fake_result(tmp_path / f"r{s}.json", "i", "ga_only", s, 10.0 + s, 6) for s in range(3)]
    for name in ("a", "b"):
        assert main(["report", *map(str, files), "--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("summary.csv", "convergence.csv", "convergence.png", "final_fitness.png"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_report_rejects_foreign_files(tmp_path, capsys):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    assert main(["report", str(p), "--out", str(tmp_path)]) == EXIT_DATA


def test_accuracy_command(tmp_path, toy_file, capsys):
    assert main(["accuracy", str(toy_file), "--seed", "0", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "accuracy_toy-5__s0.json").read_text())
    assert 0.0 <= doc["accuracy"] <= 1.0 and doc["n_offspring"] == 100
    assert "median" in capsys.readouterr().out
