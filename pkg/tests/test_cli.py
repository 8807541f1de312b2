import csv
import json

import pytest

from gabigan import harness
from gabigan.cli import main
from gabigan.config import OUT_DIR_ENV
from gabigan.history import RunHistory


def write_config(path, **over):
    doc = {"schema_version": 1, "n_m": 6, "t": 3, "r": 1, "generations": 3, "m": 4,
           "C": 2, "D": 2}
    doc.update(over)
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def cfg_path(tmp_path):
    return write_config(tmp_path / "cfg.json")


def test_search_writes_run_files(cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["search", "--config", str(cfg_path), "--out", str(out)]) == 0
    for name in ("history.jsonl", "summary.json", "curves.csv", "config.json"):
        assert (out / name).is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["generations"] == 3 and summary["method"] == "proposed"
    assert "best fitness" in capsys.readouterr().out


def test_search_is_byte_reproducible(cfg_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["search", "--config", str(cfg_path), "--out", str(a), "--seed", "3"]) == 0
    assert main(["search", "--config", str(cfg_path), "--out", str(b), "--seed", "3"]) == 0
    assert (a / "history.jsonl").read_bytes() == (b / "history.jsonl").read_bytes()


def test_env_var_sets_output_dir(cfg_path, tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env_out"))
    assert main(["search", "--config", str(cfg_path)]) == 0
    assert (tmp_path / "env_out" / "history.jsonl").is_file()


@pytest.mark.parametrize("method", ["small_set", "large_set", "random"])
def test_search_runs_every_method(tmp_path, method):
    cfg = write_config(tmp_path / "cfg.json", method=method)
    assert main(["search", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert RunHistory.read(tmp_path / "r").method == method


def test_curves_are_ordered_in_time(cfg_path, tmp_path):
    main(["search", "--config", str(cfg_path), "--out", str(tmp_path / "r")])
    with open(tmp_path / "r" / "curves.csv") as fh:
        rows = list(csv.DictReader(fh))
    elapsed = [float(r["elapsed_seconds"]) for r in rows]
    assert elapsed == sorted(elapsed)


def test_random_search_curve_never_drops(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", method="random", budget_evals=300,
                       generations=None)
    main(["search", "--config", str(cfg), "--out", str(tmp_path / "r")])
    with open(tmp_path / "r" / "curves.csv") as fh:
        best = [float(r["best_fitness"]) for r in csv.DictReader(fh)]
    assert len(best) == 30
    assert all(b >= a for a, b in zip(best, best[1:]))


def test_elitism_curve_never_drops_on_surrogate(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", elitism=True, generations=8)
    main(["search", "--config", str(cfg), "--out", str(tmp_path / "r")])
    best = [r["best_fitness"] for r in RunHistory.read(tmp_path / "r").curve_rows()]
    assert all(b >= a for a, b in zip(best, best[1:]))


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["search", "--config", str(tmp_path / "none.json")]) == 2
    assert "config not found" in capsys.readouterr().err


def test_bad_config_exits_2_naming_field(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", n_m="many")
    assert main(["search", "--config", str(cfg)]) == 2
    assert "'n_m'" in capsys.readouterr().err


def test_compare_writes_one_row_per_method_and_seed(cfg_path, tmp_path, capsys):
    out = tmp_path / "cmp"
    code = main(["compare", "--config", str(cfg_path), "--methods", "proposed,random",
                 "--seeds", "20", "--out", str(out)])
    assert code == 0
    with open(out / "comparison.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40
    assert {r["method"] for r in rows} == {"proposed", "random"}
    assert sorted({int(r["seed"]) for r in rows}) == list(range(20))
    assert "median_best" in (out / "comparison.txt").read_text()
    assert "proposed" in capsys.readouterr().out


def test_compare_unknown_method_exits_2(cfg_path, tmp_path, capsys):
    assert main(["compare", "--config", str(cfg_path), "--methods", "proposed,annealing",
                 "--out", str(tmp_path / "x")]) == 2
    assert "annealing" in capsys.readouterr().err


def test_compare_equal_time(cfg_path, tmp_path):
    code = main(["compare", "--config", str(cfg_path), "--methods", "proposed,small_set",
                 "--seeds", "2", "--equal-time", "0.05", "--out", str(tmp_path / "t")])
    assert code == 0


def test_gradcheck_passes_and_lists_every_combination(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    names = [name for name, *_ in harness.gradcheck_specs()]
    for name in names:
        assert name in out
    assert "FAIL" not in out


def test_gradcheck_corrupted_gradient_exits_1(capsys):
    assert main(["gradcheck", "--corrupt-gradient"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_report_round_trips_best_candidate(cfg_path, tmp_path, capsys):
    out = tmp_path / "r"
    main(["search", "--config", str(cfg_path), "--out", str(out)])
    capsys.readouterr()
    assert main(["report", "--run", str(out)]) == 0
    text = capsys.readouterr().out
    best = RunHistory.read(out).best_candidate()
    parsed = harness.parse_candidate(text)
    assert parsed.genome == best.genome and parsed.params == best.params
    assert "conv 1:" in text and "dense 1:" in text


def test_report_on_empty_dir(tmp_path, capsys):
    assert main(["report", "--run", str(tmp_path)]) == 2
    assert "no history found" in capsys.readouterr().err


def test_report_on_corrupt_history(tmp_path, capsys):
    (tmp_path / "history.jsonl").write_text("{broken\n")
    assert main(["report", "--run", str(tmp_path)]) == 1
    assert "corrupt history line 1" in capsys.readouterr().err
