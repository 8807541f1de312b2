import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gabigan.config import (
    OUT_DIR_ENV,
    ConfigError,
    RunConfig,
    from_flat,
    load_config,
    resolve_out_dir,
)


def test_minimal_document_gives_defaults():
    assert from_flat({"schema_version": 1}) == RunConfig()


def test_flat_round_trip_of_defaults():
    cfg = RunConfig()
    assert from_flat(json.loads(json.dumps(cfg.to_flat()))) == cfg


@settings(max_examples=40, deadline=None)
@given(n_m=st.integers(6, 60), m=st.integers(1, 200), width=st.floats(0.01, 1.0),
       method=st.sampled_from(["proposed", "small_set", "large_set", "random"]),
       budget=st.one_of(st.none(), st.integers(1, 10_000)))
def test_flat_round_trip(n_m, m, width, method, budget):
    doc = {"schema_version": 1, "n_m": n_m, "m": m, "surrogate_width": width,
           "method": method, "budget_evals": budget, "small_filters": [2, 8],
           "gen_hidden": [8, 4]}
    cfg = from_flat(doc)
    assert from_flat(json.loads(json.dumps(cfg.to_flat()))) == cfg
    assert cfg.ga.n_m == n_m and cfg.bigan.m == m and cfg.ga.budget_evals == budget
    assert cfg.baseline_variant("small_set").filter_choices == (2, 8)


@pytest.mark.parametrize("doc, field", [
    ({}, "schema_version"),
    ({"schema_version": 2}, "schema_version"),
    ({"schema_version": 1, "n_m": "ten"}, "n_m"),
    ({"schema_version": 1, "n_m": True}, "n_m"),
    ({"schema_version": 1, "gen_lr": "fast"}, "gen_lr"),
    ({"schema_version": 1, "elitism": 1}, "elitism"),
    ({"schema_version": 1, "popsize": 10}, "popsize"),
    ({"schema_version": 1, "method": "hillclimb"}, "method"),
    ({"schema_version": 1, "fitness": "oracle"}, "fitness"),
    ({"schema_version": 1, "workers": 0}, "workers"),
    ({"schema_version": 1, "neuron_bounds": 5}, "neuron_bounds"),
    ({"schema_version": 1, "seed": None}, "seed"),
])
def test_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError, match=f"'{field}'"):
        from_flat(doc)


def test_section_level_errors_are_reported():
    with pytest.raises(ConfigError, match="section 'limits'.*neuron_bounds"):
        from_flat({"schema_version": 1, "neuron_bounds": [50, 20]})
    with pytest.raises(ConfigError, match="section 'ga'"):
        from_flat({"schema_version": 1, "t": 30, "n_m": 10})


def test_load_config_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="config not found"):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(bad)


def test_save_then_load(tmp_path):
    cfg = from_flat({"schema_version": 1, "method": "random", "random_keep": "best",
                     "filter_bounds": [1, 32], "C": 2})
    cfg.save(tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg


def test_out_dir_precedence(monkeypatch):
    cfg = RunConfig(out_dir="from_config")
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    assert str(resolve_out_dir(None, cfg)) == "from_config"
    monkeypatch.setenv(OUT_DIR_ENV, "from_env")
    assert str(resolve_out_dir(None, cfg)) == "from_env"
    assert str(resolve_out_dir("from_flag", cfg)) == "from_flag"
