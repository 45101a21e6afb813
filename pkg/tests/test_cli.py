"""Config handling, trend classification, and experiment emission."""

import json

import pytest

from dispatchsim.cli import (
    ExperimentConfig,
    classify_trend,
    load_config,
    main,
    run_experiment,
    write_results,
)
from dispatchsim.core import ConfigError


BASE_TOML = """
policy = "sq_d"
d = 2
n = [8, 12]
load = 0.6
jobs = 1500
replications = 2
seed = 7
"""


def _write(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


# -- config --------------------------------------------------------------------


def test_load_config_and_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, BASE_TOML))
    assert cfg.policy == "sq_d" and cfg.d == 2
    assert cfg.n == [8, 12]
    assert cfg.format == "csv" and cfg.warmup == 0.2


def test_unknown_keys_are_hard_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys: jbos"):
        load_config(_write(tmp_path, BASE_TOML + "\njbos = 3\n"))


def test_empty_n_list_rejected(tmp_path):
    with pytest.raises(ConfigError, match="nonempty"):
        load_config(_write(tmp_path, BASE_TOML.replace("n = [8, 12]", "n = []")))


def test_invalid_values_rejected(tmp_path):
    for patch in (
        ('policy = "sq_d"', 'policy = "nope"'),
        ("load = 0.6", "load = 1.4"),
        ("jobs = 1500", "jobs = 0"),
    ):
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, BASE_TOML.replace(*patch)))


def test_config_round_trips():
    cfg = ExperimentConfig(policy="jiq", n=[10, 20], load=0.5, jobs=100)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


# -- trend classification ----------------------------------------------------------


def test_flat_series_is_positive():
    assert classify_trend([1.00, 0.98, 1.01], [0.01, 0.01, 0.01]) == "POSITIVE"


def test_decaying_series_is_vanishing():
    assert classify_trend([0.40, 0.08, 0.015], [0.01, 0.005, 0.002]) == "VANISHING"


def test_wide_intervals_are_inconclusive():
    assert classify_trend([0.5, 0.4, 0.45], [0.3, 0.3, 0.3]) == "INCONCLUSIVE"


def test_decay_without_tenfold_drop_is_not_vanishing():
    assert classify_trend([0.4, 0.3, 0.2], [0.01, 0.01, 0.01]) != "VANISHING"


def test_trend_needs_three_points():
    with pytest.raises(ConfigError):
        classify_trend([1.0, 0.5], [0.1, 0.1])


# -- experiment runs ----------------------------------------------------------------


def test_run_experiment_emits_deterministic_csv(tmp_path):
    cfg = load_config(_write(tmp_path, BASE_TOML))
    result = run_experiment(cfg)
    assert len(result.rows) == 2
    for row in result.rows:
        assert row["delay_status"] == "ok"
        assert row["msg_rate_query"] > 0
        assert row["memory_bits"] == 0

    out1 = write_results(result, tmp_path / "a")
    out2 = write_results(run_experiment(cfg), tmp_path / "b")
    assert out1.read_bytes() == out2.read_bytes()
    header, columns = out1.read_text().splitlines()[:2]
    assert header == "# dispatchsim-results v1"
    assert columns.startswith("policy,n,load")


def test_run_experiment_json_format(tmp_path):
    cfg = load_config(_write(tmp_path, BASE_TOML.replace('policy = "sq_d"\nd = 2', 'policy = "random"')))
    cfg.format = "json"
    result = run_experiment(cfg)
    path = write_results(result, tmp_path / "out")
    payload = json.loads(path.read_text())
    assert payload["schema"] == "dispatchsim-results/1"
    assert len(payload["rows"]) == 2
    assert payload["rows"][0]["msg_rate_total"] == 0.0


def test_parallel_workers_match_serial(tmp_path):
    cfg = load_config(_write(tmp_path, BASE_TOML))
    serial = run_experiment(cfg)
    cfg.workers = 2
    parallel = run_experiment(cfg)
    assert serial.rows == parallel.rows


def test_declared_columns_match_catalog(tmp_path):
    cfg = load_config(_write(tmp_path, BASE_TOML))
    result = run_experiment(cfg)
    for row, n in zip(result.rows, cfg.n):
        assert row["declared_msg_rate"] == pytest.approx(2 * 2 * 0.6 * n)


def test_probe_toggle_fills_probe_columns(tmp_path):
    text = BASE_TOML.replace("n = [8, 12]", "n = [10]") + (
        "probe = true\nprobe_gamma = 0.3\nprobe_windows = 800\nprobe_spacing = 0.05\n"
    )
    cfg = load_config(_write(tmp_path, text))
    result = run_experiment(cfg)
    row = result.rows[0]
    # 800 windows are below the conclusiveness floor; the verdict says so
    assert row["probe_status"] == "inconclusive"
    assert row["probe_all_passed"] == "false"


# -- entry point ----------------------------------------------------------------------


def test_main_success_and_output(tmp_path, capsys):
    path = _write(tmp_path, BASE_TOML + f'\noutput = "{tmp_path}/run1"\n')
    code = main([str(path), "--verbose"])
    assert code == 0
    out = capsys.readouterr().out
    assert "wrote" in out
    assert (tmp_path / "run1" / "results.csv").exists()


def test_main_config_error_exit_code(tmp_path, capsys):
    assert main([str(tmp_path / "missing.toml")]) == 1
    bad = _write(tmp_path, BASE_TOML + "\nmystery = 1\n")
    assert main([str(bad)]) == 1
    assert "config error" in capsys.readouterr().err


def test_main_strict_inconclusive_exit_code(tmp_path):
    # starved runs cannot produce a conclusive estimate or trend
    text = BASE_TOML.replace("jobs = 1500", "jobs = 12").replace("n = [8, 12]", "n = [8]")
    path = _write(tmp_path, text + f'\noutput = "{tmp_path}/run2"\n')
    assert main([str(path), "--strict"]) == 3
    assert main([str(path)]) == 0


def test_main_seed_override_changes_results(tmp_path):
    path = _write(tmp_path, BASE_TOML + f'\noutput = "{tmp_path}/s1"\n')
    assert main([str(path), "--seed", "1"]) == 0
    first = (tmp_path / "s1" / "results.csv").read_bytes()
    assert main([str(path), "--seed", "2"]) == 0
    second = (tmp_path / "s1" / "results.csv").read_bytes()
    assert first != second
