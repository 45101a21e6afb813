"""Census, bad-event tallies, and the renewal burst probe."""

import math

import numpy as np
import pytest

from dispatchsim.core import ConfigError, ServerQueue, SystemState, MemoryState
from dispatchsim.engine import WindowConfig
from dispatchsim.policies import make_random
from dispatchsim.probe import (
    BadEventConfig,
    build_tally,
    census,
    probe_arrival_burst,
    probe_window_bounds,
)
from dispatchsim.engine import RngStreams, Simulation
from dispatchsim.arrivals import InterarrivalSpec, SizeSpec


def _state(queues):
    return SystemState(
        queues=tuple(queues), memory=MemoryState(0, 0), residual_arrival=0.0
    )


# -- census ---------------------------------------------------------------------


def test_census_empty_system():
    state = _state([ServerQueue(()) for _ in range(7)])
    assert census(state, 0.1) == (0, 7, 0)


def test_census_all_heavy():
    # every queue holds one unit job; 1.0 >= 2 * 0.3
    state = _state([ServerQueue((1.0,)) for _ in range(5)])
    assert census(state, 0.3) == (5, 0, 0)


def test_census_mixed_counts_sum():
    state = _state(
        [ServerQueue(()), ServerQueue((0.05,)), ServerQueue((3.0,)), ServerQueue((0.1, 0.02))]
    )
    n_heavy, n_idle, n_drain = census(state, 0.1)
    assert (n_heavy, n_idle, n_drain) == (1, 1, 2)
    assert n_heavy + n_idle + n_drain == 4


def test_bad_event_config_validation():
    with pytest.raises(ConfigError):
        BadEventConfig(gamma=0.0)
    with pytest.raises(ConfigError):
        BadEventConfig(gamma=1.5)
    with pytest.raises(ConfigError):
        BadEventConfig(gamma=0.1, c=-1)
    assert BadEventConfig(gamma=0.1).window_length(200) == pytest.approx(5e-4)


# -- window tallies ----------------------------------------------------------------


def _window_run(n=30, load=0.8, gamma=0.2, count=3000, seed=0, spacing=0.02, start=50.0):
    cfg = WindowConfig(gamma=gamma, count=count, spacing=spacing, start_time=start)
    sim = Simulation(
        make_random(n),
        n,
        InterarrivalSpec("exponential", load * n),
        SizeSpec("exponential"),
        RngStreams.from_seed(seed),
        window_config=cfg,
    )
    log = sim.run(horizon=start + count * spacing + 1.0)
    return log


def test_tally_census_identity_and_drain_bound():
    log = _window_run()
    tally = build_tally(log, BadEventConfig(gamma=0.2, c=1))
    assert tally.window_count == 3000
    assert tally.census_identity_ok()
    assert all(w.drain_bound_ok for w in log.windows)


def test_tally_indicators_are_booleans_with_sane_frequencies():
    log = _window_run()
    tally = build_tally(log, BadEventConfig(gamma=0.2, c=1))
    # at load 0.8 the heavy count concentrates well above gamma * n
    assert tally.heavy_event.mean() > 0.9
    assert 0.0 < tally.departure_event.mean() < 0.5
    assert 0.0 <= tally.burst_event[tally.burst_valid].mean() < 0.1
    # idle fraction near 1 - load
    assert abs(tally.n_idle.mean() / 30 - 0.2) < 0.05


def test_window_bounds_report_passes_at_moderate_load():
    report = probe_window_bounds(
        make_random(50), 50, 0.8, gamma=0.3, windows=12_000, seed=5
    )
    assert report.status == "ok"
    assert report.windows_used == 12_000
    by_name = {c.name: c for c in report.checks}
    dep = by_name["departure_probability"]
    assert dep.relation == "<=" and dep.bound == pytest.approx(0.24)
    assert dep.passed, f"departure check failed: {dep}"
    heavy = by_name["heavy_probability"]
    assert heavy.relation == ">=" and heavy.bound == pytest.approx(0.8 - 0.48 - 0.3)
    assert heavy.passed, f"heavy check failed: {heavy}"
    idle = by_name["idle_fraction"]
    assert abs(idle.empirical - 0.2) < 0.03


def test_window_bounds_inconclusive_with_few_windows():
    report = probe_window_bounds(
        make_random(10), 10, 0.5, gamma=0.2, windows=500, seed=7, warmup_time=20.0
    )
    assert report.status == "inconclusive"
    assert not report.checks
    assert "500 windows" in report.reason


def test_window_bounds_phase_invariance():
    a = probe_window_bounds(
        make_random(30), 30, 0.7, gamma=0.3, windows=10_000, seed=11, warmup_time=100.0
    )
    b = probe_window_bounds(
        make_random(30), 30, 0.7, gamma=0.3, windows=10_000, seed=11, warmup_time=100.005
    )
    pa = {c.name: c for c in a.checks}["departure_probability"]
    pb = {c.name: c for c in b.checks}["departure_probability"]
    assert abs(pa.empirical - pb.empirical) <= 3.0 * (pa.margin + pb.margin) + 1e-3


def test_report_serializes(tmp_path):
    report = probe_window_bounds(
        make_random(20), 20, 0.6, gamma=0.3, windows=10_000, seed=13, warmup_time=50.0
    )
    path = tmp_path / "probe.json"
    report.write_json(path)
    import json

    payload = json.loads(path.read_text())
    assert payload["status"] == "ok"
    assert {c["name"] for c in payload["checks"]} == {
        "departure_probability",
        "heavy_probability",
        "idle_fraction",
    }


# -- renewal burst probe ---------------------------------------------------------------


def test_burst_probability_matches_erlang_for_poisson_c1():
    # stationary origin plus one fresh gap: both exponential(load * n)
    load, gamma, n, c = 0.9, 0.1, 200, 1
    report = probe_arrival_burst("exponential", n, load, gamma, c, samples=1_000_000, seed=1)
    x = load * gamma
    want = 1.0 - math.exp(-x) * (1.0 + x)
    assert report.empirical == pytest.approx(want, abs=4.0 * report.margin / 2.33)
    assert report.assumption_ok
    assert report.passed
    # delta has the closed form 1 - exp(-load * gamma / (c + 1))
    assert report.delta_hat == pytest.approx(1.0 - math.exp(-x / 2), rel=1e-9)
    assert report.bound == pytest.approx((x / 2) * report.delta_hat**2, rel=1e-9)


def test_burst_probability_c0_is_residual_tail():
    load, gamma, n = 0.9, 0.1, 100
    report = probe_arrival_burst("exponential", n, load, gamma, 0, samples=500_000, seed=2)
    want = 1.0 - math.exp(-load * gamma)
    assert report.empirical == pytest.approx(want, abs=0.002)
    assert report.passed


def test_burst_probe_flags_deterministic_arrivals():
    report = probe_arrival_burst("deterministic", 100, 0.9, 0.1, 1, samples=100_000, seed=3)
    assert report.empirical == 0.0
    assert report.delta_hat == 0.0
    assert not report.assumption_ok
    assert not report.passed


def test_burst_probe_validation():
    with pytest.raises(ConfigError):
        probe_arrival_burst("exponential", 0, 0.9, 0.1, 1)
    with pytest.raises(ConfigError):
        probe_arrival_burst("exponential", 10, 1.2, 0.1, 1)
    with pytest.raises(ConfigError):
        probe_arrival_burst("exponential", 10, 0.9, 0.0, 1)
