"""Empirical probes of the steady-state quantities behind the delay bound.

The probes watch the system at the starts of many short disjoint windows of
length ``gamma/n`` and tally four indicators per window:

* heavy load: at least ``gamma*n`` servers hold at least ``2*gamma`` of
  unfinished work;
* no imminent completion: no in-service job has less than ``gamma/n`` of
  work left (the complement is exactly "a departure occurs inside the
  window");
* an arrival burst: the (c+1)-st arrival after the window start lands inside
  the window, with no spontaneous-clock tick before it;
* large incoming jobs: those c+1 jobs all have size at least ``2*gamma``.

Three steady-state facts are checked quantitatively: departures inside a
window are no more frequent than ``load*gamma``; the heavy-load indicator
has probability at least ``load - 2*load*gamma - gamma``; and the average
number of idle servers is ``(1-load)*n``.  Confidence intervals come from
batch means over consecutive windows, which absorbs the correlation between
nearby windows.

The arrival-burst probability is also measurable without any queueing: it is
a property of the renewal process alone, with the first arrival drawn as a
stationary residual.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as _stats

from .arrivals import DistributionSpec, InterarrivalSpec, SizeSpec
from .core import ConfigError, PolicyDefinition, SystemState
from .engine import MetricsLog, RngStreams, Simulation, WindowConfig

__all__ = [
    "BadEventConfig",
    "BadEventTally",
    "census",
    "build_tally",
    "BoundCheck",
    "WindowBoundsReport",
    "probe_window_bounds",
    "ArrivalBurstReport",
    "probe_arrival_burst",
]

MIN_CONCLUSIVE_WINDOWS = 10_000


@dataclass(frozen=True)
class BadEventConfig:
    """Probe parameters: the workload scale gamma and the memory exponent c.

    Each probe window has length ``gamma / n``.
    """

    gamma: float
    c: int = 1

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1]")
        if self.c < 0:
            raise ConfigError("c must be nonnegative")

    def window_length(self, n: int) -> float:
        return self.gamma / n


def census(state, gamma: float):
    """Counts (heavy, idle, draining) for a full state snapshot.

    ``state`` is a :class:`SystemState` or a sequence of queue snapshots.
    Heavy servers hold at least ``2*gamma`` total work, idle servers none,
    draining servers something in between; the counts sum to n.
    """
    queues = state.queues if isinstance(state, SystemState) else state
    n_heavy = n_idle = n_drain = 0
    for q in queues:
        total = sum(q.workloads)
        if total == 0.0:
            n_idle += 1
        elif total >= 2.0 * gamma:
            n_heavy += 1
        else:
            n_drain += 1
    return n_heavy, n_idle, n_drain


@dataclass
class BadEventTally:
    """Per-window indicators and counts, aligned by window index."""

    config: BadEventConfig
    n: int
    times: np.ndarray
    n_heavy: np.ndarray
    n_idle: np.ndarray
    n_draining: np.ndarray
    heavy_event: np.ndarray  # n_heavy >= gamma * n
    departure_event: np.ndarray  # some head inside (0, gamma/n)
    burst_event: np.ndarray  # (c+1)-st arrival and no spontaneous tick in window
    large_jobs_event: np.ndarray  # those c+1 jobs all of size >= 2*gamma
    burst_valid: np.ndarray  # enough arrivals after the window to judge

    @property
    def window_count(self) -> int:
        return len(self.times)

    def census_identity_ok(self) -> bool:
        return bool(np.all(self.n_heavy + self.n_idle + self.n_draining == self.n))


def build_tally(log: MetricsLog, config: BadEventConfig) -> BadEventTally:
    """Assemble window indicators from a run's window records and job trace."""
    if not log.windows:
        raise ConfigError("the run recorded no probe windows")
    n = log.n
    length = config.window_length(n)
    times = np.array([w.time for w in log.windows])
    n_heavy = np.array([w.n_heavy for w in log.windows])
    n_idle = np.array([w.n_idle for w in log.windows])
    n_drain = np.array([w.n_draining for w in log.windows])
    departures = np.array([w.head_in_band for w in log.windows], dtype=bool)

    arr = np.asarray(log.job_arrival_times)
    sizes = np.asarray(log.job_sizes)
    spont = np.asarray(log.spontaneous_times)
    c = config.c

    burst = np.zeros(len(times), dtype=bool)
    large = np.zeros(len(times), dtype=bool)
    valid = np.zeros(len(times), dtype=bool)
    first = np.searchsorted(arr, times, side="right")
    for k, t0 in enumerate(times):
        j = first[k]
        if j + c >= len(arr):
            continue
        valid[k] = True
        in_window = arr[j + c] < t0 + length
        if in_window and spont.size:
            s_idx = np.searchsorted(spont, t0, side="right")
            if s_idx < len(spont) and spont[s_idx] <= t0 + length:
                in_window = False
        burst[k] = in_window
        large[k] = bool(np.all(sizes[j : j + c + 1] >= 2.0 * config.gamma))
    return BadEventTally(
        config=config,
        n=n,
        times=times,
        n_heavy=n_heavy,
        n_idle=n_idle,
        n_draining=n_drain,
        heavy_event=n_heavy >= config.gamma * n,
        departure_event=departures,
        burst_event=burst,
        large_jobs_event=large,
        burst_valid=valid,
    )


def _batch_mean_margin(values: np.ndarray, batches: int, one_sided: float = 0.99):
    """Mean and one-sided confidence margin via batch means."""
    m = float(values.mean())
    if len(values) < batches * 2:
        return m, math.inf
    per = len(values) // batches
    bm = values[: per * batches].reshape(batches, per).mean(axis=1)
    sd = float(bm.std(ddof=1))
    tq = float(_stats.t.ppf(one_sided, batches - 1))
    return m, tq * sd / math.sqrt(batches)


@dataclass(frozen=True)
class BoundCheck:
    """One inequality check: empirical value with a one-sided 99% margin
    against the stated bound."""

    name: str
    empirical: float
    margin: float
    bound: float
    relation: str  # "<=", ">=", "=="
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "empirical": self.empirical,
            "margin_99": self.margin,
            "bound": self.bound,
            "relation": self.relation,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class WindowBoundsReport:
    status: str  # ok | inconclusive
    reason: str
    n: int
    load: float
    config: BadEventConfig
    windows_used: int
    checks: tuple = ()
    tally_means: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return self.status == "ok" and all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "n": self.n,
            "load": self.load,
            "gamma": self.config.gamma,
            "c": self.config.c,
            "windows_used": self.windows_used,
            "checks": [c.to_json_dict() for c in self.checks],
            "tally_means": self.tally_means,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def probe_window_bounds(
    policy: PolicyDefinition,
    n: int,
    load: float,
    gamma: float,
    windows: int,
    *,
    c: int = 1,
    spacing: Optional[float] = None,
    warmup_time: Optional[float] = None,
    seed=0,
    batches: int = 30,
    arrival_family: str = "exponential",
    arrival_params: Optional[dict] = None,
    size_spec: Optional[DistributionSpec] = None,
) -> WindowBoundsReport:
    """Simulate past a warm-up, observe ``windows`` disjoint windows, and
    compare the empirical frequencies with the steady-state bounds.

    Checks, each with a one-sided 99% batch-means margin:

    * P(departure inside a window) at most ``load * gamma``;
    * P(at least gamma*n heavy servers) at least ``load*(1-2*gamma) - gamma``;
    * mean idle fraction equal to ``1 - load`` (two-sided).
    """
    config = BadEventConfig(gamma=gamma, c=c)
    if windows < 1:
        raise ConfigError("window count must be positive")
    if spacing is None:
        spacing = max(0.01, 2.0 * gamma / n)
    if warmup_time is None:
        warmup_time = 30.0 / (1.0 - load)
    if not 0.0 < load < 1.0:
        raise ConfigError("load must be in (0, 1)")

    window_config = WindowConfig(
        gamma=gamma,
        count=windows,
        spacing=spacing,
        start_time=warmup_time,
        record_spontaneous=policy.spontaneous_rate > 0.0,
    )
    arrival_spec = InterarrivalSpec(arrival_family, load * n, **(arrival_params or {}))
    sim = Simulation(
        policy,
        n,
        arrival_spec,
        size_spec or SizeSpec("exponential"),
        RngStreams.from_seed(seed),
        window_config=window_config,
    )
    horizon = warmup_time + windows * spacing + gamma
    log = sim.run(horizon=horizon)
    tally = build_tally(log, config)
    if not tally.census_identity_ok():
        raise AssertionError("window census identity violated")

    used = tally.window_count
    means = {
        "departure_event": float(tally.departure_event.mean()),
        "heavy_event": float(tally.heavy_event.mean()),
        "idle_fraction": float(tally.n_idle.mean()) / n,
        "burst_event": float(tally.burst_event[tally.burst_valid].mean())
        if tally.burst_valid.any()
        else float("nan"),
        "large_jobs_event": float(tally.large_jobs_event[tally.burst_valid].mean())
        if tally.burst_valid.any()
        else float("nan"),
    }
    if used < MIN_CONCLUSIVE_WINDOWS:
        return WindowBoundsReport(
            status="inconclusive",
            reason=f"{used} windows recorded, need {MIN_CONCLUSIVE_WINDOWS}",
            n=n,
            load=load,
            config=config,
            windows_used=used,
            tally_means=means,
        )

    dep_mean, dep_margin = _batch_mean_margin(
        tally.departure_event.astype(float), batches
    )
    heavy_mean, heavy_margin = _batch_mean_margin(
        tally.heavy_event.astype(float), batches
    )
    idle_mean, idle_margin = _batch_mean_margin(tally.n_idle / n, batches)

    checks = (
        BoundCheck(
            name="departure_probability",
            empirical=dep_mean,
            margin=dep_margin,
            bound=load * gamma,
            relation="<=",
            passed=dep_mean + dep_margin <= load * gamma,
        ),
        BoundCheck(
            name="heavy_probability",
            empirical=heavy_mean,
            margin=heavy_margin,
            bound=load - 2.0 * load * gamma - gamma,
            relation=">=",
            passed=heavy_mean - heavy_margin >= load - 2.0 * load * gamma - gamma,
        ),
        BoundCheck(
            name="idle_fraction",
            empirical=idle_mean,
            margin=idle_margin,
            bound=1.0 - load,
            relation="==",
            passed=abs(idle_mean - (1.0 - load)) <= idle_margin,
        ),
    )
    return WindowBoundsReport(
        status="ok",
        reason="",
        n=n,
        load=load,
        config=config,
        windows_used=used,
        checks=checks,
        tally_means=means,
    )


@dataclass(frozen=True)
class ArrivalBurstReport:
    """Monte Carlo estimate of the stationary arrival-burst probability
    against its renewal lower bound."""

    family: str
    n: int
    load: float
    gamma: float
    c: int
    samples: int
    empirical: float
    margin: float
    delta_hat: float  # P(gap <= gamma / ((c+1) n))
    bound: float
    assumption_ok: bool
    passed: bool

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "load": self.load,
            "gamma": self.gamma,
            "c": self.c,
            "samples": self.samples,
            "empirical": self.empirical,
            "margin_99": self.margin,
            "delta_hat": self.delta_hat,
            "bound": self.bound,
            "assumption_ok": self.assumption_ok,
            "passed": self.passed,
        }


def _residual_array(spec: DistributionSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Stationary residual times: uniform position in a length-biased gap."""
    fam = spec.family
    u = rng.random(size)
    if fam == "exponential":
        return -spec.mean * np.log1p(-u)
    if fam == "deterministic":
        return u * spec.mean
    if fam == "uniform":
        lo = spec.mean * (1.0 - spec.half_width)
        hi = spec.mean * (1.0 + spec.half_width)
        biased = np.sqrt(lo * lo + rng.random(size) * (hi * hi - lo * lo))
        return u * biased
    s1, s2 = spec._hyper_scales()
    w1 = spec.p * s1
    w2 = (1.0 - spec.p) * s2
    scales = np.where(rng.random(size) < w1 / (w1 + w2), s1, s2)
    biased = -scales * (np.log1p(-rng.random(size)) + np.log1p(-rng.random(size)))
    return u * biased


def probe_arrival_burst(
    family: str,
    n: int,
    load: float,
    gamma: float,
    c: int,
    samples: int = 1_000_000,
    seed: int = 0,
    **family_params,
) -> ArrivalBurstReport:
    """Estimate P(the (c+1)-st arrival occurs within gamma/n of a stationary
    time origin) and compare it with the lower bound
    ``(load*gamma/(c+1)) * delta^(c+1)`` where delta is the probability of a
    gap of at most ``gamma/((c+1)*n)``.

    Pure renewal computation: no queues are simulated.  The first arrival is
    a stationary residual; the remaining c gaps are fresh inter-arrivals.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    if not 0.0 < load < 1.0:
        raise ConfigError("load must be in (0, 1)")
    if not 0.0 < gamma <= 1.0:
        raise ConfigError("gamma must be in (0, 1]")
    if c < 0:
        raise ConfigError("c must be nonnegative")
    if samples < 1:
        raise ConfigError("sample count must be positive")

    spec = InterarrivalSpec(family, load * n, **family_params)
    rng = np.random.Generator(np.random.PCG64(seed))
    t = _residual_array(spec, rng, samples)
    for _ in range(c):
        t = t + spec.sample_array(rng, samples)
    window = gamma / n
    hits = int(np.count_nonzero(t < window))
    p_hat = hits / samples
    z99 = 2.3263478740408408
    margin = z99 * math.sqrt(max(p_hat * (1.0 - p_hat), 1.0 / samples) / samples)

    small_gap = gamma / ((c + 1) * n)
    delta = spec.small_gap_probability(small_gap)
    if delta is None:
        delta = float(np.mean(spec.sample_array(rng, samples) <= small_gap))
    bound = (load * gamma / (c + 1)) * delta ** (c + 1)
    assumption_ok = delta > 0.0
    passed = assumption_ok and (p_hat - margin >= bound)
    return ArrivalBurstReport(
        family=family,
        n=n,
        load=load,
        gamma=gamma,
        c=c,
        samples=samples,
        empirical=p_hat,
        margin=margin,
        delta_hat=float(delta),
        bound=bound,
        assumption_ok=assumption_ok,
        passed=passed,
    )
