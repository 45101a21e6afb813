"""Event-driven simulation of the dispatching system.

The simulated objects are ``n`` FIFO queues served at unit rate, one memory
word at the dispatcher, and the residual clock of the arrival process.  The
event loop advances from event to event (arrivals, spontaneous-message
ticks, service completions, plus passive census/window observations), so
departure times are exact rather than discretized.

Tie rule at equal timestamps: DEPARTURE before ARRIVAL before SPONTANEOUS,
then by scheduling sequence number.  With continuous input distributions
ties are null events; the fixed rule keeps runs deterministic when tests
supply discrete inputs.

Message accounting: each sampled server costs one query and one response
message; a spontaneous hit or a departure flag costs one message.  Every
charged message is attributable to exactly one of those mechanisms.

Delay accounting: each job's queueing delay is the total unfinished work in
its destination queue at the instant of dispatch.  The engine computes it by
draining the destination's workload at unit rate from the last dispatch to
that server (``max(0, previous workload - elapsed)``), which is exact for
work-conserving unit-rate FIFO servers and lets an external replay of the
job trace reproduce every delay bit for bit.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as _stats

from .arrivals import DistributionSpec, SizeSpec
from .core import (
    ConfigError,
    MemoryState,
    PolicyContractError,
    PolicyDefinition,
    ServerQueue,
    SystemState,
)

__all__ = [
    "EVENT_DEPARTURE",
    "EVENT_ARRIVAL",
    "EVENT_SPONTANEOUS",
    "UniformStream",
    "RngStreams",
    "CensusSnapshot",
    "WindowRecord",
    "WindowConfig",
    "MetricsLog",
    "Simulation",
    "run",
    "DelayEstimate",
    "estimate_delay",
    "MessageRateEstimate",
    "estimate_message_rate",
]

# event kinds, in tie-break order
EVENT_DEPARTURE = 0
EVENT_ARRIVAL = 1
EVENT_SPONTANEOUS = 2
EVENT_CENSUS = 3
EVENT_WINDOW = 4

_EMPTY_QUEUE = ServerQueue(())


class UniformStream:
    """Buffered uniform [0,1) stream over a dedicated PCG64 generator."""

    __slots__ = ("_gen", "_buf", "_pos")

    _BLOCK = 8192

    def __init__(self, seed_seq):
        self._gen = np.random.Generator(np.random.PCG64(seed_seq))
        self._buf = self._gen.random(self._BLOCK)
        self._pos = 0

    def random(self) -> float:
        pos = self._pos
        if pos >= self._BLOCK:
            self._buf = self._gen.random(self._BLOCK)
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]


@dataclass
class RngStreams:
    """Independently seeded streams for every source of randomness.

    Replaying the same root seed reproduces the identical event trace.  The
    ``init`` stream is reserved for randomized initial conditions; the
    default empty-system start does not consume it.
    """

    arrivals: UniformStream
    spontaneous: UniformStream
    sizes: UniformStream
    u: UniformStream
    v: UniformStream
    x: UniformStream
    y: UniformStream
    init: UniformStream

    @classmethod
    def from_seed(cls, seed) -> "RngStreams":
        root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        children = root.spawn(8)
        return cls(*(UniformStream(c) for c in children))


@dataclass(frozen=True)
class CensusSnapshot:
    """Periodic state observation.

    ``n_heavy`` counts servers with at least ``2*gamma`` total unfinished
    work, ``n_idle`` the empty ones, ``n_draining`` the remainder; the three
    always sum to ``n``.  ``busy_integral`` is the running time integral of
    the number of busy servers, and the message/arrival/departure fields are
    cumulative, so differencing two snapshots gives exact windowed rates.
    ``queue_len_counts[j]`` counts servers with exactly ``j`` jobs, with the
    last bin absorbing longer queues.
    """

    time: float
    n_heavy: int
    n_idle: int
    n_draining: int
    busy_integral: float
    arrivals: int
    departures: int
    zero_delay_jobs: int
    msg_query: int
    msg_response: int
    msg_spontaneous: int
    msg_departure: int
    queue_len_counts: tuple


@dataclass(frozen=True)
class WindowRecord:
    """State observed at the start of one probe window of length gamma/n."""

    time: float
    n_heavy: int
    n_idle: int
    n_draining: int
    head_in_band: bool
    drain_bound_ok: bool


@dataclass(frozen=True)
class WindowConfig:
    """Schedule of disjoint probe windows.

    Windows are ``spacing`` apart starting at ``start_time``; each window has
    length ``gamma / n``.  ``spacing`` must exceed the window length so the
    windows are disjoint.
    """

    gamma: float
    count: int
    spacing: float
    start_time: float = 0.0
    record_spontaneous: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1]")
        if self.count < 1:
            raise ConfigError("window count must be positive")
        if self.spacing <= 0:
            raise ConfigError("window spacing must be positive")
        if self.start_time < 0:
            raise ConfigError("window start time must be nonnegative")


@dataclass
class MetricsLog:
    """Per-run record: job trace, message counters, and observations."""

    policy: str
    n: int
    arrival_rate: float
    spontaneous_rate: float

    job_arrival_times: list = field(default_factory=list)
    job_sizes: list = field(default_factory=list)
    job_sample_sizes: list = field(default_factory=list)
    job_destinations: list = field(default_factory=list)
    job_delays: list = field(default_factory=list)
    job_samples: list = field(default_factory=list)  # filled when recording samples

    msg_query: int = 0
    msg_response: int = 0
    msg_spontaneous: int = 0
    msg_departure: int = 0

    total_time: float = 0.0
    total_arrivals: int = 0
    total_departures: int = 0
    zero_delay_jobs: int = 0
    busy_integral: float = 0.0

    census: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    spontaneous_times: list = field(default_factory=list)

    @property
    def job_count(self) -> int:
        return len(self.job_delays)

    def job_records(self) -> list:
        """Materialize the trace as JobRecord values (1-based job index).

        Available only for runs that recorded sample vectors."""
        from .core import JobRecord

        if len(self.job_samples) != self.job_count:
            raise ConfigError("sample vectors were not recorded for this run")
        return [
            JobRecord(
                index=k + 1,
                arrival_time=self.job_arrival_times[k],
                size=self.job_sizes[k],
                sampled=self.job_samples[k],
                destination=self.job_destinations[k],
                delay=self.job_delays[k],
            )
            for k in range(self.job_count)
        ]

    @property
    def msg_total(self) -> int:
        return self.msg_query + self.msg_response + self.msg_spontaneous + self.msg_departure

    def delays(self) -> np.ndarray:
        return np.asarray(self.job_delays, dtype=float)

    def to_json_dict(self) -> dict:
        """Documented JSON shape; the per-job trace lives in the CSV."""
        return {
            "schema": "dispatchsim.metrics.v1",
            "policy": self.policy,
            "n": self.n,
            "arrival_rate": self.arrival_rate,
            "spontaneous_rate": self.spontaneous_rate,
            "total_time": self.total_time,
            "total_arrivals": self.total_arrivals,
            "total_departures": self.total_departures,
            "zero_delay_jobs": self.zero_delay_jobs,
            "busy_integral": self.busy_integral,
            "job_count": self.job_count,
            "messages": {
                "query": self.msg_query,
                "response": self.msg_response,
                "spontaneous": self.msg_spontaneous,
                "departure": self.msg_departure,
                "total": self.msg_total,
            },
            "census": [
                {
                    "time": c.time,
                    "n_heavy": c.n_heavy,
                    "n_idle": c.n_idle,
                    "n_draining": c.n_draining,
                    "busy_integral": c.busy_integral,
                    "arrivals": c.arrivals,
                    "departures": c.departures,
                    "zero_delay_jobs": c.zero_delay_jobs,
                    "messages": [c.msg_query, c.msg_response, c.msg_spontaneous, c.msg_departure],
                    "queue_len_counts": list(c.queue_len_counts),
                }
                for c in self.census
            ],
            "windows": [
                {
                    "time": w.time,
                    "n_heavy": w.n_heavy,
                    "n_idle": w.n_idle,
                    "n_draining": w.n_draining,
                    "head_in_band": w.head_in_band,
                    "drain_bound_ok": w.drain_bound_ok,
                }
                for w in self.windows
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        """Flat per-job trace: k, arrival time, size, |sample|, destination, delay."""
        with open(path, "w") as fh:
            fh.write("k,arrival_time,size,sampled,destination,delay\n")
            for k in range(self.job_count):
                fh.write(
                    "%d,%.17g,%.17g,%d,%d,%.17g\n"
                    % (
                        k + 1,
                        self.job_arrival_times[k],
                        self.job_sizes[k],
                        self.job_sample_sizes[k],
                        self.job_destinations[k],
                        self.job_delays[k],
                    )
                )


class Simulation:
    """One replication, strictly single-threaded.

    The public entry point :func:`run` validates its configuration before
    constructing one of these; the class itself accepts any positive rates,
    which lets tests drive unstable or degenerate scenarios directly.
    """

    def __init__(
        self,
        policy: PolicyDefinition,
        n: int,
        arrival_spec: DistributionSpec,
        size_spec: DistributionSpec,
        streams: RngStreams,
        census_rate: float = 0.0,
        census_gamma: float = 0.1,
        census_len_bins: int = 8,
        window_config: Optional[WindowConfig] = None,
        record_samples: bool = False,
    ):
        if n < 1:
            raise ConfigError("n must be at least 1")
        self.policy = policy
        self.n = n
        self.arrival_spec = arrival_spec
        self.size_spec = size_spec
        self.streams = streams
        self.census_rate = census_rate
        self.census_gamma = census_gamma
        self.census_len_bins = census_len_bins
        self.window_config = window_config
        self.record_samples = record_samples

        self.memory = policy.initial_memory_state()

        # per-server state, index 0 unused (ids are 1-based)
        inf = math.inf
        self.head_departure = [inf] * (n + 1)
        self.pending = [deque() for _ in range(n + 1)]
        self.tail_work = [0.0] * (n + 1)
        # unit-rate drain anchors for delay accounting
        self._drain_level = [0.0] * (n + 1)
        self._drain_time = [0.0] * (n + 1)

        self.busy_count = 0
        self.busy_integral = 0.0
        self.now = 0.0

        self.log = MetricsLog(
            policy=policy.name,
            n=n,
            arrival_rate=1.0 / arrival_spec.mean,
            spontaneous_rate=policy.spontaneous_rate * n,
        )

        self._heap = []
        self._seq = 0
        self._windows_left = 0

        self._schedule(self._next_arrival_gap(), EVENT_ARRIVAL, 0)
        if policy.spontaneous_rate > 0.0:
            self._schedule(self._next_spontaneous_gap(), EVENT_SPONTANEOUS, 0)
        if census_rate > 0.0:
            self._schedule(1.0 / census_rate, EVENT_CENSUS, 0)
        if window_config is not None:
            if window_config.spacing <= window_config.gamma / n:
                raise ConfigError("window spacing must exceed the window length gamma/n")
            self._windows_left = window_config.count
            self._schedule_abs(window_config.start_time, EVENT_WINDOW, 0)

    # -- scheduling ---------------------------------------------------------

    def _schedule(self, delay: float, kind: int, server: int) -> None:
        self._schedule_abs(self.now + delay, kind, server)

    def _schedule_abs(self, t: float, kind: int, server: int) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, kind, self._seq, server))

    def _next_arrival_gap(self) -> float:
        return self.arrival_spec.sample(self.streams.arrivals)

    def _next_spontaneous_gap(self) -> float:
        mean = 1.0 / (self.policy.spontaneous_rate * self.n)
        gap = -mean * math.log(1.0 - self.streams.spontaneous.random())
        return gap if gap > 0.0 else mean * 1e-300

    # -- state access -------------------------------------------------------

    def snapshot(self, i: int, t: Optional[float] = None) -> ServerQueue:
        """Queue snapshot of server ``i`` at the current instant."""
        t = self.now if t is None else t
        hd = self.head_departure[i]
        if hd == math.inf:
            return _EMPTY_QUEUE
        return ServerQueue((hd - t, *self.pending[i]))

    def system_state(self) -> SystemState:
        """Materialize the full state; intended for test-scale inspection."""
        queues = tuple(self.snapshot(i) for i in range(1, self.n + 1))
        residual = 0.0
        for t, kind, _, _ in sorted(self._heap):
            if kind == EVENT_ARRIVAL:
                residual = max(0.0, t - self.now)
                break
        return SystemState(queues=queues, memory=self.memory, residual_arrival=residual)

    def queue_length(self, i: int) -> int:
        if self.head_departure[i] == math.inf:
            return 0
        return 1 + len(self.pending[i])

    def _advance_clock(self, t: float) -> None:
        self.busy_integral += self.busy_count * (t - self.now)
        self.now = t

    # -- event handlers -----------------------------------------------------

    def handle_arrival(self) -> None:
        policy = self.policy
        n = self.n
        t = self.now
        log = self.log

        w = self.size_spec.sample(self.streams.sizes)
        m = self.memory

        s = policy.f1(m, w, self.streams.u.random())
        ids = s.ids
        if ids:
            for i in ids:
                if not 1 <= i <= n:
                    raise PolicyContractError(
                        f"{policy.name}: sampled server {i} outside 1..{n}"
                    )
            q = tuple(self.snapshot(i, t) for i in ids)
            k = len(ids)
            log.msg_query += k
            log.msg_response += k
        else:
            q = ()

        d = policy.f2(m, w, s, q, self.streams.v.random())
        if not (isinstance(d, (int, np.integer)) and 1 <= d <= n):
            raise PolicyContractError(
                f"{policy.name}: destination {d!r} outside 1..{n}"
            )
        d = int(d)

        new_m = policy.f3(m, w, s, q, d)
        self._check_memory(new_m)

        # delay: drain the destination's workload at unit rate since its
        # last dispatch; exact for work-conserving unit-rate FIFO service
        delay = self._drain_level[d] - (t - self._drain_time[d])
        if delay < 0.0:
            delay = 0.0
        self._drain_level[d] = delay + w
        self._drain_time[d] = t

        log.job_arrival_times.append(t)
        log.job_sizes.append(w)
        log.job_sample_sizes.append(len(ids))
        log.job_destinations.append(d)
        log.job_delays.append(delay)
        if self.record_samples:
            log.job_samples.append(s)
        if delay == 0.0:
            log.zero_delay_jobs += 1

        if self.head_departure[d] == math.inf:
            self.head_departure[d] = t + w
            self.busy_count += 1
            self._schedule_abs(t + w, EVENT_DEPARTURE, d)
        else:
            self.pending[d].append(w)
            self.tail_work[d] += w

        self.memory = new_m
        log.total_arrivals += 1
        self._schedule(self._next_arrival_gap(), EVENT_ARRIVAL, 0)

    def handle_departure(self, i: int) -> None:
        t = self.now
        if self.head_departure[i] == math.inf:
            raise AssertionError(f"departure scheduled on empty queue {i}")
        pend = self.pending[i]
        if pend:
            w_next = pend.popleft()
            if pend:
                self.tail_work[i] -= w_next
            else:
                self.tail_work[i] = 0.0
            self.head_departure[i] = t + w_next
            self._schedule_abs(t + w_next, EVENT_DEPARTURE, i)
        else:
            self.head_departure[i] = math.inf
            self.busy_count -= 1
        self.log.total_departures += 1

        snap = self.snapshot(i, t)
        flag = self.policy.h1(snap, self.streams.y.random())
        if flag == 1:
            self.log.msg_departure += 1
            new_m = self.policy.h2(self.memory, i, snap)
            self._check_memory(new_m)
            self.memory = new_m
        elif flag != 0:
            raise PolicyContractError(
                f"{self.policy.name}: departure flag must be 0 or 1, got {flag!r}"
            )

    def handle_spontaneous(self) -> None:
        t = self.now
        queues = tuple(self.snapshot(i, t) for i in range(1, self.n + 1))
        target = self.policy.g1(queues, self.streams.x.random())
        if target is not None:
            if not 1 <= target <= self.n:
                raise PolicyContractError(
                    f"{self.policy.name}: spontaneous sender {target!r} outside 1..{self.n}"
                )
            self.log.msg_spontaneous += 1
            new_m = self.policy.g2(self.memory, target, queues[target - 1])
            self._check_memory(new_m)
            self.memory = new_m
        if self.window_config is not None and self.window_config.record_spontaneous:
            self.log.spontaneous_times.append(t)
        self._schedule(self._next_spontaneous_gap(), EVENT_SPONTANEOUS, 0)

    def _check_memory(self, m) -> None:
        if not isinstance(m, MemoryState):
            raise PolicyContractError(
                f"{self.policy.name}: memory hooks must return MemoryState, got {type(m)}"
            )
        if m.capacity_bits != self.policy.memory_bits:
            raise PolicyContractError(
                f"{self.policy.name}: memory capacity changed from "
                f"{self.policy.memory_bits} to {m.capacity_bits} bits"
            )

    # -- observations -------------------------------------------------------

    def _observe(self, gamma: float):
        """Vectorized census of all servers at the current instant."""
        t = self.now
        n = self.n
        hd = np.asarray(self.head_departure[1:])
        tw = np.asarray(self.tail_work[1:])
        busy = np.isfinite(hd)
        rem = hd - t
        total = np.where(busy, rem + tw, 0.0)
        n_idle = n - self.busy_count
        n_heavy = int(np.count_nonzero(total >= 2.0 * gamma))
        n_drain = int(np.count_nonzero((total > 0.0) & (total < 2.0 * gamma)))
        if n_heavy + n_idle + n_drain != n:
            raise AssertionError("census identity violated: counts do not sum to n")
        return rem, busy, total, n_heavy, n_idle, n_drain

    def handle_census(self) -> None:
        gamma = self.census_gamma
        rem, busy, total, n_heavy, n_idle, n_drain = self._observe(gamma)
        bins = self.census_len_bins
        lengths = np.where(busy, 1 + np.fromiter(
            (len(p) for p in self.pending[1:]), dtype=np.int64, count=self.n
        ), 0)
        counts = np.bincount(np.minimum(lengths, bins - 1), minlength=bins)
        log = self.log
        log.census.append(
            CensusSnapshot(
                time=self.now,
                n_heavy=n_heavy,
                n_idle=n_idle,
                n_draining=n_drain,
                busy_integral=self.busy_integral,
                arrivals=log.total_arrivals,
                departures=log.total_departures,
                zero_delay_jobs=log.zero_delay_jobs,
                msg_query=log.msg_query,
                msg_response=log.msg_response,
                msg_spontaneous=log.msg_spontaneous,
                msg_departure=log.msg_departure,
                queue_len_counts=tuple(int(c) for c in counts),
            )
        )
        self._schedule(1.0 / self.census_rate, EVENT_CENSUS, 0)

    def handle_window(self) -> None:
        cfg = self.window_config
        rem, busy, total, n_heavy, n_idle, n_drain = self._observe(cfg.gamma)
        band = cfg.gamma / self.n
        head_in_band = bool(np.any((rem > 0.0) & (rem < band)))
        draining = busy & (total < 2.0 * cfg.gamma)
        drain_ok = bool(np.all(rem[draining] < 2.0 * cfg.gamma))
        self.log.windows.append(
            WindowRecord(
                time=self.now,
                n_heavy=n_heavy,
                n_idle=n_idle,
                n_draining=n_drain,
                head_in_band=head_in_band,
                drain_bound_ok=drain_ok,
            )
        )
        self._windows_left -= 1
        if self._windows_left > 0:
            self._schedule(cfg.spacing, EVENT_WINDOW, 0)

    # -- main loop ----------------------------------------------------------

    def run(self, max_jobs: Optional[int] = None, horizon: Optional[float] = None) -> MetricsLog:
        if max_jobs is None and horizon is None:
            raise ConfigError("either a job budget or a horizon is required")
        heap = self._heap
        log = self.log
        while heap:
            t, kind, _, server = heap[0]
            if horizon is not None and t > horizon:
                self._advance_clock(horizon)
                break
            heapq.heappop(heap)
            self._advance_clock(t)
            if kind == EVENT_DEPARTURE:
                self.handle_departure(server)
            elif kind == EVENT_ARRIVAL:
                self.handle_arrival()
                if max_jobs is not None and log.total_arrivals >= max_jobs:
                    break
            elif kind == EVENT_SPONTANEOUS:
                self.handle_spontaneous()
            elif kind == EVENT_CENSUS:
                self.handle_census()
            else:
                self.handle_window()
        log.total_time = self.now
        log.busy_integral = self.busy_integral
        return log


def run(
    policy: PolicyDefinition,
    n: int,
    load: float,
    *,
    jobs: Optional[int] = None,
    horizon: Optional[float] = None,
    seed=0,
    arrival_family: str = "exponential",
    arrival_params: Optional[dict] = None,
    size_spec: Optional[DistributionSpec] = None,
    census_rate: float = 0.0,
    census_gamma: float = 0.1,
    census_len_bins: int = 8,
    window_config: Optional[WindowConfig] = None,
    record_samples: bool = False,
) -> MetricsLog:
    """Simulate one replication and return its metrics.

    ``load`` is the per-server load; arrivals form a renewal process of rate
    ``load * n``.  Stops after ``jobs`` dispatches or at ``horizon``,
    whichever comes first.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    if not 0.0 < load < 1.0:
        raise ConfigError(f"load must be in (0, 1), got {load}")
    if jobs is None and horizon is None:
        raise ConfigError("either a job budget or a horizon is required")
    if jobs is not None and jobs < 1:
        raise ConfigError("job budget must be positive")
    if horizon is not None and horizon <= 0:
        raise ConfigError("horizon must be positive")

    from .arrivals import InterarrivalSpec  # local import avoids cycle at module load

    arrival_spec = InterarrivalSpec(arrival_family, load * n, **(arrival_params or {}))
    if size_spec is None:
        size_spec = SizeSpec("exponential")
    streams = RngStreams.from_seed(seed)
    sim = Simulation(
        policy,
        n,
        arrival_spec,
        size_spec,
        streams,
        census_rate=census_rate,
        census_gamma=census_gamma,
        census_len_bins=census_len_bins,
        window_config=window_config,
        record_samples=record_samples,
    )
    return sim.run(max_jobs=jobs, horizon=horizon)


@dataclass(frozen=True)
class DelayEstimate:
    """Batch-means estimate of the steady-state mean queueing delay.

    ``status`` is ``"ok"`` or ``"inconclusive"``; an inconclusive estimate
    carries no numbers, only the reason.
    """

    status: str
    mean: Optional[float] = None
    half_width: Optional[float] = None
    jobs_used: int = 0
    batches: int = 0
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def estimate_delay(
    log: MetricsLog, warmup_fraction: float = 0.2, batches: int = 20
) -> DelayEstimate:
    """Post-warmup batch-means estimate with a Student-t 95% interval.

    The leading ``warmup_fraction`` of jobs stands in for the unavailable
    stationary start; the remaining per-job delays are averaged in equal
    consecutive batches.
    """
    if not 0.0 <= warmup_fraction < 1.0:
        raise ConfigError("warmup fraction must be in [0, 1)")
    if batches < 10:
        raise ConfigError("at least 10 batches are required")
    delays = log.delays()
    start = int(len(delays) * warmup_fraction)
    post = delays[start:]
    if len(post) < batches:
        return DelayEstimate(
            status="inconclusive",
            jobs_used=len(post),
            batches=batches,
            reason=f"only {len(post)} post-warmup jobs for {batches} batches",
        )
    per = len(post) // batches
    used = post[: per * batches]
    means = used.reshape(batches, per).mean(axis=1)
    mean = float(means.mean())
    sd = float(means.std(ddof=1))
    tq = float(_stats.t.ppf(0.975, batches - 1))
    return DelayEstimate(
        status="ok",
        mean=mean,
        half_width=tq * sd / math.sqrt(batches),
        jobs_used=len(used),
        batches=batches,
    )


@dataclass(frozen=True)
class MessageRateEstimate:
    """Messages per unit time, split by mechanism; categories sum to total."""

    total: float
    query: float
    response: float
    spontaneous: float
    departure: float
    time: float


def estimate_message_rate(log: MetricsLog) -> MessageRateEstimate:
    if log.total_time <= 0:
        raise ConfigError("message rate needs positive simulated time")
    t = log.total_time
    return MessageRateEstimate(
        total=log.msg_total / t,
        query=log.msg_query / t,
        response=log.msg_response / t,
        spontaneous=log.msg_spontaneous / t,
        departure=log.msg_departure / t,
        time=t,
    )
