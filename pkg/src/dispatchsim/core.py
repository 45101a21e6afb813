"""Domain types and the policy hook contract.

A dispatching policy is a bundle of seven deterministic hook functions plus a
declared memory budget and a spontaneous-message rate.  The simulation engine
owns all mutation; everything in this module is a plain value that can be
shared freely across threads.

Server ids are 1-based throughout the public API: servers are labeled
``1 .. n``.

Hook contract (all hooks must be pure functions of their arguments):

``f1(m, w, u) -> SampleVector``
    Chooses the ordered, duplicate-free vector of servers to query for an
    incoming job of size ``w``, given memory ``m`` and a uniform draw ``u``.

``f2(m, w, s, q, v) -> int``
    Chooses the destination server given the sampled vector ``s`` and the
    snapshot ``q`` of the sampled queues (``q[i]`` describes ``s[i]``).
    ``v`` is a uniform draw; the result must lie in ``1 .. n``.

``f3(m, w, s, q, d) -> MemoryState``
    Updates the memory after dispatching to ``d``.  No randomization.

``g1(queues, x) -> int | None``
    At an event of the spontaneous Poisson clock: the id of the server that
    sends a status message, or ``None`` for no message.

``g2(m, i, q_i) -> MemoryState``
    Memory update after a spontaneous message from server ``i`` whose queue
    snapshot is ``q_i``.  Policies may ignore ``q_i``.

``h1(q_i, y) -> int``
    At a service completion at some server: 1 to send a message, 0 otherwise.
    ``q_i`` is the queue snapshot *after* the departed job was removed.

``h2(m, i, q_i) -> MemoryState``
    Memory update after a departure message from server ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

__all__ = [
    "ConfigError",
    "PolicyContractError",
    "EMPTY_SAMPLE",
    "ServerQueue",
    "MemoryState",
    "SampleVector",
    "SystemState",
    "JobRecord",
    "PolicyDefinition",
    "uniform_server",
    "uniform_choice",
]


class ConfigError(ValueError):
    """Invalid configuration, rejected before any simulation starts."""


class PolicyContractError(RuntimeError):
    """A policy hook violated its contract (fatal for the run)."""


class ServerQueue:
    """Immutable snapshot of one server's FIFO queue.

    ``workloads`` lists the remaining work of each job, head first.  Entries
    are strictly positive: a finished job is removed, never zeroed in place.
    An idle server has an empty sequence (work conservation).
    """

    __slots__ = ("workloads",)

    def __init__(self, workloads: Sequence[float] = ()):
        wl = tuple(float(w) for w in workloads)
        for w in wl:
            if not w > 0.0:
                raise ValueError(f"queue workloads must be strictly positive, got {w}")
        self.workloads = wl

    @property
    def length(self) -> int:
        return len(self.workloads)

    @property
    def is_idle(self) -> bool:
        return not self.workloads

    @property
    def head(self) -> float:
        if not self.workloads:
            raise IndexError("idle server has no head job")
        return self.workloads[0]

    @property
    def total_workload(self) -> float:
        return sum(self.workloads)

    def __len__(self) -> int:
        return len(self.workloads)

    def __eq__(self, other) -> bool:
        return isinstance(other, ServerQueue) and self.workloads == other.workloads

    def __hash__(self) -> int:
        return hash(self.workloads)

    def __repr__(self) -> str:
        return f"ServerQueue({list(self.workloads)!r})"


class MemoryState:
    """A nonnegative integer confined to ``capacity_bits`` bits.

    The bound ``0 <= value < 2**capacity_bits`` is enforced on construction,
    so every hook-produced state is checked mechanically rather than trusted.
    ``capacity_bits == 0`` leaves exactly one state, ``value == 0``.
    """

    __slots__ = ("value", "capacity_bits")

    def __init__(self, value: int, capacity_bits: int):
        if capacity_bits < 0:
            raise ValueError("capacity_bits must be nonnegative")
        if not 0 <= value < (1 << capacity_bits):
            raise ValueError(
                f"memory value {value} out of range for {capacity_bits} bits"
            )
        self.value = value
        self.capacity_bits = capacity_bits

    def with_value(self, value: int) -> "MemoryState":
        """New state with the same capacity; the bound is re-checked."""
        return MemoryState(value, self.capacity_bits)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MemoryState)
            and self.value == other.value
            and self.capacity_bits == other.capacity_bits
        )

    def __hash__(self) -> int:
        return hash((self.value, self.capacity_bits))

    def __repr__(self) -> str:
        return f"MemoryState({self.value}, bits={self.capacity_bits})"


class SampleVector:
    """Ordered vector of distinct server ids (possibly empty)."""

    __slots__ = ("ids",)

    def __init__(self, ids: Sequence[int] = ()):
        t = tuple(int(i) for i in ids)
        if len(set(t)) != len(t):
            raise ValueError(f"sample vector has repeated elements: {t}")
        self.ids = t

    @property
    def id_set(self) -> frozenset:
        return frozenset(self.ids)

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __getitem__(self, i):
        return self.ids[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, SampleVector) and self.ids == other.ids

    def __hash__(self) -> int:
        return hash(self.ids)

    def __repr__(self) -> str:
        return f"SampleVector{self.ids!r}"


EMPTY_SAMPLE = SampleVector(())


@dataclass(frozen=True)
class SystemState:
    """Full state snapshot: all queues, the memory word, and the residual
    time until the next arrival."""

    queues: tuple
    memory: MemoryState
    residual_arrival: float

    def __post_init__(self):
        if self.residual_arrival < 0:
            raise ValueError("residual arrival time must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.queues)


@dataclass(frozen=True)
class JobRecord:
    """Per-job trace row.

    ``delay`` is the total unfinished workload present in the destination
    queue at the instant of dispatch; with FIFO order and unit service rate
    that is exactly the time until service starts.
    """

    index: int
    arrival_time: float
    size: float
    sampled: SampleVector
    destination: int
    delay: float

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("job size must be strictly positive")
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")


# Hook signatures; queue snapshots travel as tuples of ServerQueue.
SampleHook = Callable[[MemoryState, float, float], SampleVector]
DispatchHook = Callable[[MemoryState, float, SampleVector, tuple, float], int]
MemoryArrivalHook = Callable[[MemoryState, float, SampleVector, tuple, int], MemoryState]
SpontaneousHook = Callable[[tuple, float], Optional[int]]
MemoryMessageHook = Callable[[MemoryState, int, ServerQueue], MemoryState]
DepartureHook = Callable[[ServerQueue, float], int]


def _no_message(q_i: ServerQueue, y: float) -> int:
    return 0


def _no_spontaneous(queues: tuple, x: float) -> Optional[int]:
    return None


def _keep_memory(m: MemoryState, i: int, q_i: ServerQueue) -> MemoryState:
    return m


@dataclass
class PolicyDefinition:
    """A policy: declared resources plus the seven hook functions.

    Optional fields support auditing: exact distribution oracles for the
    sampling and dispatch hooks, a memory-permutation constructor used when
    the memory-state space is too large for exhaustive search, the list of
    memory values reachable in practice, and the job-size grid on which the
    policy's behavior should be exercised (size-oblivious policies need only
    one point).
    """

    name: str
    memory_bits: int
    f1: SampleHook
    f2: DispatchHook
    f3: MemoryArrivalHook
    g1: SpontaneousHook = _no_spontaneous
    g2: MemoryMessageHook = _keep_memory
    h1: DepartureHook = _no_message
    h2: MemoryMessageHook = _keep_memory
    spontaneous_rate: float = 0.0
    initial_memory: int = 0

    # audit support
    sample_oracle: Optional[Callable] = None
    dispatch_oracle: Optional[Callable] = None
    memory_permutation: Optional[Callable] = None
    audit_memory_values: Optional[tuple] = None
    audit_w_grid: tuple = (1.0,)
    size_oblivious: bool = True

    def __post_init__(self):
        if self.memory_bits < 0:
            raise ConfigError("memory_bits must be nonnegative")
        if self.spontaneous_rate < 0:
            raise ConfigError("spontaneous_rate must be nonnegative")
        if not 0 <= self.initial_memory < (1 << self.memory_bits):
            raise ConfigError("initial memory value exceeds the declared capacity")

    def initial_memory_state(self) -> MemoryState:
        return MemoryState(self.initial_memory, self.memory_bits)


def uniform_server(u: float, n: int) -> int:
    """Map a uniform draw to a server id in ``1 .. n``."""
    i = int(u * n) + 1
    return n if i > n else i


def uniform_choice(u: float, items):
    """Pick one element of a nonempty sequence with a uniform draw."""
    k = len(items)
    i = int(u * k)
    if i >= k:
        i = k - 1
    return items[i]
