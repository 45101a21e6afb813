"""Catalog of classical dispatching policies expressed through the hook
contract, each with its declared memory footprint and message behavior.

Policy constructors return a :class:`~dispatchsim.core.PolicyDefinition`;
:func:`catalog_entry` wraps one together with the resource declarations used
for table reproduction.  Destinations and sampled servers are 1-based ids.
"""

from __future__ import annotations

import math
import random as _stdrandom
import struct
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    ConfigError,
    EMPTY_SAMPLE,
    PolicyDefinition,
    SampleVector,
    uniform_choice,
    uniform_server,
)
from .engine import estimate_delay, estimate_message_rate, run

__all__ = [
    "make_random",
    "make_round_robin",
    "make_sq",
    "make_sq_d",
    "make_sq_dn",
    "make_sq_d_b",
    "make_ll",
    "make_ll_d",
    "make_jiq",
    "make_sita",
    "CatalogEntry",
    "catalog_entry",
    "CATALOG_NAMES",
    "ResourceRow",
    "resource_table",
    "distinct_uniform_sample",
]


def _check_n(n: int) -> None:
    if n < 1:
        raise ConfigError("n must be at least 1")


def _id_bits(n: int) -> int:
    """Bits needed for a value in 0 .. n-1."""
    return (n - 1).bit_length()


# ---------------------------------------------------------------------------
# shared sampling helper


def distinct_uniform_sample(u: float, n: int, d: int) -> SampleVector:
    """Ordered sample of ``d`` distinct servers, uniform over all ordered
    d-tuples, driven by the single uniform draw ``u``.

    When the falling factorial ``n*(n-1)*...*(n-d+1)`` fits comfortably in a
    double mantissa, ``u`` is unranked exactly: u partitions [0,1) into that
    many equal cells, cell 0 mapping to (1, 2, ..., d).  For larger index
    spaces the bits of ``u`` seed a deterministic auxiliary generator, which
    keeps the hook a pure function of its arguments.
    """
    if d == 0:
        return EMPTY_SAMPLE
    if d * math.log2(n) <= 40.0:
        pool = list(range(1, n + 1))
        out = []
        x = u
        for j in range(d):
            k = n - j
            y = x * k
            idx = int(y)
            if idx >= k:
                idx = k - 1
            x = y - idx
            out.append(pool.pop(idx))
        return SampleVector(out)
    aux = _stdrandom.Random(struct.pack("<d", u))
    return SampleVector(aux.sample(range(1, n + 1), d))


def _uniform_tuple_oracle(n: int, d: int) -> Callable:
    total = math.perm(n, d)

    def sample_oracle(m_value: int, w: float) -> dict:
        p = Fraction(1, total)
        return {vec: p for vec in permutations(range(1, n + 1), d)}

    return sample_oracle


def _point_sample_oracle(vec: tuple) -> Callable:
    def sample_oracle(m_value: int, w: float) -> dict:
        return {vec: Fraction(1)}

    return sample_oracle


def _shortest_by(keyfn: Callable, n: int) -> Callable:
    """Dispatch-hook body: minimize ``keyfn(queue)`` over the sampled
    queues, breaking ties uniformly at random.  An empty sample (never
    produced by these policies but allowed by the hook domain) falls back
    to a uniform destination."""

    def f2(m, w, s, q, v):
        if not q:
            return uniform_server(v, n)
        best_key = None
        cands = None
        for idx, queue in enumerate(q):
            k = keyfn(queue)
            if best_key is None or k < best_key:
                best_key = k
                cands = [idx]
            elif k == best_key:
                cands.append(idx)
        if len(cands) == 1:
            return s.ids[cands[0]]
        return s.ids[uniform_choice(v, cands)]

    return f2


def _shortest_by_oracle(keyfn: Callable, n: int) -> Callable:
    def dispatch_oracle(m_value, w, s, q):
        if not q:
            p = Fraction(1, n)
            return {i: p for i in range(1, n + 1)}
        keys = [keyfn(queue) for queue in q]
        best = min(keys)
        tied = [s[i] for i, k in enumerate(keys) if k == best]
        p = Fraction(1, len(tied))
        dist = {i: Fraction(0) for i in s}
        for i in tied:
            dist[i] += p
        return dist

    return dispatch_oracle


def _keep(m, w, s, q, d):
    return m


# ---------------------------------------------------------------------------
# open-loop policies


def make_random(n: int) -> PolicyDefinition:
    """Uniform random routing: no samples, no memory, no messages."""
    _check_n(n)

    def f2(m, w, s, q, v):
        return uniform_server(v, n)

    def dispatch_oracle(m_value, w, s, q):
        p = Fraction(1, n)
        return {i: p for i in range(1, n + 1)}

    return PolicyDefinition(
        name="random",
        memory_bits=0,
        f1=lambda m, w, u: EMPTY_SAMPLE,
        f2=f2,
        f3=_keep,
        sample_oracle=_point_sample_oracle(()),
        dispatch_oracle=dispatch_oracle,
        memory_permutation=lambda sigma: (lambda m_value: m_value),
    )


def make_round_robin(n: int) -> PolicyDefinition:
    """Cycle destinations 1, 2, ..., n, 1, ...; the memory word stores the
    id of the next server to receive a job."""
    _check_n(n)
    bits = _id_bits(n)

    def f2(m, w, s, q, v):
        return m.value + 1

    def f3(m, w, s, q, d):
        return m.with_value((m.value + 1) % n)

    def dispatch_oracle(m_value, w, s, q):
        return {m_value + 1: Fraction(1)}

    return PolicyDefinition(
        name="round_robin",
        memory_bits=bits,
        f1=lambda m, w, u: EMPTY_SAMPLE,
        f2=f2,
        f3=f3,
        sample_oracle=_point_sample_oracle(()),
        dispatch_oracle=dispatch_oracle,
        audit_memory_values=tuple(range(n)),
    )


# ---------------------------------------------------------------------------
# queue-length policies


def make_sq(n: int) -> PolicyDefinition:
    """Query every server and join a shortest queue, ties uniform."""
    _check_n(n)
    full = SampleVector(range(1, n + 1))
    return PolicyDefinition(
        name="sq",
        memory_bits=0,
        f1=lambda m, w, u: full,
        f2=_shortest_by(len, n),
        f3=_keep,
        sample_oracle=_point_sample_oracle(full.ids),
        dispatch_oracle=_shortest_by_oracle(len, n),
        memory_permutation=lambda sigma: (lambda m_value: m_value),
    )


def make_sq_d(n: int, d: int) -> PolicyDefinition:
    """Sample d servers uniformly at random, join a shortest queue among
    them, ties uniform."""
    _check_n(n)
    if not 1 <= d <= n:
        raise ConfigError(f"d must be in 1..{n}, got {d}")
    return PolicyDefinition(
        name=f"sq_{d}",
        memory_bits=0,
        f1=lambda m, w, u: distinct_uniform_sample(u, n, d),
        f2=_shortest_by(len, n),
        f3=_keep,
        sample_oracle=_uniform_tuple_oracle(n, d),
        dispatch_oracle=_shortest_by_oracle(len, n),
        memory_permutation=lambda sigma: (lambda m_value: m_value),
    )


def default_dn_rule(n: int) -> int:
    """Slowly diverging sample count: ceil(log2 n), at least 1."""
    return max(1, _id_bits(n))


def make_sq_dn(n: int, rule: Optional[Callable] = None) -> PolicyDefinition:
    """SQ(d) with a system-size dependent d given by ``rule(n)``."""
    _check_n(n)
    rule = rule or default_dn_rule
    d = int(rule(n))
    if not 1 <= d <= n:
        raise ConfigError(f"d_n rule produced {d}, outside 1..{n}")
    policy = make_sq_d(n, d)
    policy.name = f"sq_dn_{d}"
    return policy


def make_sq_d_b(n: int, d: int, b: int) -> PolicyDefinition:
    """SQ(d) with memory: keep the ids and last observed lengths of the b
    least loaded queues seen so far, and dispatch to a shortest queue among
    the d freshly sampled and the b remembered ones.

    Encoding: b slots of (id, capped length).  An id field of 0 marks an
    empty slot, so ids need bits for 0..n; lengths are capped at 255.
    """
    _check_n(n)
    if not 1 <= d <= n:
        raise ConfigError(f"d must be in 1..{n}, got {d}")
    if not 1 <= b <= d:
        raise ConfigError(f"b must be in 1..d, got {b}")
    id_bits = n.bit_length()
    slot_bits = id_bits + 8
    len_cap = 255

    def decode(value: int) -> list:
        pairs = []
        for _ in range(b):
            slot = value & ((1 << slot_bits) - 1)
            value >>= slot_bits
            sid = slot & ((1 << id_bits) - 1)
            if sid:
                pairs.append((sid, slot >> id_bits))
        return pairs

    def encode(pairs) -> int:
        value = 0
        for j, (sid, length) in enumerate(pairs[:b]):
            value |= ((min(length, len_cap) << id_bits) | sid) << (j * slot_bits)
        return value

    def f2(m, w, s, q, v):
        candidates = {}
        for sid, length in decode(m.value):
            candidates[sid] = length
        for idx, queue in enumerate(q):
            candidates[s.ids[idx]] = len(queue.workloads)
        if not candidates:
            return uniform_server(v, n)
        best = min(candidates.values())
        tied = sorted(sid for sid, length in candidates.items() if length == best)
        if len(tied) == 1:
            return tied[0]
        return uniform_choice(v, tied)

    def f3(m, w, s, q, d_chosen):
        merged = {sid: length for sid, length in decode(m.value)}
        for idx, queue in enumerate(q):
            merged[s.ids[idx]] = len(queue.workloads)
        ranked = sorted(merged.items(), key=lambda kv: (kv[1], kv[0]))
        return m.with_value(encode(ranked[:b]))

    def dispatch_oracle(m_value, w, s, q):
        candidates = {}
        for sid, length in decode(m_value):
            candidates[sid] = length
        for idx, queue in enumerate(q):
            candidates[s[idx]] = len(queue.workloads)
        if not candidates:
            p = Fraction(1, n)
            return {i: p for i in range(1, n + 1)}
        best = min(candidates.values())
        tied = [sid for sid, length in candidates.items() if length == best]
        p = Fraction(1, len(tied))
        return {sid: p for sid in tied}

    return PolicyDefinition(
        name=f"sq_{d}_{b}",
        memory_bits=b * slot_bits,
        f1=lambda m, w, u: distinct_uniform_sample(u, n, d),
        f2=f2,
        f3=f3,
        sample_oracle=_uniform_tuple_oracle(n, d),
        dispatch_oracle=dispatch_oracle,
    )


# ---------------------------------------------------------------------------
# workload policies


def make_ll(n: int) -> PolicyDefinition:
    """Query every server and join the queue with least remaining work."""
    _check_n(n)
    full = SampleVector(range(1, n + 1))
    key = lambda queue: sum(queue.workloads)
    return PolicyDefinition(
        name="ll",
        memory_bits=0,
        f1=lambda m, w, u: full,
        f2=_shortest_by(key, n),
        f3=_keep,
        sample_oracle=_point_sample_oracle(full.ids),
        dispatch_oracle=_shortest_by_oracle(key, n),
        memory_permutation=lambda sigma: (lambda m_value: m_value),
    )


def make_ll_d(n: int, d: int) -> PolicyDefinition:
    """Sample d servers and join the least loaded of them."""
    _check_n(n)
    if not 1 <= d <= n:
        raise ConfigError(f"d must be in 1..{n}, got {d}")
    key = lambda queue: sum(queue.workloads)
    return PolicyDefinition(
        name=f"ll_{d}",
        memory_bits=0,
        f1=lambda m, w, u: distinct_uniform_sample(u, n, d),
        f2=_shortest_by(key, n),
        f3=_keep,
        sample_oracle=_uniform_tuple_oracle(n, d),
        dispatch_oracle=_shortest_by_oracle(key, n),
        memory_permutation=lambda sigma: (lambda m_value: m_value),
    )


# ---------------------------------------------------------------------------
# pull-based policy


def make_jiq(n: int) -> PolicyDefinition:
    """Join an idle queue: servers report when they become idle, the
    dispatcher keeps an n-bit idle bitmap (bit i-1 for server i) and sends
    each arrival to a uniformly chosen flagged server, or to a uniformly
    random server when no idle server is known.

    Idleness is signaled on the departure path (h1/h2); the spontaneous
    clock is unused.  Dispatching clears the destination's bit, so a flag
    can never remain set on a server that was just loaded.
    """
    _check_n(n)
    nbytes = (n + 7) // 8

    def f2(m, w, s, q, v):
        value = m.value
        if value:
            raw = value.to_bytes(nbytes, "little")
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
            idle = np.flatnonzero(bits)
            k = idle.shape[0]
            j = int(v * k)
            if j >= k:
                j = k - 1
            return int(idle[j]) + 1
        return uniform_server(v, n)

    def f3(m, w, s, q, d):
        return m.with_value(m.value & ~(1 << (d - 1)))

    def h1(q_i, y):
        return 1 if q_i.is_idle else 0

    def h2(m, i, q_i):
        return m.with_value(m.value | (1 << (i - 1)))

    def dispatch_oracle(m_value, w, s, q):
        if m_value:
            flagged = [i + 1 for i in range(n) if m_value >> i & 1]
            p = Fraction(1, len(flagged))
            return {i: p for i in flagged}
        p = Fraction(1, n)
        return {i: p for i in range(1, n + 1)}

    def memory_permutation(sigma):
        def permute(m_value: int) -> int:
            out = 0
            for i in range(1, n + 1):
                if m_value >> (i - 1) & 1:
                    out |= 1 << (sigma[i - 1] - 1)
            return out

        return permute

    return PolicyDefinition(
        name="jiq",
        memory_bits=n,
        f1=lambda m, w, u: EMPTY_SAMPLE,
        f2=f2,
        f3=f3,
        h1=h1,
        h2=h2,
        initial_memory=(1 << n) - 1,
        sample_oracle=_point_sample_oracle(()),
        dispatch_oracle=dispatch_oracle,
        memory_permutation=memory_permutation,
    )


# ---------------------------------------------------------------------------
# size-based policy


def make_sita(n: int, cuts: Sequence[float]) -> PolicyDefinition:
    """Static size-interval assignment: job sizes are partitioned into n
    consecutive intervals by the n-1 cut points, and interval i maps to
    server i.  Needs no messages and no memory; not symmetric."""
    _check_n(n)
    cuts = tuple(float(c) for c in cuts)
    if len(cuts) != n - 1:
        raise ConfigError(f"need exactly {n - 1} cut points for {n} servers")
    if any(c <= 0 for c in cuts) or any(
        cuts[i] >= cuts[i + 1] for i in range(len(cuts) - 1)
    ):
        raise ConfigError("cut points must be positive and strictly increasing")

    def f2(m, w, s, q, v):
        return bisect_right(cuts, w) + 1

    def dispatch_oracle(m_value, w, s, q):
        return {bisect_right(cuts, w) + 1: Fraction(1)}

    w_grid = []
    lo = 0.0
    for c in cuts:
        w_grid.append((lo + c) / 2.0)
        lo = c
    w_grid.append(lo + 1.0)

    return PolicyDefinition(
        name="sita",
        memory_bits=0,
        f1=lambda m, w, u: EMPTY_SAMPLE,
        f2=f2,
        f3=_keep,
        sample_oracle=_point_sample_oracle(()),
        dispatch_oracle=dispatch_oracle,
        size_oblivious=False,
        audit_w_grid=tuple(w_grid),
    )


def sita_cuts_from_quantiles(n: int, size_spec) -> tuple:
    """Equal-probability cut points for a size distribution."""
    return tuple(size_spec.quantile(k / n) for k in range(1, n))


# ---------------------------------------------------------------------------
# catalog with resource declarations


@dataclass(frozen=True)
class CatalogEntry:
    """A policy plus its declared resources and limiting-delay class."""

    policy: PolicyDefinition
    memory_bits: int
    message_rate: Callable
    message_rate_desc: str
    rate_is_upper_bound: bool
    delay_class: str  # ZERO or POSITIVE


def catalog_entry(name: str, n: int, load: float, **params) -> CatalogEntry:
    """Build a catalog entry by name; ``params`` feed the constructor."""
    if name == "random":
        return CatalogEntry(make_random(n), 0, lambda: 0.0, "0", False, "POSITIVE")
    if name == "round_robin":
        p = make_round_robin(n)
        return CatalogEntry(p, p.memory_bits, lambda: 0.0, "0", False, "POSITIVE")
    if name == "sq":
        return CatalogEntry(
            make_sq(n), 0, lambda: 2.0 * load * n * n, "2*load*n^2", False, "ZERO"
        )
    if name == "sq_d":
        d = int(params["d"])
        return CatalogEntry(
            make_sq_d(n, d), 0, lambda: 2.0 * d * load * n, "2*d*load*n", False, "POSITIVE"
        )
    if name == "sq_dn":
        d = int(params.get("d") or default_dn_rule(n))
        return CatalogEntry(
            make_sq_dn(n, lambda _n: d),
            0,
            lambda: 2.0 * d * load * n,
            "2*d_n*load*n",
            False,
            "ZERO",
        )
    if name == "sq_d_b":
        d, b = int(params["d"]), int(params["b"])
        p = make_sq_d_b(n, d, b)
        return CatalogEntry(
            p, p.memory_bits, lambda: 2.0 * d * load * n, "2*d*load*n", False, "POSITIVE"
        )
    if name == "ll":
        return CatalogEntry(
            make_ll(n), 0, lambda: 2.0 * load * n * n, "2*load*n^2", False, "ZERO"
        )
    if name == "ll_d":
        d = int(params["d"])
        return CatalogEntry(
            make_ll_d(n, d), 0, lambda: 2.0 * d * load * n, "2*d*load*n", False, "POSITIVE"
        )
    if name == "jiq":
        return CatalogEntry(
            make_jiq(n), n, lambda: load * n, "load*n", True, "ZERO"
        )
    if name == "sita":
        cuts = params.get("cuts")
        if cuts is None:
            from .arrivals import SizeSpec

            cuts = sita_cuts_from_quantiles(n, SizeSpec(params.get("size_family", "exponential")))
        return CatalogEntry(make_sita(n, cuts), 0, lambda: 0.0, "0", False, "POSITIVE")
    raise ConfigError(f"unknown policy name {name!r}")


CATALOG_NAMES = (
    "random",
    "round_robin",
    "sq",
    "sq_d",
    "sq_dn",
    "sq_d_b",
    "ll",
    "ll_d",
    "jiq",
    "sita",
)


@dataclass(frozen=True)
class ResourceRow:
    """One row of the policy resource/delay table."""

    policy: str
    n: int
    load: float
    memory_bits: int
    declared_rate: float
    rate_is_upper_bound: bool
    measured_rate: float
    delay_mean: Optional[float]
    delay_half_width: Optional[float]
    delay_class: str
    jobs: int


def resource_table(
    entries: Sequence[CatalogEntry],
    n: int,
    load: float,
    *,
    jobs: int,
    seed: int = 0,
    warmup_fraction: float = 0.2,
    batches: int = 20,
    **run_kwargs,
) -> list:
    """Simulate every entry at (n, load) and tabulate declared versus
    measured resources alongside the measured mean delay."""
    rows = []
    for k, entry in enumerate(entries):
        log = run(entry.policy, n, load, jobs=jobs, seed=(seed, k), **run_kwargs)
        rate = estimate_message_rate(log)
        est = estimate_delay(log, warmup_fraction=warmup_fraction, batches=batches)
        rows.append(
            ResourceRow(
                policy=entry.policy.name,
                n=n,
                load=load,
                memory_bits=entry.memory_bits,
                declared_rate=entry.message_rate(),
                rate_is_upper_bound=entry.rate_is_upper_bound,
                measured_rate=rate.total,
                delay_mean=est.mean,
                delay_half_width=est.half_width,
                delay_class=entry.delay_class,
                jobs=log.job_count,
            )
        )
    return rows
