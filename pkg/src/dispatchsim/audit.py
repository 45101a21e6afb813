"""Exact small-scale verification of policy symmetry, plus the
distinguished-server computations and the combinatorial bound scan.

A policy is symmetric when every relabeling of the servers can be mirrored
by some relabeling of the memory states so that (1) the sampling
distribution, (2) the dispatch distribution (with the *unpermuted* queue
observations), and (3) the memory update all commute with the pair of
relabelings.  Conditions 1 and 2 are equalities in distribution, which is
why the audit works on exact distribution oracles rather than on the hooks
themselves; condition 3 is a pointwise equality of the deterministic update.

The distinguished set of a sampling (or dispatch) distribution collects the
servers treated unlike the crowd: indices outside the sampled prefix are
grouped by their exact probability, and the distinguished set is the
complement of the largest group.  When two groups tie for largest the result
is reported as a TIE rather than resolved arbitrarily, since minimality no
longer identifies a unique set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats as _stats

from .core import ConfigError, MemoryState, PolicyDefinition, SampleVector, ServerQueue

__all__ = [
    "OracleError",
    "UndefinedConditionalError",
    "DistributionOracle",
    "Counterexample",
    "AuditVerdict",
    "check_symmetry",
    "recheck_counterexample",
    "DistinguishedSet",
    "distinguished_sample_set",
    "distinguished_dispatch_set",
    "BinomialScanRow",
    "BinomialScanReport",
    "binomial_bound_scan",
    "sample_hook_gof",
    "dispatch_hook_gof",
    "destination_distribution",
]

_EXHAUSTIVE_MEMORY_LIMIT = 8
_EXHAUSTIVE_N_LIMIT = 6
_PROB_TOL = 1e-9
_NORM_TOL = 1e-12


class OracleError(RuntimeError):
    """An oracle emitted a malformed distribution."""


class UndefinedConditionalError(ValueError):
    """The conditioning event has probability zero."""


@dataclass(frozen=True)
class DistributionOracle:
    """Exact distributions of the sampling and dispatch hooks.

    ``sample_dist(m_value, w)`` maps ordered server tuples to probabilities;
    ``dispatch_dist(m_value, w, s, q)`` maps destination ids to
    probabilities, where ``q`` is a tuple of :class:`ServerQueue` snapshots
    aligned with ``s``.  Probabilities should be ``Fraction`` where possible
    so equality grouping is exact.
    """

    sample_dist: Callable
    dispatch_dist: Callable

    @classmethod
    def from_policy(cls, policy: PolicyDefinition) -> "DistributionOracle":
        if policy.sample_oracle is None or policy.dispatch_oracle is None:
            raise ConfigError(f"policy {policy.name!r} declares no distribution oracles")
        return cls(policy.sample_oracle, policy.dispatch_oracle)

    def checked_sample(self, m_value: int, w: float) -> dict:
        dist = self.sample_dist(m_value, w)
        _check_normalized(dist, f"sample_dist(m={m_value}, w={w})")
        return dist

    def checked_dispatch(self, m_value: int, w: float, s: tuple, q: tuple) -> dict:
        dist = self.dispatch_dist(m_value, w, s, q)
        _check_normalized(dist, f"dispatch_dist(m={m_value}, w={w}, s={s})")
        return dist


def _check_normalized(dist: dict, what: str) -> None:
    total = sum(dist.values())
    if isinstance(total, Fraction):
        if total != 1:
            raise OracleError(f"{what} sums to {total}, expected 1")
    elif abs(float(total) - 1.0) > _NORM_TOL:
        raise OracleError(f"{what} sums to {total!r}, expected 1")
    for key, p in dist.items():
        if p < 0:
            raise OracleError(f"{what} assigns negative probability to {key!r}")


def _dists_equal(d1: dict, d2: dict, tol: float = _NORM_TOL) -> bool:
    for key in set(d1) | set(d2):
        p1 = d1.get(key, 0)
        p2 = d2.get(key, 0)
        if isinstance(p1, Fraction) and isinstance(p2, Fraction):
            if p1 != p2:
                return False
        elif abs(float(p1) - float(p2)) > tol:
            return False
    return True


def _apply_sigma(sigma: tuple, ids) -> tuple:
    return tuple(sigma[i - 1] for i in ids)


def _default_queue_palette() -> tuple:
    return (ServerQueue(()), ServerQueue((1.0,)), ServerQueue((2.5, 0.5)))


def _iter_s_q(n: int, max_s_len: int, palette: tuple):
    """All sampled vectors up to the length cap, with queue observations
    drawn positionwise from the palette."""
    from itertools import product

    for length in range(0, max_s_len + 1):
        for s in permutations(range(1, n + 1), length):
            for q in product(palette, repeat=length):
                yield s, q


@dataclass(frozen=True)
class Counterexample:
    """A re-checkable violation of one symmetry condition.

    ``sigma_m`` is the memory relabeling that got furthest before failing;
    for a non-symmetric policy every candidate fails somewhere, and this
    records the deepest failure found.
    """

    sigma: tuple
    sigma_m: tuple  # pairs (m_value, image)
    condition: int
    m_value: int
    w: float
    s: tuple
    q: tuple  # workload tuples
    d: Optional[int] = None

    def to_json_dict(self) -> dict:
        return {
            "sigma": list(self.sigma),
            "sigma_m": [list(p) for p in self.sigma_m],
            "condition": self.condition,
            "m_value": self.m_value,
            "w": self.w,
            "s": list(self.s),
            "q": [list(workloads) for workloads in self.q],
            "d": self.d,
        }


@dataclass(frozen=True)
class AuditVerdict:
    policy: str
    n: int
    symmetric: bool
    witness: dict = field(default_factory=dict)  # sigma -> sigma_m mapping dict
    counterexample: Optional[Counterexample] = None

    def to_json_dict(self) -> dict:
        return {
            "policy": self.policy,
            "n": self.n,
            "symmetric": self.symmetric,
            "witness": [
                {"sigma": list(sigma), "sigma_m": sorted(mapping.items())}
                for sigma, mapping in sorted(self.witness.items())
            ],
            "counterexample": None
            if self.counterexample is None
            else self.counterexample.to_json_dict(),
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _condition1_violation(oracle, sigma, mmap, m_value, w):
    lhs = {}
    for vec, p in oracle.checked_sample(m_value, w).items():
        key = _apply_sigma(sigma, vec)
        lhs[key] = lhs.get(key, 0) + p
    rhs = oracle.checked_sample(mmap[m_value], w)
    return not _dists_equal(lhs, rhs)


def _condition2_violation(oracle, sigma, mmap, m_value, w, s, q):
    raw = oracle.checked_dispatch(m_value, w, s, q)
    lhs = {}
    for dest, p in raw.items():
        key = sigma[dest - 1]
        lhs[key] = lhs.get(key, 0) + p
    rhs = oracle.checked_dispatch(mmap[m_value], w, _apply_sigma(sigma, s), q)
    return not _dists_equal(lhs, rhs)


def _condition3_violation(policy, sigma, mmap, m_value, w, s, q, d, n):
    bits = policy.memory_bits
    m_state = MemoryState(m_value, bits)
    sv = SampleVector(s)
    out = policy.f3(m_state, w, sv, q, d).value
    if out not in mmap:
        # update left the audited state set; treat as a violation
        return True
    lhs = mmap[out]
    m2 = MemoryState(mmap[m_value], bits)
    rhs = policy.f3(m2, w, SampleVector(_apply_sigma(sigma, s)), q, sigma[d - 1]).value
    return lhs != rhs


def check_symmetry(
    policy: PolicyDefinition,
    n: int,
    memory_values: Optional[Sequence[int]] = None,
    w_grid: Optional[Sequence[float]] = None,
    queue_palette: Optional[tuple] = None,
    max_s_len: int = 3,
) -> AuditVerdict:
    """Search, for every server permutation, for a memory permutation that
    satisfies all three symmetry conditions on the audited grid.

    The memory permutation is found by exhaustive search when at most
    8 memory values are audited; beyond that the policy must supply a
    ``memory_permutation`` constructor, which is then verified rather than
    trusted.  Exhaustive server permutations cap at n = 6.
    """
    if n > _EXHAUSTIVE_N_LIMIT:
        raise ConfigError(f"symmetry audit is exhaustive; n must be at most {_EXHAUSTIVE_N_LIMIT}")
    oracle = DistributionOracle.from_policy(policy)
    if memory_values is None:
        if policy.audit_memory_values is not None:
            memory_values = tuple(policy.audit_memory_values)
        else:
            memory_values = tuple(range(1 << policy.memory_bits))
    else:
        memory_values = tuple(memory_values)
    if w_grid is None:
        w_grid = policy.audit_w_grid
    palette = queue_palette or _default_queue_palette()
    max_s_len = min(max_s_len, n)

    sq_grid = list(_iter_s_q(n, max_s_len, palette))
    witness = {}

    for sigma in permutations(range(1, n + 1)):
        candidates = _sigma_m_candidates(policy, sigma, memory_values)
        best_progress = -1
        best_failure = None
        found = None
        for mmap in candidates:
            failure = _check_candidate(policy, oracle, sigma, mmap, memory_values, w_grid, sq_grid, n)
            if failure is None:
                found = mmap
                break
            progress = failure.condition
            if progress > best_progress:
                best_progress = progress
                best_failure = failure
        if found is None:
            return AuditVerdict(
                policy=policy.name,
                n=n,
                symmetric=False,
                counterexample=best_failure,
            )
        witness[sigma] = dict(found)
    return AuditVerdict(policy=policy.name, n=n, symmetric=True, witness=witness)


def _sigma_m_candidates(policy, sigma, memory_values):
    if policy.memory_permutation is not None:
        permute = policy.memory_permutation(sigma)
        mmap = {m: permute(m) for m in memory_values}
        if sorted(mmap.values()) != sorted(memory_values):
            raise ConfigError(
                f"policy {policy.name!r}: supplied memory permutation is not a "
                f"bijection on the audited memory values"
            )
        return [mmap]
    if len(memory_values) > _EXHAUSTIVE_MEMORY_LIMIT:
        raise ConfigError(
            f"{len(memory_values)} memory values exceed the exhaustive search "
            f"bound of {_EXHAUSTIVE_MEMORY_LIMIT}; supply a memory_permutation constructor"
        )
    identity = {m: m for m in memory_values}
    out = [identity]
    for images in permutations(memory_values):
        mmap = dict(zip(memory_values, images))
        if mmap != identity:
            out.append(mmap)
    return out


def _check_candidate(policy, oracle, sigma, mmap, memory_values, w_grid, sq_grid, n):
    """First violated condition for this memory relabeling, or None."""
    sigma_m_pairs = tuple(sorted(mmap.items()))
    for m_value in memory_values:
        for w in w_grid:
            if _condition1_violation(oracle, sigma, mmap, m_value, w):
                return Counterexample(
                    sigma=sigma, sigma_m=sigma_m_pairs, condition=1,
                    m_value=m_value, w=w, s=(), q=(),
                )
    for m_value in memory_values:
        for w in w_grid:
            for s, q in sq_grid:
                if _condition2_violation(oracle, sigma, mmap, m_value, w, s, q):
                    return Counterexample(
                        sigma=sigma, sigma_m=sigma_m_pairs, condition=2,
                        m_value=m_value, w=w, s=s,
                        q=tuple(queue.workloads for queue in q),
                    )
    for m_value in memory_values:
        for w in w_grid:
            for s, q in sq_grid:
                for d in range(1, n + 1):
                    if _condition3_violation(policy, sigma, mmap, m_value, w, s, q, d, n):
                        return Counterexample(
                            sigma=sigma, sigma_m=sigma_m_pairs, condition=3,
                            m_value=m_value, w=w, s=s,
                            q=tuple(queue.workloads for queue in q), d=d,
                        )
    return None


def recheck_counterexample(policy: PolicyDefinition, cx: Counterexample) -> bool:
    """Re-evaluate the recorded condition instance; True means the violation
    is reproduced."""
    oracle = DistributionOracle.from_policy(policy)
    mmap = dict(cx.sigma_m)
    q = tuple(ServerQueue(workloads) for workloads in cx.q)
    if cx.condition == 1:
        return _condition1_violation(oracle, cx.sigma, mmap, cx.m_value, cx.w)
    if cx.condition == 2:
        return _condition2_violation(oracle, cx.sigma, mmap, cx.m_value, cx.w, cx.s, q)
    n = len(cx.sigma)
    return _condition3_violation(policy, cx.sigma, mmap, cx.m_value, cx.w, cx.s, q, cx.d, n)


# ---------------------------------------------------------------------------
# distinguished sets


@dataclass(frozen=True)
class DistinguishedSet:
    """Result of the minimal-distinguished-set computation.

    ``kind`` is ``"SET"`` when a unique largest probability class exists, in
    which case ``members`` is the complement of that class; ``"TIE"`` when
    two classes tie for largest, with the tied classes reported instead.
    """

    kind: str
    members: frozenset
    classes: tuple  # (probability, frozenset) pairs, largest class last
    tie_classes: tuple = ()

    @property
    def is_tie(self) -> bool:
        return self.kind == "TIE"

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "members": sorted(self.members),
            "classes": [
                {"probability": str(p), "servers": sorted(cls)} for p, cls in self.classes
            ],
            "tie_classes": [sorted(cls) for cls in self.tie_classes],
        }


def _group_probabilities(probs: dict) -> list:
    """Group indices by probability: exact for rationals, gap-clustered at
    tolerance 1e-9 otherwise.  Returns (value, members) pairs."""
    if all(isinstance(p, (Fraction, int)) for p in probs.values()):
        groups = {}
        for j, p in probs.items():
            groups.setdefault(Fraction(p), set()).add(j)
        return sorted(groups.items(), key=lambda kv: (len(kv[1]), kv[0]))
    items = sorted(probs.items(), key=lambda kv: float(kv[1]))
    clusters = []
    for j, p in items:
        p = float(p)
        if clusters and p - clusters[-1][0][-1] <= _PROB_TOL:
            clusters[-1][0].append(p)
            clusters[-1][1].add(j)
        else:
            clusters.append(([p], {j}))
    return sorted(
        ((vals[0], members) for vals, members in clusters),
        key=lambda kv: (len(kv[1]), kv[0]),
    )


def _distinguished_from_probs(probs: dict) -> DistinguishedSet:
    if not probs:
        return DistinguishedSet(kind="SET", members=frozenset(), classes=())
    groups = _group_probabilities(probs)
    classes = tuple((p, frozenset(members)) for p, members in groups)
    if len(groups) >= 2 and len(groups[-1][1]) == len(groups[-2][1]):
        largest = len(groups[-1][1])
        tied = tuple(frozenset(m) for _, m in groups if len(m) == largest)
        return DistinguishedSet(kind="TIE", members=frozenset(), classes=classes, tie_classes=tied)
    members = frozenset().union(*(m for _, m in groups[:-1])) if len(groups) > 1 else frozenset()
    return DistinguishedSet(kind="SET", members=members, classes=classes)


def distinguished_sample_set(
    oracle: DistributionOracle, m_value: int, w: float, s: tuple, ell: int, n: int
) -> DistinguishedSet:
    """Distinguished servers of the next-sample distribution, conditioned on
    the event that exactly ``ell`` servers are sampled and the first
    ``len(s)`` of them equal ``s``."""
    k = len(s)
    if not k < ell <= n:
        raise ConfigError(f"need len(s) < ell <= n, got len(s)={k}, ell={ell}")
    full = oracle.checked_sample(m_value, w)
    total = 0
    next_mass = {}
    for vec, p in full.items():
        if len(vec) == ell and vec[:k] == tuple(s):
            total = total + p
            j = vec[k]
            next_mass[j] = next_mass.get(j, 0) + p
    if total == 0:
        raise UndefinedConditionalError(
            f"conditioning event B(m={m_value}, s={s}, ell={ell}) has probability 0"
        )
    s_set = set(s)
    probs = {}
    for j in range(1, n + 1):
        if j not in s_set:
            probs[j] = next_mass.get(j, 0) / total
    return _distinguished_from_probs(probs)


def distinguished_dispatch_set(
    oracle: DistributionOracle, m_value: int, w: float, s: tuple, q: tuple, n: int
) -> DistinguishedSet:
    """Distinguished servers of the dispatch distribution, over destinations
    outside the sampled set."""
    dist = oracle.checked_dispatch(m_value, w, tuple(s), q)
    s_set = set(s)
    probs = {j: dist.get(j, 0) for j in range(1, n + 1) if j not in s_set}
    return _distinguished_from_probs(probs)


# ---------------------------------------------------------------------------
# combinatorial bound scan


@dataclass(frozen=True)
class BinomialScanRow:
    n: int
    feasible: tuple  # b values with C(n-a, b) <= n^c
    violations: tuple  # feasible b outside {b <= c} | {b >= n-a-c}
    contained: bool


@dataclass(frozen=True)
class BinomialScanReport:
    a: int
    c: int
    rows: tuple
    threshold: Optional[int]  # smallest scanned n from which containment holds onward

    def to_json_dict(self) -> dict:
        return {
            "a": self.a,
            "c": self.c,
            "threshold": self.threshold,
            "rows": [
                {
                    "n": r.n,
                    "feasible": list(r.feasible),
                    "violations": list(r.violations),
                    "contained": r.contained,
                }
                for r in self.rows
            ],
        }


def binomial_bound_scan(a: int, c: int, n_range: Sequence[int]) -> BinomialScanReport:
    """Exact big-integer check that every b with ``C(n-a, b) <= n^c`` is
    either at most c or at least n-a-c, for each n in the range."""
    if a < 1 or c < 1:
        raise ConfigError("a and c must be at least 1")
    rows = []
    for n in n_range:
        if n <= a:
            raise ConfigError(f"n must exceed a, got n={n}, a={a}")
        cap = n**c
        feasible = tuple(b for b in range(0, n - a + 1) if math.comb(n - a, b) <= cap)
        violations = tuple(b for b in feasible if not (b <= c or b >= n - a - c))
        rows.append(
            BinomialScanRow(
                n=n, feasible=feasible, violations=violations, contained=not violations
            )
        )
    threshold = None
    for idx in range(len(rows) - 1, -1, -1):
        if not rows[idx].contained:
            break
        threshold = rows[idx].n
    return BinomialScanReport(a=a, c=c, rows=tuple(rows), threshold=threshold)


# ---------------------------------------------------------------------------
# oracle-versus-hook consistency and combined distributions


def sample_hook_gof(
    policy: PolicyDefinition,
    m_value: int,
    w: float,
    draws: int = 100_000,
    seed: int = 0,
    significance: float = 1e-3,
) -> tuple:
    """Chi-squared fit of Monte Carlo f1 draws against the sample oracle.

    Returns ``(pvalue, passed)``; support cells are the oracle's."""
    oracle = DistributionOracle.from_policy(policy)
    dist = oracle.checked_sample(m_value, w)
    rng = np.random.Generator(np.random.PCG64(seed))
    m_state = MemoryState(m_value, policy.memory_bits)
    counts = {vec: 0 for vec in dist}
    for _ in range(draws):
        got = policy.f1(m_state, w, rng.random()).ids
        if got not in counts:
            raise OracleError(f"hook produced {got!r}, outside the oracle support")
        counts[got] += 1
    keys = list(dist)
    expected = np.array([float(dist[k]) * draws for k in keys])
    observed = np.array([counts[k] for k in keys], dtype=float)
    if len(keys) == 1:
        return 1.0, True
    stat, pvalue = _stats.chisquare(observed, expected)
    return float(pvalue), bool(pvalue >= significance)


def dispatch_hook_gof(
    policy: PolicyDefinition,
    m_value: int,
    w: float,
    s: tuple,
    q: tuple,
    draws: int = 100_000,
    seed: int = 0,
    significance: float = 1e-3,
) -> tuple:
    """Chi-squared fit of Monte Carlo f2 draws against the dispatch oracle."""
    oracle = DistributionOracle.from_policy(policy)
    dist = oracle.checked_dispatch(m_value, w, tuple(s), q)
    support = {d: float(p) for d, p in dist.items() if p > 0}
    rng = np.random.Generator(np.random.PCG64(seed))
    m_state = MemoryState(m_value, policy.memory_bits)
    sv = SampleVector(s)
    counts = {d: 0 for d in support}
    for _ in range(draws):
        got = policy.f2(m_state, w, sv, q, rng.random())
        if got not in counts:
            raise OracleError(f"hook dispatched to {got}, outside the oracle support")
        counts[got] += 1
    keys = list(support)
    if len(keys) == 1:
        return 1.0, True
    expected = np.array([support[k] * draws for k in keys])
    observed = np.array([counts[k] for k in keys], dtype=float)
    stat, pvalue = _stats.chisquare(observed, expected)
    return float(pvalue), bool(pvalue >= significance)


def destination_distribution(policy: PolicyDefinition, m_value: int, w: float, queues: dict) -> dict:
    """Exact marginal destination distribution for a full queue assignment
    ``queues`` (id -> ServerQueue), combining the sample and dispatch
    oracles.  Exact when both oracles emit rationals."""
    oracle = DistributionOracle.from_policy(policy)
    out = {}
    for vec, p_vec in oracle.checked_sample(m_value, w).items():
        q = tuple(queues[i] for i in vec)
        for dest, p_dest in oracle.checked_dispatch(m_value, w, vec, q).items():
            out[dest] = out.get(dest, 0) + p_vec * p_dest
    return out
