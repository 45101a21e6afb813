"""Crafted policies used across the test suite."""

from fractions import Fraction

from dispatchsim.core import EMPTY_SAMPLE, MemoryState, PolicyDefinition, SampleVector, uniform_server


def make_idle_ping(n: int, ping_rate: float) -> PolicyDefinition:
    """Idle servers answer a Poisson ping clock; the dispatcher keeps an
    idle bitmap learned only through those pings."""

    def g1(queues, x):
        i = uniform_server(x, n)
        return i if queues[i - 1].is_idle else None

    def g2(m, i, q_i):
        return m.with_value(m.value | (1 << (i - 1)))

    def f2(m, w, s, q, v):
        value = m.value
        if value:
            flagged = [i + 1 for i in range(n) if value >> i & 1]
            return flagged[min(int(v * len(flagged)), len(flagged) - 1)]
        return uniform_server(v, n)

    def f3(m, w, s, q, d):
        return m.with_value(m.value & ~(1 << (d - 1)))

    return PolicyDefinition(
        name="idle_ping",
        memory_bits=n,
        f1=lambda m, w, u: EMPTY_SAMPLE,
        f2=f2,
        f3=f3,
        g1=g1,
        g2=g2,
        spontaneous_rate=ping_rate,
    )


def make_vip(n: int) -> PolicyDefinition:
    """Always samples the single remembered server first; marker policy for
    the distinguished-set computation (memory exponent c = 1)."""
    bits = (n - 1).bit_length()

    def f1(m, w, u):
        return SampleVector((m.value + 1,))

    def f2(m, w, s, q, v):
        return s.ids[0]

    def sample_oracle(m_value, w):
        return {(m_value + 1,): Fraction(1)}

    def dispatch_oracle(m_value, w, s, q):
        if s:
            return {s[0]: Fraction(1)}
        return {m_value + 1: Fraction(1)}

    return PolicyDefinition(
        name="vip",
        memory_bits=bits,
        f1=f1,
        f2=f2,
        f3=lambda m, w, s, q, d: m,
        sample_oracle=sample_oracle,
        dispatch_oracle=dispatch_oracle,
        audit_memory_values=tuple(range(n)),
    )


def make_tie_oracle_policy() -> PolicyDefinition:
    """n = 4 sampler with next-pick probabilities {3/10, 3/10, 2/10, 2/10}:
    two equally large probability classes, so no unique distinguished set."""
    probs = {
        (1,): Fraction(3, 10),
        (2,): Fraction(3, 10),
        (3,): Fraction(2, 10),
        (4,): Fraction(2, 10),
    }

    def f1(m, w, u):
        acc = 0.0
        for vec, p in probs.items():
            acc += float(p)
            if u < acc:
                return SampleVector(vec)
        return SampleVector((4,))

    def dispatch_oracle(m_value, w, s, q):
        return {s[0]: Fraction(1)} if s else {1: Fraction(1)}

    return PolicyDefinition(
        name="tie_oracle",
        memory_bits=0,
        f1=f1,
        f2=lambda m, w, s, q, v: s.ids[0] if len(s) else 1,
        f3=lambda m, w, s, q, d: m,
        sample_oracle=lambda m_value, w: dict(probs),
        dispatch_oracle=dispatch_oracle,
    )
