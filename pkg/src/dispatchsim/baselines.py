"""Closed-form and fixed-point queueing baselines.

These are the reference values the simulator is checked against: the M/M/1
waiting time, the Erlang-C M/M/n waiting time, the mean-field queue-length
tail under join-shortest-of-d sampling, and the D/M/1 waiting time that a
round-robin dispatcher induces per queue.  All loads are per-server, so the
stability region is ``0 < load < 1`` everywhere.
"""

from __future__ import annotations

import math

from .core import ConfigError

__all__ = ["mm1_wait", "mmn_wait", "erlang_c", "sqd_tail", "dm1_wait"]


def _check_load(load: float) -> None:
    if not 0.0 < load < 1.0:
        raise ConfigError(f"load must be in (0, 1), got {load}")


def mm1_wait(load: float) -> float:
    """Mean queueing delay of an M/M/1 queue with unit service rate."""
    _check_load(load)
    return load / (1.0 - load)


def erlang_c(n: int, offered: float) -> float:
    """Probability of waiting in an M/M/n queue with offered load ``offered``.

    Uses the recursive Erlang-B form, which is numerically stable for large
    ``n`` (no factorials are ever formed).
    """
    if n < 1:
        raise ConfigError("server count must be at least 1")
    if not 0.0 < offered < n:
        raise ConfigError(f"offered load must be in (0, n), got {offered}")
    b = 1.0
    for k in range(1, n + 1):
        b = offered * b / (k + offered * b)
    return n * b / (n - offered * (1.0 - b))


def mmn_wait(n: int, load: float) -> float:
    """Mean queueing delay of an M/M/n queue at per-server load ``load``."""
    _check_load(load)
    offered = load * n
    return erlang_c(n, offered) / (n - offered)


def sqd_tail(load: float, d: int, i: int) -> float:
    """Steady-state fraction of queues holding at least ``i`` jobs under
    join-shortest-of-d sampling, in the mean-field limit.

    ``d == 1`` degenerates to random routing, with the geometric M/M/1 tail.
    """
    _check_load(load)
    if d < 1:
        raise ConfigError("d must be at least 1")
    if i < 0:
        raise ConfigError("i must be nonnegative")
    if d == 1:
        return load**i
    exponent = (d**i - 1) / (d - 1)
    return load**exponent


def dm1_wait(load: float, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Mean queueing delay of a D/M/1 queue (deterministic inter-arrivals of
    ``1/load``, unit-rate exponential service).

    Solves ``sigma = exp(-(1 - sigma)/load)`` by damped fixed-point
    iteration; the delay is ``sigma / (1 - sigma)``.
    """
    _check_load(load)
    sigma = load
    for _ in range(max_iter):
        nxt = math.exp(-(1.0 - sigma) / load)
        nxt = 0.5 * sigma + 0.5 * nxt
        if abs(nxt - sigma) < tol:
            sigma = nxt
            break
        sigma = nxt
    else:
        raise ArithmeticError("D/M/1 fixed point did not converge")
    return sigma / (1.0 - sigma)
