"""Renewal arrival generators and the small-gap assumption validator.

Inter-arrival times are drawn from one of four families, each scaled so the
mean is exactly ``1/rate`` where ``rate`` is the aggregate arrival rate.  Job
sizes reuse the same families with mean fixed to 1.

The validator estimates, for each system size ``n`` and each ``eps`` on a
grid, the probability that an inter-arrival time is at most ``eps/n``.  A
family is usable for the scaled regime only if this probability stays
strictly inside (0, 1); deterministic and strictly-shifted families fail.

All sampling is inverse-CDF over an explicit uniform stream, so replaying a
seed reproduces the draws bit for bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .core import ConfigError

__all__ = [
    "DistributionSpec",
    "InterarrivalSpec",
    "SizeSpec",
    "sample_interarrival",
    "sample_stationary_residual",
    "ValidationCell",
    "validate_assumption",
    "write_validation_csv",
]

FAMILIES = ("exponential", "hyperexponential", "uniform", "deterministic")


@dataclass(frozen=True)
class DistributionSpec:
    """A positive distribution with a pinned mean.

    families:
      * ``exponential``: mean ``mean``.
      * ``hyperexponential``: two-branch mix; branch 1 has probability ``p``
        and branch 2's rate is ``ratio`` times branch 1's.  Scaled to the
        target mean.
      * ``uniform``: uniform on ``[mean*(1-half_width), mean*(1+half_width)]``
        with ``half_width`` in (0, 1].
      * ``deterministic``: point mass at ``mean``.
    """

    family: str
    mean: float
    p: float = 0.5
    ratio: float = 10.0
    half_width: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.mean <= 0:
            raise ConfigError("mean must be positive")
        if self.family == "hyperexponential":
            if not 0.0 < self.p < 1.0:
                raise ConfigError("branch probability must be in (0, 1)")
            if self.ratio <= 0:
                raise ConfigError("rate ratio must be positive")
        if self.family == "uniform" and not 0.0 < self.half_width <= 1.0:
            raise ConfigError("half_width must be in (0, 1]")

    # branch scales for the hyperexponential, solved from the mean constraint
    def _hyper_scales(self) -> tuple:
        rate1 = (self.p + (1.0 - self.p) / self.ratio) / self.mean
        return 1.0 / rate1, 1.0 / (rate1 * self.ratio)

    def sample(self, stream) -> float:
        """One draw, consuming uniforms from ``stream``."""
        fam = self.family
        if fam == "exponential":
            g = -self.mean * math.log(1.0 - stream.random())
            return g if g > 0.0 else self.mean * 1e-300
        if fam == "deterministic":
            return self.mean
        if fam == "uniform":
            lo = self.mean * (1.0 - self.half_width)
            hi = self.mean * (1.0 + self.half_width)
            x = lo + (hi - lo) * stream.random()
            return x if x > 0.0 else self.mean * 1e-300
        # hyperexponential
        s1, s2 = self._hyper_scales()
        scale = s1 if stream.random() < self.p else s2
        g = -scale * math.log(1.0 - stream.random())
        return g if g > 0.0 else self.mean * 1e-300

    def sample_array(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Vectorized draws for Monte Carlo estimation."""
        fam = self.family
        if fam == "exponential":
            return -self.mean * np.log1p(-rng.random(size))
        if fam == "deterministic":
            return np.full(size, self.mean)
        if fam == "uniform":
            lo = self.mean * (1.0 - self.half_width)
            hi = self.mean * (1.0 + self.half_width)
            return lo + (hi - lo) * rng.random(size)
        s1, s2 = self._hyper_scales()
        scales = np.where(rng.random(size) < self.p, s1, s2)
        return -scales * np.log1p(-rng.random(size))

    def sample_length_biased(self, stream) -> float:
        """Draw from the length-biased version of the distribution, with
        density proportional to ``x`` times the original density."""
        fam = self.family
        if fam == "deterministic":
            return self.mean
        if fam == "exponential":
            # length-biased exponential is Gamma(2, scale): sum of two draws
            g = -self.mean * (
                math.log(1.0 - stream.random()) + math.log(1.0 - stream.random())
            )
            return g
        if fam == "uniform":
            lo = self.mean * (1.0 - self.half_width)
            hi = self.mean * (1.0 + self.half_width)
            u = stream.random()
            return math.sqrt(lo * lo + u * (hi * hi - lo * lo))
        s1, s2 = self._hyper_scales()
        # branch j is picked in proportion to p_j * mean_j
        w1 = self.p * s1
        w2 = (1.0 - self.p) * s2
        scale = s1 if stream.random() < w1 / (w1 + w2) else s2
        return -scale * (
            math.log(1.0 - stream.random()) + math.log(1.0 - stream.random())
        )

    def small_gap_probability(self, threshold: float) -> Optional[float]:
        """Exact ``P(X <= threshold)`` where a closed form exists, else None."""
        if threshold < 0:
            return 0.0
        fam = self.family
        if fam == "exponential":
            return 1.0 - math.exp(-threshold / self.mean)
        if fam == "deterministic":
            return 1.0 if threshold >= self.mean else 0.0
        if fam == "uniform":
            lo = self.mean * (1.0 - self.half_width)
            hi = self.mean * (1.0 + self.half_width)
            if threshold <= lo:
                return 0.0
            if threshold >= hi:
                return 1.0
            return (threshold - lo) / (hi - lo)
        return None

    def quantile(self, prob: float) -> float:
        """Inverse CDF (numeric bisection for the hyperexponential)."""
        if not 0.0 <= prob < 1.0:
            raise ConfigError("quantile probability must be in [0, 1)")
        fam = self.family
        if fam == "exponential":
            return -self.mean * math.log(1.0 - prob)
        if fam == "deterministic":
            return self.mean
        if fam == "uniform":
            lo = self.mean * (1.0 - self.half_width)
            hi = self.mean * (1.0 + self.half_width)
            return lo + (hi - lo) * prob
        s1, s2 = self._hyper_scales()

        def cdf(x: float) -> float:
            return 1.0 - self.p * math.exp(-x / s1) - (1.0 - self.p) * math.exp(-x / s2)

        lo, hi = 0.0, self.mean
        while cdf(hi) < prob:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if cdf(mid) < prob:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def InterarrivalSpec(family: str, rate: float, **params) -> DistributionSpec:
    """Inter-arrival distribution with mean ``1/rate`` by construction."""
    if rate <= 0:
        raise ConfigError("arrival rate must be positive")
    return DistributionSpec(family=family, mean=1.0 / rate, **params)


def SizeSpec(family: str = "exponential", **params) -> DistributionSpec:
    """Job-size distribution with mean 1 by construction."""
    return DistributionSpec(family=family, mean=1.0, **params)


def sample_interarrival(spec: DistributionSpec, stream) -> float:
    """One inter-arrival gap; always strictly positive."""
    return spec.sample(stream)


def sample_stationary_residual(spec: DistributionSpec, stream) -> float:
    """Time from a stationary observation point to the next renewal.

    Uses the classical construction: the straddling interval is length
    biased, and the residual is uniform within it.
    """
    return stream.random() * spec.sample_length_biased(stream)


@dataclass(frozen=True)
class ValidationCell:
    """One (family, n, eps) cell of the assumption report."""

    family: str
    n: int
    eps: float
    estimate: float
    ci_half_width: float
    exact: Optional[float]
    verdict: str


def validate_assumption(
    family: str,
    rate_per_server: float,
    n_grid: Iterable[int],
    eps_grid: Iterable[float] = (0.01, 0.05, 0.1, 0.5),
    samples: int = 100_000,
    delta: float = 1e-3,
    seed: int = 0,
    **params,
) -> list:
    """Monte Carlo check that small inter-arrival gaps of order ``eps/n``
    occur with probability strictly inside (0, 1).

    For each cell, estimates ``P(I_n <= eps/n)`` where ``I_n`` has mean
    ``1/(rate_per_server * n)``, reports a 99% CI, and flags PASS when the
    estimate lies in ``[delta, 1 - delta]`` and FAIL when it pins to 0 or 1.
    """
    if not 0 < rate_per_server < 1:
        raise ConfigError("per-server arrival rate must be in (0, 1)")
    if samples < 1:
        raise ConfigError("sample count must be positive")
    cells = []
    z99 = 2.5758293035489004
    for n in n_grid:
        if n < 1:
            raise ConfigError("system size must be at least 1")
        spec = InterarrivalSpec(family, rate_per_server * n, **params)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, n))))
        draws = spec.sample_array(rng, samples)
        for eps in eps_grid:
            if eps <= 0:
                raise ConfigError("eps grid must be positive")
            threshold = eps / n
            p_hat = float(np.mean(draws <= threshold))
            hw = z99 * math.sqrt(max(p_hat * (1.0 - p_hat), 1.0 / samples) / samples)
            exact = spec.small_gap_probability(threshold)
            verdict = "PASS" if delta <= p_hat <= 1.0 - delta else "FAIL"
            cells.append(
                ValidationCell(
                    family=family,
                    n=int(n),
                    eps=float(eps),
                    estimate=p_hat,
                    ci_half_width=hw,
                    exact=exact,
                    verdict=verdict,
                )
            )
    return cells


def write_validation_csv(cells, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "n", "eps", "estimate", "ci_half_width", "exact", "verdict"])
        for c in cells:
            writer.writerow(
                [
                    c.family,
                    c.n,
                    f"{c.eps:.10g}",
                    f"{c.estimate:.10g}",
                    f"{c.ci_half_width:.10g}",
                    "" if c.exact is None else f"{c.exact:.10g}",
                    c.verdict,
                ]
            )
