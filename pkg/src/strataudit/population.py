"""Stratified populations of ballot cards, modeled as categorical urns.

Each stratum is an urn of (value, count) categories rather than a
materialized list, so populations with millions of cards stay small in
memory.  Sampling is simple random sampling, with or without replacement,
independent across strata: the draw stream of a stratum depends only on
the master seed, the stratum id, and the draw index within the stratum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Raised for structurally invalid populations or audit configs."""


class ExhaustedStratum(Exception):
    """Raised when drawing without replacement from an empty stratum."""


@dataclass
class Stratum:
    """One stratum: an urn of bounded card values.

    Parameters
    ----------
    sid: 1-based stratum index
    size: number of cards in the stratum
    values: category values, each in [0, upper_bound]
    counts: category counts, summing to size minus cards already drawn
    upper_bound: upper bound on card values in this stratum
    """

    sid: int
    size: int
    values: np.ndarray
    counts: np.ndarray
    upper_bound: float
    drawn: int = 0
    running_sum: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.size <= 0:
            raise ConfigurationError(f"stratum {self.sid}: size must be positive")
        if self.upper_bound <= 0:
            raise ConfigurationError(f"stratum {self.sid}: upper bound must be positive")
        if np.any(self.values < 0) or np.any(self.values > self.upper_bound):
            raise ConfigurationError(
                f"stratum {self.sid}: values outside [0, {self.upper_bound}]"
            )
        if np.any(self.counts < 0):
            raise ConfigurationError(f"stratum {self.sid}: negative category count")
        if int(self.counts.sum()) + self.drawn != self.size:
            raise ConfigurationError(
                f"stratum {self.sid}: counts sum to {int(self.counts.sum())}, "
                f"expected {self.size - self.drawn}"
            )

    @property
    def remaining(self) -> int:
        return self.size - self.drawn

    def mean(self) -> float:
        """Mean of the values still in the urn."""
        if self.remaining == 0:
            return 0.0
        return float(self.counts @ self.values) / self.remaining

    def copy(self) -> "Stratum":
        return Stratum(
            sid=self.sid,
            size=self.size,
            values=self.values.copy(),
            counts=self.counts.copy(),
            upper_bound=self.upper_bound,
            drawn=self.drawn,
            running_sum=self.running_sum,
        )


@dataclass
class StratifiedPopulation:
    """K strata plus the sampling mode (with or without replacement)."""

    strata: list[Stratum]
    replacement: bool = False

    def __post_init__(self):
        if not self.strata:
            raise ConfigurationError("population needs at least one stratum")

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.size for s in self.strata], dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.sizes.sum())

    def copy(self) -> "StratifiedPopulation":
        return StratifiedPopulation(
            strata=[s.copy() for s in self.strata], replacement=self.replacement
        )


def stratum_weights(pop: StratifiedPopulation) -> np.ndarray:
    """Stratum weights N_k / N.  Sums to 1 up to float rounding."""
    sizes = pop.sizes
    if np.any(sizes <= 0):
        raise ConfigurationError("empty stratum in population")
    return sizes / sizes.sum()


def stratum_rngs(seed, k: int) -> list[np.random.Generator]:
    """Independent per-stratum generators derived from (seed, stratum index).

    The substream for stratum k never depends on how many draws other
    strata have consumed, so interleaving order cannot perturb
    within-stratum sequences.
    """
    root = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in root.spawn(k)]


def exhausted(stratum: Stratum, replacement: bool = False) -> bool:
    """True iff no card can be drawn from the stratum."""
    if replacement:
        return False
    return stratum.drawn >= stratum.size


def draw(stratum: Stratum, rng: np.random.Generator, replacement: bool = False) -> float:
    """Draw one card value by simple random sampling.

    Without replacement the drawn category is decremented; with
    replacement counts are untouched.  Either way ``drawn`` and
    ``running_sum`` advance.
    """
    if exhausted(stratum, replacement):
        raise ExhaustedStratum(f"stratum {stratum.sid} has no cards left")
    total = int(stratum.counts.sum())
    # One uniform variate against the count CDF; cheaper than rng.choice(p=...)
    # and keeps the stream a pure function of the draw index.
    r = int(rng.integers(total))
    cdf = np.cumsum(stratum.counts)
    idx = int(np.searchsorted(cdf, r, side="right"))
    if not replacement:
        stratum.counts[idx] -= 1
    x = float(stratum.values[idx])
    stratum.drawn += 1
    stratum.running_sum += x
    return x


def sample_stream(
    stratum: Stratum, rng: np.random.Generator, n: int, replacement: bool = False
) -> np.ndarray:
    """Draw ``n`` values as one array.

    Equivalent in distribution to ``n`` sequential :func:`draw` calls
    (exchangeability of simple random sampling); used by the batch
    simulator to avoid per-card Python overhead.  Mutates the stratum
    exactly as sequential draws would.
    """
    if replacement:
        idx = rng.choice(
            len(stratum.values), size=n, p=stratum.counts / stratum.counts.sum()
        )
        out = stratum.values[idx]
    else:
        if n > stratum.remaining:
            raise ExhaustedStratum(
                f"stratum {stratum.sid}: requested {n}, only {stratum.remaining} left"
            )
        taken = rng.multivariate_hypergeometric(stratum.counts, n)
        out = np.repeat(stratum.values, taken)
        rng.shuffle(out)
        stratum.counts -= taken
    stratum.drawn += n
    stratum.running_sum += float(out.sum())
    return out


@dataclass
class PopulationSampler:
    """Couples a population with per-stratum RNG substreams."""

    population: StratifiedPopulation
    seed: int | None = None
    rngs: list[np.random.Generator] = field(init=False)

    def __post_init__(self):
        self.rngs = stratum_rngs(self.seed, len(self.population.strata))

    def draw(self, k: int) -> float:
        """Draw from stratum k (0-based index into the strata list)."""
        return draw(
            self.population.strata[k], self.rngs[k], self.population.replacement
        )

    def exhausted(self, k: int) -> bool:
        return exhausted(self.population.strata[k], self.population.replacement)
