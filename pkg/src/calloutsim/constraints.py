"""Call-out rate enforcement and impression arrival clocks.

Two constraint modes share one interface shape:

* RateLedger caps the running grant count per network at rate * impressions,
  the time-average model.
* TokenBucket holds up to ``capacity`` tokens, refills at ``rate`` per unit
  time, and spends one token per granted call-out.

Arrival times come from ArrivalProcess (deterministic unit-gap clock or a
Poisson clock with exponential gaps), so the bucket refill sees real time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TokenBucket",
    "RateLedger",
    "ArrivalProcess",
    "convert_policy",
    "warmup_skip",
]

# Grants sit on exact rational boundaries (rate * t hitting an integer); this
# slack keeps float rounding from flipping the comparison either way.
_EDGE = 1e-9


class TokenBucket:
    """Leaky-bucket rate limiter with real-valued continuous refill.

    Starts full. try_consume(now) first refills rate * elapsed (capped at
    capacity), then grants iff at least one token is available.
    """

    __slots__ = ("capacity", "rate", "level", "last_update")

    def __init__(self, capacity: float, rate: float, start_time: float = 0.0):
        if not capacity > 1:
            raise ValueError(f"bucket capacity must exceed 1, got {capacity}")
        if rate < 0:
            raise ValueError(f"refill rate must be non-negative, got {rate}")
        self.capacity = float(capacity)
        self.rate = float(rate)
        self.level = float(capacity)
        self.last_update = float(start_time)

    def _refill(self, now: float) -> None:
        if now < self.last_update - 1e-12:
            raise ValueError(
                f"time went backwards: {now} < {self.last_update}"
            )
        self.level = min(self.capacity, self.level + self.rate * (now - self.last_update))
        self.last_update = max(now, self.last_update)
        assert -1e-9 <= self.level <= self.capacity + 1e-9

    def peek(self, now: float) -> bool:
        self._refill(now)
        return self.level >= 1.0 - _EDGE

    def try_consume(self, now: float) -> bool:
        self._refill(now)
        if self.level >= 1.0 - _EDGE:
            self.level = max(0.0, self.level - 1.0)
            return True
        return False


class RateLedger:
    """Time-average cap: network i may be called while granted_i < rate_i * t.

    t counts impressions seen so far, including the current one (1-based).
    With rate 0.1 and an attempt on every impression the grants land on
    t = 1, 11, 21, ... exactly one per ten impressions.
    """

    def __init__(self, rates, horizon: int | None = None):
        self.rates = np.asarray(rates, dtype=float)
        if np.any(self.rates < 0):
            raise ValueError("call-out rates must be non-negative")
        self.horizon = horizon
        n = self.rates.size
        self.granted = np.zeros(n, dtype=np.int64)
        self.attempted = np.zeros(n, dtype=np.int64)

    def can_grant(self, i: int, t: int) -> bool:
        return bool(self.granted[i] < self.rates[i] * t - _EDGE)

    def try_consume(self, i: int, t: int) -> bool:
        self.attempted[i] += 1
        if self.can_grant(i, t):
            self.granted[i] += 1
            return True
        return False

    def attempt_rates(self, t: int) -> np.ndarray:
        return self.attempted / max(t, 1)

    def check_prefix_bound(self, t: int) -> None:
        limit = self.rates * t + 1 + 1e-9
        if np.any(self.granted > limit):
            bad = int(np.argmax(self.granted - limit))
            raise AssertionError(
                f"network {bad}: {self.granted[bad]} grants exceed "
                f"{self.rates[bad]} * {t} + 1"
            )


@dataclass(frozen=True)
class ArrivalProcess:
    """Impression clock. uniform: arrival k at time k * mean_gap (deterministic).
    poisson: i.i.d. exponential gaps with the given mean."""

    kind: str = "uniform"
    mean_gap: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "poisson"):
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        if not self.mean_gap > 0:
            raise ValueError("mean inter-arrival time must be positive")

    def times(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        if self.kind == "uniform":
            return self.mean_gap * np.arange(1, n + 1, dtype=float)
        if rng is None:
            raise ValueError("poisson arrivals need an rng")
        return np.cumsum(rng.exponential(self.mean_gap, size=n))


def convert_policy(decide, buckets: dict[int, TokenBucket]):
    """Gate a call-out policy through per-network token buckets.

    decide(*args, **kwargs) must return an iterable of network ids. The
    returned callable takes the arrival time first, attempts every requested
    call-out on its bucket, and silently drops the denied ones.
    """

    def gated(now: float, *args, **kwargs):
        wanted = decide(*args, **kwargs)
        return [i for i in wanted if buckets[i].try_consume(now)]

    return gated


def warmup_skip(buckets) -> float:
    """Time-unit prefix to drop before measuring a bucket-gated run.

    ceil(capacity / rate) for the slowest-draining bucket; infinite-capacity
    buckets never deny, so they contribute nothing.
    """
    worst = 0.0
    for b in buckets.values() if isinstance(buckets, dict) else buckets:
        if math.isinf(b.capacity):
            continue
        if b.rate <= 0:
            raise ValueError("finite bucket with zero refill never recovers")
        worst = max(worst, math.ceil(b.capacity / b.rate))
    return worst
