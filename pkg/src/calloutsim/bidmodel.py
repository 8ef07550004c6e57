"""Discrete bid distributions, impression types, and slot profiles.

Everything downstream (LP construction, call-out rules, auctions) works on
finite value grids. A BidDistribution is an explicit probability mass function
on a sorted grid of non-negative bid values; impression types bundle one such
distribution per ad network together with an arrival probability and, for the
sales objective, a minimum acceptable price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BidDistribution",
    "ImpressionType",
    "SlotProfile",
    "survival",
    "is_mhr",
    "generate_benchmark_distribution",
    "perturb_general_position",
]

_MASS_TOL = 1e-9


@dataclass(frozen=True)
class BidDistribution:
    """PMF over a strictly increasing grid of non-negative bid values.

    probs may contain zeros (a perturbed grid usually has none); they must be
    non-negative and sum to one within 1e-9.
    """

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        if values.ndim != 1 or probs.shape != values.shape:
            raise ValueError("values and probs must be 1-d arrays of equal length")
        if values.size == 0:
            raise ValueError("empty distribution")
        if np.any(values < 0):
            raise ValueError("bid values must be non-negative")
        if np.any(np.diff(values) <= 0):
            raise ValueError("bid values must be strictly increasing")
        if np.any(probs < -_MASS_TOL):
            raise ValueError("probabilities must be non-negative")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total}, expected 1")
        # right-to-left tail sums, cached for survival / tail expectation
        sf = np.cumsum(probs[::-1])[::-1]
        tail_ev = np.cumsum((values * probs)[::-1])[::-1]
        object.__setattr__(self, "_sf", sf)
        object.__setattr__(self, "_tail_ev", tail_ev)
        object.__setattr__(self, "_cdf", np.cumsum(probs))

    @classmethod
    def from_mapping(cls, mapping: dict[float, float]) -> "BidDistribution":
        items = sorted(mapping.items())
        return cls(np.array([v for v, _ in items]), np.array([p for _, p in items]))

    def to_dict(self) -> dict:
        return {"values": self.values.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BidDistribution":
        return cls(np.asarray(d["values"]), np.asarray(d["probs"]))

    def survival(self, v: float) -> float:
        """Pr[V >= v]; v need not be a grid point."""
        idx = int(np.searchsorted(self.values, v, side="left"))
        return float(self._sf[idx]) if idx < self.values.size else 0.0

    def tail_expectation(self, v: float) -> float:
        """Sum of v' * p(v') over grid values v' >= v."""
        idx = int(np.searchsorted(self.values, v, side="left"))
        return float(self._tail_ev[idx]) if idx < self.values.size else 0.0

    def expectation(self) -> float:
        return float(self._tail_ev[0])

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """(values, probs) restricted to strictly positive mass."""
        mask = self.probs > 0
        return self.values[mask], self.probs[mask]

    def sample(self, rng: np.random.Generator, size: int | None = None):
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        idx = np.minimum(idx, self.values.size - 1)
        return self.values[idx]

    def is_mhr(self, tol: float = 1e-9) -> bool:
        """Whether the discrete hazard p(v) / Pr[V >= v] is non-decreasing on the support."""
        vals, probs = self.support()
        sf = np.cumsum(probs[::-1])[::-1]
        hazard = probs / sf
        return bool(np.all(np.diff(hazard) >= -tol))

    def mhr_reserve(self) -> float:
        """Smallest support value v with 2 * v * Pr[V >= v] >= E[V ; V >= v].

        Always exists: at the top of the support the condition reads
        2 * vmax * p(vmax) >= vmax * p(vmax).
        """
        vals, probs = self.support()
        sf = np.cumsum(probs[::-1])[::-1]
        tail_ev = np.cumsum((vals * probs)[::-1])[::-1]
        ok = 2.0 * vals * sf >= tail_ev - 1e-12
        idx = int(np.argmax(ok))
        return float(vals[idx])


def survival(dist: BidDistribution, v: float) -> float:
    return dist.survival(v)


def is_mhr(dist: BidDistribution) -> bool:
    return dist.is_mhr()


@dataclass(frozen=True)
class SlotProfile:
    """Ad slots with non-increasing discount factors, discounts[0] being the top slot."""

    discounts: tuple[float, ...]

    def __post_init__(self):
        d = tuple(float(x) for x in self.discounts)
        object.__setattr__(self, "discounts", d)
        if len(d) == 0:
            raise ValueError("need at least one slot")
        if any(x < 0 or x > 1 for x in d):
            raise ValueError("discounts must lie in [0, 1]")
        if any(d[i] < d[i + 1] for i in range(len(d) - 1)):
            raise ValueError("discounts must be non-increasing")

    @property
    def m(self) -> int:
        return len(self.discounts)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.discounts, dtype=float)


@dataclass(frozen=True)
class ImpressionType:
    """One point of the impression universe.

    bids holds one BidDistribution per network, indexed by network id. For the
    sales objective min_price defines the 0/1 effective bid: a network bids 1
    exactly when its sampled bid clears min_price.
    """

    type_id: int
    arrival_prob: float
    bids: tuple[BidDistribution, ...]
    vertical: int = 0
    min_price: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.arrival_prob <= 1.0 + _MASS_TOL):
            raise ValueError("arrival_prob must lie in [0, 1]")

    def survival_vector(self) -> np.ndarray:
        """Per-network probability of clearing min_price."""
        return np.array([d.survival(self.min_price) for d in self.bids])

    def effective_bids(self, objective: str) -> tuple[BidDistribution, ...]:
        """Bid distributions as seen by the given objective.

        sales collapses each distribution to {0, 1} with
        p(1) = survival(min_price); other objectives use the raw grids.
        """
        if objective != "sales":
            return self.bids
        out = []
        for d in self.bids:
            s = min(1.0, max(0.0, d.survival(self.min_price)))
            out.append(BidDistribution(np.array([0.0, 1.0]), np.array([1.0 - s, s])))
        return tuple(out)


def perturb_general_position(
    dist: BidDistribution, epsilon: float = 1e-9, rng: np.random.Generator | None = None
) -> BidDistribution:
    """Jitter each mass by Uniform(-epsilon, epsilon), clip at 0, renormalize.

    Breaks exact ties between LP vertices so that optimal duals are generically
    unique; total variation moved is at most len(grid) * epsilon.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    noise = rng.uniform(-epsilon, epsilon, size=dist.probs.shape)
    probs = np.clip(dist.probs + noise, 0.0, None)
    total = probs.sum()
    if total <= 0:
        raise ValueError("perturbation wiped out all mass")
    return BidDistribution(dist.values, probs / total)


def _truncated_cdf_masses(cdf, edges) -> np.ndarray:
    """Bin masses from a CDF callable, renormalized to the [edges[0], edges[-1]] window."""
    c = np.array([cdf(e) for e in edges])
    masses = np.diff(c)
    masses = np.clip(masses, 0.0, None)
    # CDF differencing leaves ~1e-14 residue in the far tail; zero it out so
    # hazard rates on the support are not dominated by rounding noise
    masses[masses < 1e-13] = 0.0
    total = masses.sum()
    if total <= 0:
        # all mass fell outside the window; park it in the lowest bin
        masses = np.zeros(len(edges) - 1)
        masses[0] = 1.0
        return masses
    return masses / total


def generate_benchmark_distribution(
    kind: str,
    r: float,
    rng: np.random.Generator,
    bins: int = 100,
) -> BidDistribution:
    """Random per-(network, vertical) bid distribution for the synthetic workload.

    kind "gaussian": Normal with mean ~ U[0, r/2] and std ~ U[0, mean/2],
    truncated to [0, r]. kind "pareto": Pareto with tail exponent ~ U[2, 5]
    and scale set so the untruncated mean is ~ U[0, r/2], truncated to [0, r].
    The continuous law is discretized onto `bins` equal-width bin midpoints.
    """
    if bins < 2:
        raise ValueError("need at least two bins")
    edges = np.linspace(0.0, r, bins + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    if kind == "gaussian":
        mean = rng.uniform(0.0, 0.5 * r)
        std = rng.uniform(0.0, 0.5 * mean)
        if std < 1e-9 * r:
            # degenerate point mass at the mean's bin
            masses = np.zeros(bins)
            masses[min(bins - 1, int(mean / r * bins))] = 1.0
            return BidDistribution(mids, masses)
        from math import erf, sqrt

        def cdf(x):
            return 0.5 * (1.0 + erf((x - mean) / (std * sqrt(2.0))))

        masses = _truncated_cdf_masses(cdf, edges)
    elif kind == "pareto":
        shape = rng.uniform(2.0, 5.0)
        mean = rng.uniform(0.0, 0.5 * r)
        scale = max(mean * (shape - 1.0) / shape, 1e-9 * r)

        def cdf(x):
            if x <= scale:
                return 0.0
            return 1.0 - (scale / x) ** shape

        masses = _truncated_cdf_masses(cdf, edges)
    else:
        raise ValueError(f"unknown distribution kind: {kind!r}")
    return BidDistribution(mids, masses)
