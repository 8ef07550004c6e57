"""Auction formats and the closed-form quantities used to reason about them.

All mechanisms take realized bids (a mapping from network id to bid) plus the
slot profile and return an AuctionOutcome. Ties on bids or prices break toward
the smaller network id; slots are filled top down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bidmodel import BidDistribution, SlotProfile

__all__ = [
    "AuctionOutcome",
    "run_value_auction",
    "run_gsp",
    "run_reserve_auction",
    "run_posted",
    "stop_process_expectation",
    "lpmax_bound",
    "sales_probability",
]


@dataclass(frozen=True)
class AuctionOutcome:
    kind: str
    welfare: float
    revenue: float
    sold: bool
    # (network_id, slot index 1-based, bid, payment) per filled slot
    allocation: tuple[tuple[int, int, float, float], ...] = ()


def _ranked(bids: dict[int, float]) -> list[tuple[int, float]]:
    return sorted(bids.items(), key=lambda kv: (-kv[1], kv[0]))


def run_value_auction(bids: dict[int, float], slots: SlotProfile) -> AuctionOutcome:
    """Welfare-maximizing assignment: r-th highest bid into slot r."""
    ranked = _ranked(bids)
    disc = slots.discounts
    alloc = []
    welfare = 0.0
    for r, (i, bid) in enumerate(ranked[: slots.m]):
        welfare += disc[r] * bid
        alloc.append((i, r + 1, bid, 0.0))
    return AuctionOutcome(
        kind="value-auction",
        welfare=welfare,
        revenue=0.0,
        sold=any(b > 0 for _, _, b, _ in alloc),
        allocation=tuple(alloc),
    )


def run_gsp(bids: dict[int, float], slots: SlotProfile) -> AuctionOutcome:
    """Generalized second price: slot r pays its discount times the (r+1)-th bid."""
    ranked = _ranked(bids)
    disc = slots.discounts
    alloc = []
    welfare = 0.0
    revenue = 0.0
    for r, (i, bid) in enumerate(ranked[: slots.m]):
        next_bid = ranked[r + 1][1] if r + 1 < len(ranked) else 0.0
        pay = disc[r] * next_bid
        welfare += disc[r] * bid
        revenue += pay
        alloc.append((i, r + 1, bid, pay))
    return AuctionOutcome(
        kind="gsp-regular",
        welfare=welfare,
        revenue=revenue,
        sold=any(b > 0 for _, _, b, _ in alloc),
        allocation=tuple(alloc),
    )


def run_reserve_auction(
    bids: dict[int, float], reserve: float, slots: SlotProfile
) -> AuctionOutcome:
    """Second-price auction for the top slot only, with a reserve price.

    The winner pays the top discount times max(reserve, second-highest bid);
    no sale if no bid clears the reserve.
    """
    ranked = _ranked(bids)
    if not ranked or ranked[0][1] < reserve:
        return AuctionOutcome(kind="single-slot-reserve", welfare=0.0, revenue=0.0, sold=False)
    winner, top = ranked[0]
    second = ranked[1][1] if len(ranked) > 1 else 0.0
    d1 = slots.discounts[0]
    pay = d1 * max(reserve, second)
    return AuctionOutcome(
        kind="single-slot-reserve",
        welfare=d1 * top,
        revenue=pay,
        sold=True,
        allocation=((winner, 1, top, pay),),
    )


def run_posted(
    prices: dict[int, float], bids: dict[int, float], slots: SlotProfile
) -> AuctionOutcome:
    """Posted-price sale: network i accepts iff its bid clears its quoted price.

    Accepting networks are ranked by quoted price (ties toward the smaller id)
    and assigned slots top down; slot r earns its discount times the price.
    """
    accepted = [(i, prices[i]) for i in prices if bids.get(i, -math.inf) >= prices[i]]
    accepted.sort(key=lambda kv: (-kv[1], kv[0]))
    disc = slots.discounts
    alloc = []
    revenue = 0.0
    welfare = 0.0
    for r, (i, price) in enumerate(accepted[: slots.m]):
        revenue += disc[r] * price
        welfare += disc[r] * bids[i]
        alloc.append((i, r + 1, bids[i], disc[r] * price))
    return AuctionOutcome(
        kind="posted",
        welfare=welfare,
        revenue=revenue,
        sold=bool(alloc),
        allocation=tuple(alloc),
    )


def stop_process_expectation(pairs) -> float:
    """Exact expectation of the ordered stop process.

    pairs is an iterable of (w_i, u_i) with u_i = Pr[Y_i != 0] and
    w_i = E[Y_i]. The process inspects variables in non-increasing w/u order
    and keeps the first non-zero one; the expectation is
    sum_i prod_{i' before i} (1 - u_i') * w_i. Sorting happens here, so input
    order does not matter.
    """
    cleaned = []
    for w, u in pairs:
        if u < -1e-12 or u > 1 + 1e-12:
            raise ValueError(f"hit probability {u} outside [0, 1]")
        if w < -1e-12:
            raise ValueError(f"negative expectation {w}")
        u = min(max(u, 0.0), 1.0)
        if u == 0.0:
            if w > 1e-12:
                raise ValueError("zero hit probability with positive expectation")
            continue
        cleaned.append((w, u))
    cleaned.sort(key=lambda wu: -(wu[0] / wu[1]))
    total = 0.0
    alive = 1.0
    for w, u in cleaned:
        total += alive * w
        alive *= 1.0 - u
    return total


def lpmax_bound(dists) -> float:
    """Fractional upper bound on E[max bid] over a call-out set.

    Pools the positive-value mass of every distribution and water-fills one
    unit of probability from the highest value down.
    """
    pool = []
    for d in dists:
        vals, probs = d.support()
        for v, p in zip(vals, probs):
            if v > 0:
                pool.append((float(v), float(p)))
    pool.sort(key=lambda vp: -vp[0])
    room = 1.0
    total = 0.0
    for v, p in pool:
        if room <= 0:
            break
        take = min(p, room)
        total += v * take
        room -= take
    return total


def sales_probability(survivals, x) -> tuple[float, float, float]:
    """(exact, lower, upper) probability that at least one call-out clears.

    survivals are per-network clearing probabilities, x the call-out
    probabilities. exact = 1 - prod(1 - p_i x_i); with c = sum p_i x_i the
    bounds are 1 - exp(-c) <= exact <= c.
    """
    p = np.asarray(survivals, dtype=float)
    xv = np.asarray(x, dtype=float)
    if p.shape != xv.shape:
        raise ValueError("survivals and x must have matching shapes")
    if np.any((p < 0) | (p > 1 + 1e-12)) or np.any((xv < 0) | (xv > 1 + 1e-12)):
        raise ValueError("survivals and call-out probabilities must lie in [0, 1]")
    a = np.clip(p * xv, 0.0, 1.0)
    if np.any(a >= 1.0):
        exact = 1.0
    else:
        exact = float(-np.expm1(np.log1p(-a).sum()))
    c = float(a.sum())
    lower = float(-np.expm1(-c))
    return exact, lower, c
