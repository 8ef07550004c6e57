"""Per-impression call-out rules.

Three families:

* dual-based rules (value, GSP-with-reserve, posted-price) that turn learned
  multipliers into closed-form decisions,
* ordering baselines (random / remaining-bandwidth / survival / expected-bid,
  each in a top-k and a survival-mass-threshold variant),
* the randomized cut-off rule that buckets networks by survival probability.

Every rule returns a CallOutDecision. Capacity gating happens here, at
decision time: a decision never includes a network the active constraint
state would refuse.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bidmodel import BidDistribution, ImpressionType, SlotProfile
from .duals import DualSolution, slot_function

__all__ = [
    "CallOutDecision",
    "PolicyParams",
    "TypeTable",
    "build_type_table",
    "lp_val_decide",
    "lp_gsp_decide",
    "lp_post_decide",
    "choose_reserve",
    "mhr_reserve",
    "baseline_decide",
    "adv_cutoff_decide",
    "cutoff_from_delta",
    "UNLIMITED",
    "SET_KINDS",
    "THRESHOLD_KINDS",
    "BASELINE_KINDS",
]

# All inclusive ">= v1" tails evaluate the survival function a hair below the
# threshold: optimal multipliers pin v1 exactly onto support values, and the
# float noise from extracting them must not drop that boundary point.
V1_EDGE = 1e-9

SET_KINDS = ("random", "max-rem-band", "max-prob", "max-exp")
THRESHOLD_KINDS = ("th-random", "th-max-rem-band", "th-prob", "th-lp")
BASELINE_KINDS = SET_KINDS + THRESHOLD_KINDS
LP_KINDS = ("lp-val", "lp-gsp", "lp-post")
ALL_KINDS = LP_KINDS + BASELINE_KINDS + ("adv-cutoff",)

PSI_CAP = math.floor(math.e**2)  # 7


class _Unlimited:
    """Capacity view that never refuses."""

    def can(self, i: int) -> bool:
        return True

    def remaining(self, i: int) -> float:
        return math.inf


UNLIMITED = _Unlimited()


@dataclass(frozen=True)
class PolicyParams:
    kind: str
    k: int = 1
    threshold: float = 1.0
    delta: float = 0.25

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("set size k must be at least 1")
        if not self.threshold > 0:
            raise ValueError("survival-mass threshold must be positive")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")


@dataclass(frozen=True)
class CallOutDecision:
    # network ids to solicit, ascending
    callouts: tuple[int, ...]
    # value-auction | gsp-regular | single-slot-reserve | posted | none
    mechanism: str
    reserve: float = 0.0
    prices: dict[int, float] = field(default_factory=dict)
    slot_intents: dict[int, int] = field(default_factory=dict)
    # per slot: (network, w, u) triples in non-increasing w/u order, where w
    # and u are the value mass and probability mass the slot's envelope
    # region assigns to that network
    slot_lists: tuple[tuple[tuple[int, float, float], ...], ...] = ()
    psi_size: int = 0

    def __post_init__(self):
        if self.reserve < 0:
            raise ValueError("reserve must be non-negative")
        if not set(self.prices) <= set(self.callouts):
            raise ValueError("posted prices quoted to networks outside the call-out set")


@dataclass
class TypeTable:
    """Per-impression-type arrays a policy needs, precomputed once per run.

    Value-dual fields (scores, v1, tails, ...) are present when built with
    value-mode duals; posted fields when built with posted-mode duals.
    Survival and expected bid never need duals.
    """

    type_id: int
    n: int
    discounts: tuple[float, ...]
    survival: np.ndarray
    exp_bid: np.ndarray
    # value-dual fields
    lam: np.ndarray | None = None
    scores: np.ndarray | None = None
    v1: float = math.inf
    tails: np.ndarray | None = None
    mhr_res: np.ndarray | None = None
    # (w, u) per network per slot, before ordering
    slot_w: np.ndarray | None = None  # (n, M)
    slot_u: np.ndarray | None = None
    # posted-dual fields
    posted_lam: np.ndarray | None = None
    posted_price: np.ndarray | None = None  # nan when no profitable price
    posted_slot: np.ndarray | None = None


def build_type_table(
    jtype: ImpressionType,
    slots: SlotProfile,
    value_duals: DualSolution | None = None,
    posted_duals: DualSolution | None = None,
) -> TypeTable:
    n = len(jtype.bids)
    disc = slots.discounts
    m = slots.m
    survival = np.zeros(n)
    exp_bid = np.zeros(n)
    for i, d in enumerate(jtype.bids):
        vals, probs = d.support()
        survival[i] = probs[vals > 0].sum()
        exp_bid[i] = d.expectation()
    tb = TypeTable(
        type_id=jtype.type_id,
        n=n,
        discounts=disc,
        survival=survival,
        exp_bid=exp_bid,
    )

    if value_duals is not None:
        if value_duals.mode != "value":
            raise ValueError("value-mode duals required")
        sf = slot_function(value_duals, jtype.type_id, slots, vertical=jtype.vertical)
        tb.lam = np.asarray(value_duals.lam, dtype=float)
        tb.v1 = sf.v1
        scores = np.zeros(n)
        tails = np.zeros(n)
        mhr_res = np.zeros(n)
        slot_w = np.zeros((n, m))
        slot_u = np.zeros((n, m))
        for i, d in enumerate(jtype.bids):
            vals, probs = d.support()
            lv = sf.slot_vec(vals)
            keep = lv <= m
            if keep.any():
                scores[i] = float(
                    np.sum(vals[keep] * np.asarray(disc)[lv[keep] - 1] * probs[keep])
                )
                for ell in range(1, m + 1):
                    at = lv == ell
                    slot_w[i, ell - 1] = float(np.sum(vals[at] * probs[at]))
                    slot_u[i, ell - 1] = float(np.sum(probs[at]))
            if math.isfinite(tb.v1):
                above = vals >= tb.v1 - V1_EDGE
                tails[i] = float(np.sum(vals[above] * probs[above]))
            mhr_res[i] = d.mhr_reserve()
        tb.scores = scores
        tb.tails = tails
        tb.mhr_res = mhr_res
        tb.slot_w = slot_w
        tb.slot_u = slot_u

    if posted_duals is not None:
        if posted_duals.mode != "posted":
            raise ValueError("posted-mode duals required")
        sfp = slot_function(posted_duals, jtype.type_id, slots, vertical=jtype.vertical)
        tau = np.asarray(posted_duals.tau_for(jtype.type_id, jtype.vertical))
        tb.posted_lam = np.asarray(posted_duals.lam, dtype=float)
        price = np.full(n, np.nan)
        pslot = np.zeros(n, dtype=int)
        for i, d in enumerate(jtype.bids):
            vals, _ = d.support()
            lv = sfp.slot_vec(vals)
            keep = lv <= m
            if not keep.any():
                continue
            cand = vals[keep]
            cslot = lv[keep]
            gains = np.array(
                [
                    (v * disc[s - 1] - tau[s - 1]) * d.survival(v)
                    for v, s in zip(cand, cslot)
                ]
            )
            # LP optima pin marginal pairs at gain == lambda exactly; the
            # boundary is inclusive, like the value rule's score test.
            ok = gains >= tb.posted_lam[i] - 1e-12
            if not ok.any():
                continue
            best = int(np.flatnonzero(ok)[np.argmax(gains[ok])])
            price[i] = cand[best]
            pslot[i] = int(cslot[best])
        tb.posted_price = price
        tb.posted_slot = pslot

    return tb


def _slot_lists(tb: TypeTable, S) -> tuple:
    out = []
    for ell in range(len(tb.discounts)):
        rows = []
        for i in S:
            w = float(tb.slot_w[i, ell])
            u = float(tb.slot_u[i, ell])
            if u > 0:
                rows.append((i, w, u))
        rows.sort(key=lambda r: (-(r[1] / r[2]), r[0]))
        out.append(tuple(rows))
    return tuple(out)


def _value_callout_set(tb: TypeTable, capacity) -> list[int]:
    return [
        i
        for i in range(tb.n)
        if tb.scores[i] >= tb.lam[i] - 1e-12 and capacity.can(i)
    ]


def lp_val_from_table(tb: TypeTable, capacity=UNLIMITED, diagnostics=True) -> CallOutDecision:
    if tb.scores is None:
        raise ValueError("table lacks value-dual fields")
    S = _value_callout_set(tb, capacity)
    return CallOutDecision(
        callouts=tuple(S),
        mechanism="value-auction",
        slot_lists=_slot_lists(tb, S) if diagnostics else (),
    )


def lp_val_decide(jtype, duals, slots, capacity=UNLIMITED) -> CallOutDecision:
    """Call network i iff its envelope value score clears its multiplier.

    score_i sums v * discount(slot(v)) * p_i(v) over the values the slot
    function accepts; the comparison against lambda_i is inclusive.
    """
    return lp_val_from_table(build_type_table(jtype, slots, value_duals=duals), capacity)


def _psi(tb: TypeTable, S) -> list[int]:
    return [i for i in S if tb.mhr_res[i] >= tb.v1 - V1_EDGE]


def _choose_reserve(tb: TypeTable, S) -> tuple[float, int]:
    if not S:
        raise ValueError("reserve needs a non-empty call-out set")
    psi = _psi(tb, S)
    z = float(sum(tb.tails[i] for i in S))
    psi_mass = float(sum(tb.tails[i] for i in psi))
    frac = 7 * math.e**2 / (7 * math.e**2 + 1)
    if psi and psi_mass >= frac * z - 1e-12:
        best = max(psi, key=lambda i: (tb.tails[i], -i))
        return float(tb.mhr_res[best]), len(psi)
    return tb.v1, len(psi)


def choose_reserve(jtype, S, duals, slots) -> float:
    """Single reserve for the top-slot auction over call-out set S.

    Inspects the networks whose monopoly reserve sits at or above the
    slot-one threshold v1; if they carry nearly all of the value mass above
    v1, the reserve is the monopoly reserve of the heaviest of them,
    otherwise v1 itself.
    """
    tb = build_type_table(jtype, slots, value_duals=duals)
    reserve, _ = _choose_reserve(tb, list(S))
    return reserve


def mhr_reserve(dist: BidDistribution) -> float:
    """Smallest grid value v with 2 * v * P[V >= v] >= E[V; V >= v]."""
    return dist.mhr_reserve()


def lp_gsp_from_table(tb: TypeTable, capacity=UNLIMITED, diagnostics=True) -> CallOutDecision:
    if tb.scores is None:
        raise ValueError("table lacks value-dual fields")
    S = _value_callout_set(tb, capacity)
    if not S:
        return CallOutDecision(callouts=(), mechanism="none")
    lists = _slot_lists(tb, S) if diagnostics else ()
    lhs = float(sum(tb.scores[i] for i in S))
    rhs = 3.0 * tb.discounts[0] * float(sum(tb.tails[i] for i in S))
    psi_size = len(_psi(tb, S))
    if lhs >= rhs - 1e-12:
        return CallOutDecision(
            callouts=tuple(S), mechanism="gsp-regular", slot_lists=lists, psi_size=psi_size
        )
    reserve, psi_size = _choose_reserve(tb, S)
    return CallOutDecision(
        callouts=tuple(S),
        mechanism="single-slot-reserve",
        reserve=reserve,
        slot_lists=lists,
        psi_size=psi_size,
    )


def lp_gsp_decide(jtype, duals, slots, capacity=UNLIMITED) -> CallOutDecision:
    """Same call-out set as the value rule; the mechanism depends on where
    the envelope value sits. Plain GSP when the full envelope carries at
    least three times the slot-one tail value; otherwise a one-slot auction
    with a chosen reserve."""
    return lp_gsp_from_table(build_type_table(jtype, slots, value_duals=duals), capacity)


def lp_post_from_table(tb: TypeTable, capacity=UNLIMITED) -> CallOutDecision:
    if tb.posted_price is None:
        raise ValueError("table lacks posted-dual fields")
    S = []
    prices = {}
    intents = {}
    for i in range(tb.n):
        v = tb.posted_price[i]
        if not math.isnan(v) and capacity.can(i):
            S.append(i)
            prices[i] = float(v)
            intents[i] = int(tb.posted_slot[i])
    return CallOutDecision(
        callouts=tuple(S), mechanism="posted", prices=prices, slot_intents=intents
    )


def lp_post_decide(jtype, duals, slots, capacity=UNLIMITED) -> CallOutDecision:
    """Quote network i the single price maximizing (v * discount(f(v)) -
    tau(f(v))) * P[bid >= v]; skip i unless that maximum strictly beats
    lambda_i."""
    return lp_post_from_table(build_type_table(jtype, slots, posted_duals=duals), capacity)


def _ordering(kind: str, tb: TypeTable, avail, capacity, rng) -> list[int]:
    if kind.endswith("random"):
        return [int(i) for i in rng.permutation(avail)] if avail else []
    if kind.endswith("max-rem-band"):
        return sorted(avail, key=lambda i: (-capacity.remaining(i), i))
    if kind.endswith("prob"):
        return sorted(avail, key=lambda i: (-tb.survival[i], i))
    if kind == "max-exp":
        return sorted(avail, key=lambda i: (-tb.exp_bid[i], i))
    if kind == "th-lp":
        if tb.scores is None:
            raise ValueError("th-lp needs value-mode duals")
        return sorted(avail, key=lambda i: (-(tb.scores[i] - tb.lam[i]), i))
    raise ValueError(f"unknown baseline kind {kind!r}")


def _threshold_prefix(order, survival, threshold, rng) -> list[int]:
    S = []
    cum = 0.0
    for i in order:
        need = threshold - cum
        if need <= 1e-12:
            break
        s = float(survival[i])
        if s < need - 1e-12:
            S.append(i)
            cum += s
            continue
        # boundary member: join with the probability that puts the expected
        # survival mass exactly on the threshold
        if rng.random() < need / s:
            S.append(i)
        break
    return S


def baseline_from_table(
    kind: str, params: PolicyParams, tb: TypeTable, capacity, rng
) -> CallOutDecision:
    avail = [i for i in range(tb.n) if capacity.can(i)]
    if kind == "th-lp":
        # the learned multipliers stay a hard cut-off; the threshold only
        # rations mass among networks the dual rule would call anyway
        if tb.scores is None:
            raise ValueError("th-lp needs value-mode duals")
        avail = [i for i in avail if tb.scores[i] >= tb.lam[i] - 1e-12]
    order = _ordering(kind, tb, avail, capacity, rng)
    if kind in SET_KINDS:
        S = order[: params.k]
    elif kind in THRESHOLD_KINDS:
        S = _threshold_prefix(order, tb.survival, params.threshold, rng)
    else:
        raise ValueError(f"unknown baseline kind {kind!r}")
    return CallOutDecision(callouts=tuple(sorted(S)), mechanism="value-auction")


def baseline_decide(kind, params, jtype, slots, capacity=UNLIMITED, rng=None, duals=None) -> CallOutDecision:
    """Ordering baselines. Set variants keep the top k networks that have
    capacity; threshold variants walk the ordering until the summed survival
    probability reaches the threshold, taking the boundary network with the
    probability that makes the expected sum land exactly on it."""
    if rng is None:
        rng = np.random.default_rng()
    tb = build_type_table(jtype, slots, value_duals=duals)
    return baseline_from_table(kind, params, tb, capacity, rng)


def cutoff_from_delta(delta: float, rng) -> float:
    """Draw the run-level cut-off uniformly from {delta/2, delta, 2*delta, ..., 1}."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    exp = math.log2(delta)
    if abs(exp - round(exp)) > 1e-9:
        lowered = 2.0 ** math.floor(exp)
        warnings.warn(
            f"delta={delta} is not a power of two; using {lowered}", stacklevel=2
        )
        delta = lowered
    grid = []
    c = delta / 2
    while c <= 1.0 + 1e-12:
        grid.append(min(c, 1.0))
        c *= 2
    return float(grid[rng.integers(len(grid))])


def adv_cutoff_from_table(cutoff: float, tb: TypeTable, capacity) -> CallOutDecision:
    cap_n = math.floor(2.0 / cutoff + 1e-9)
    eligible = [
        i
        for i in range(tb.n)
        if cutoff - 1e-12 <= tb.survival[i] <= 2 * cutoff + 1e-12 and capacity.can(i)
    ]
    return CallOutDecision(callouts=tuple(eligible[:cap_n]), mechanism="value-auction")


def adv_cutoff_decide(delta, jtype, slots, capacity=UNLIMITED, rng=None, cutoff=None) -> CallOutDecision:
    """Random-cut-off rule: networks whose survival probability falls in
    [c, 2c] get the impression, at most floor(2/c) of them. The cut-off c is
    meant to be drawn once per run (pass it via cutoff=); drawing here each
    call is only a convenience for one-shot use."""
    if cutoff is None:
        if rng is None:
            rng = np.random.default_rng()
        cutoff = cutoff_from_delta(delta, rng)
    tb = build_type_table(jtype, slots)
    return adv_cutoff_from_table(cutoff, tb, capacity)
