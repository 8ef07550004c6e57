"""Decision rules: dual-based policies, ordering baselines, cut-off rule."""

import math
from collections import Counter

import numpy as np
import pytest

from calloutsim.bidmodel import BidDistribution, SlotProfile, generate_benchmark_distribution
from calloutsim.duals import DualSolution, build_sample_lp, solve_for_duals
from calloutsim.mechanisms import stop_process_expectation
from calloutsim.policies import (
    PolicyParams,
    UNLIMITED,
    adv_cutoff_decide,
    baseline_decide,
    build_type_table,
    choose_reserve,
    cutoff_from_delta,
    lp_gsp_decide,
    lp_post_decide,
    lp_val_decide,
    mhr_reserve,
)
from support import make_types, point_mass, random_instance

ONE_SLOT = SlotProfile((1.0,))


def hand_duals(lam, tau, mode="value"):
    """Dual state pinned by hand for closed-form rule checks."""
    return DualSolution(
        mode=mode,
        lam=np.asarray(lam, dtype=float),
        tau={0: np.asarray(tau, dtype=float)},
        objective=0.0,
        residual=0.0,
        eps_shrink=0.0,
        t_samples=1.0,
    )


def solve_duals(types, rho, slots, mode="value"):
    lp = build_sample_lp(
        types,
        {t.type_id: t.arrival_prob for t in types},
        objective="value",
        slots=slots,
        rho=np.asarray(rho, dtype=float),
        mode=mode,
        eps_shrink=0.0,
    )
    return solve_for_duals(lp)


class Reject:
    """Capacity view refusing a fixed set of networks."""

    def __init__(self, banned, remaining=None):
        self.banned = set(banned)
        self._rem = remaining or {}

    def can(self, i):
        return i not in self.banned

    def remaining(self, i):
        return self._rem.get(i, math.inf)


# ------------------------------------------------------------------ LP-Val


def test_lp_val_zero_multiplier_calls_positive_score():
    types = make_types([[{0.5: 0.8, 0.0: 0.2}]])
    duals = hand_duals([0.0], [0.0])
    dec = lp_val_decide(types[0], duals, ONE_SLOT)
    assert dec.callouts == (0,)
    assert dec.mechanism == "value-auction"


def test_lp_val_skips_distribution_below_envelope():
    # tau 0.6 puts the whole support outside every slot's surplus region
    types = make_types([[{0.5: 1.0}]])
    duals = hand_duals([0.1], [0.6])
    dec = lp_val_decide(types[0], duals, ONE_SLOT)
    assert dec.callouts == ()


def test_lp_val_two_slot_score():
    # slot(1.0) = 1 (surplus 0.4 vs 0.3), slot(0.5) = 2 (-0.1 vs 0.05):
    # score = 1.0*1*0.5 + 0.5*0.5*0.5 = 0.625 >= 0.3
    slots = SlotProfile((1.0, 0.5))
    types = make_types([[{1.0: 0.5, 0.5: 0.5}]])
    duals = hand_duals([0.3], [0.6, 0.2])
    tb = build_type_table(types[0], slots, value_duals=duals)
    assert tb.scores[0] == pytest.approx(0.625)
    assert lp_val_decide(types[0], duals, slots).callouts == (0,)


def test_lp_val_capacity_gating():
    types = make_types([[{1.0: 1.0}, {1.0: 1.0}]])
    duals = hand_duals([0.0, 0.0], [0.1])
    dec = lp_val_decide(types[0], duals, ONE_SLOT, capacity=Reject({0}))
    assert dec.callouts == (1,)


# ------------------------------------------------------------------ LP-GSP


def test_lp_gsp_empty_set_has_no_mechanism():
    types = make_types([[{0.5: 1.0}]])
    duals = hand_duals([0.9], [0.0])
    dec = lp_gsp_decide(types[0], duals, ONE_SLOT)
    assert dec.callouts == () and dec.mechanism == "none"


def test_lp_gsp_single_slot_always_runs_reserve_auction():
    # with one slot the envelope score can never reach three times the
    # slot-one tail unless both vanish
    types = make_types([[{1.0: 0.5, 2.0: 0.5}]])
    duals = hand_duals([0.0], [0.5])
    dec = lp_gsp_decide(types[0], duals, ONE_SLOT)
    assert dec.mechanism == "single-slot-reserve"
    assert dec.reserve > 0


def test_lp_gsp_regular_when_lower_slots_carry_value():
    # slot 1 priced out entirely: no mass at or above v1, so plain GSP
    slots = SlotProfile((1.0, 0.9, 0.8))
    types = make_types([[{1.0: 1.0}, {1.0: 1.0}]])
    duals = hand_duals([0.0, 0.0], [10.0, 0.01, 0.02])
    dec = lp_gsp_decide(types[0], duals, slots)
    assert dec.mechanism == "gsp-regular"
    assert dec.callouts == (0, 1)


def test_lp_gsp_callouts_match_lp_val_on_solved_instances():
    rng = np.random.default_rng(101)
    for _ in range(8):
        types, rho, slots = random_instance(rng)
        duals = solve_duals(types, rho, slots)
        for t in types:
            a = lp_val_decide(t, duals, slots)
            b = lp_gsp_decide(t, duals, slots)
            assert a.callouts == b.callouts


# ------------------------------------------------------------ reserve rule


def test_reserve_single_point_mass_reserves_at_the_mass():
    types = make_types([[{2.0: 1.0}]])
    duals = hand_duals([0.0], [0.5])  # v1 = 0.5
    assert choose_reserve(types[0], [0], duals, ONE_SLOT) == pytest.approx(2.0)


def test_reserve_falls_back_to_v1_when_monopoly_reserves_sit_below():
    # both networks have monopoly reserve 0.9 < v1 = 0.95
    d = {0.9: 0.5, 1.0: 0.5}
    types = make_types([[d, dict(d)]])
    duals = hand_duals([0.0, 0.0], [0.95])
    assert choose_reserve(types[0], [0, 1], duals, ONE_SLOT) == pytest.approx(0.95)


def test_reserve_requires_nonempty_set():
    types = make_types([[{1.0: 1.0}]])
    duals = hand_duals([0.0], [0.5])
    with pytest.raises(ValueError):
        choose_reserve(types[0], [], duals, ONE_SLOT)


def test_reserve_picks_heaviest_qualifying_network():
    # both reserves clear v1; the heavier tail wins
    types = make_types([[{3.0: 1.0}, {2.0: 1.0}]])
    duals = hand_duals([0.0, 0.0], [0.5])
    assert choose_reserve(types[0], [0, 1], duals, ONE_SLOT) == pytest.approx(3.0)


def test_mhr_reserve_delegates_to_grid_rule():
    assert mhr_reserve(BidDistribution((1.0, 2.0), (0.5, 0.5))) == 1.0
    assert mhr_reserve(BidDistribution((1.0, 10.0), (0.5, 0.5))) == 10.0
    assert mhr_reserve(point_mass(0.7)) == pytest.approx(0.7)


def test_psi_capped_at_seven_on_mhr_instances():
    # many MHR networks under a tight slot: the qualifying set stays small
    from calloutsim.bidmodel import ImpressionType

    rng = np.random.default_rng(2024)
    n = 12
    dists = []
    while len(dists) < n:
        d = generate_benchmark_distribution("gaussian", 1.0, rng)
        if d.is_mhr() and d.survival(1e-9) > 0.2:
            dists.append(d)
    jtype = ImpressionType(type_id=0, arrival_prob=1.0, bids=tuple(dists))
    duals = solve_duals([jtype], [1.0] * n, ONE_SLOT)
    dec = lp_gsp_decide(jtype, duals, ONE_SLOT)
    assert dec.psi_size <= 7


# ------------------------------------------------------------------ LP-Post


def test_lp_post_picks_revenue_maximizing_grid_price():
    types = make_types([[{1.0: 0.5, 2.0: 0.5}]])
    duals = hand_duals([0.1], [0.5], mode="posted")
    dec = lp_post_decide(types[0], duals, ONE_SLOT)
    # v=1: (1-0.5)*1.0 = 0.5; v=2: (2-0.5)*0.5 = 0.75
    assert dec.prices == {0: 2.0}
    assert dec.slot_intents == {0: 1}
    assert dec.mechanism == "posted"


def test_lp_post_skips_when_cutoff_dominates():
    types = make_types([[{1.0: 0.5, 2.0: 0.5}]])
    duals = hand_duals([0.8], [0.5], mode="posted")
    assert lp_post_decide(types[0], duals, ONE_SLOT).callouts == ()


def test_lp_post_point_mass_free_slot_quotes_the_mass():
    types = make_types([[{0.7: 1.0}]])
    duals = hand_duals([0.0], [0.0], mode="posted")
    dec = lp_post_decide(types[0], duals, ONE_SLOT)
    assert dec.prices == {0: 0.7}


def test_lp_post_one_price_per_network():
    rng = np.random.default_rng(55)
    for _ in range(6):
        types, rho, slots = random_instance(rng)
        duals = solve_duals(types, rho, slots, mode="posted")
        for t in types:
            dec = lp_post_decide(t, duals, slots)
            assert set(dec.prices) == set(dec.callouts)
            for i in dec.callouts:
                assert 1 <= dec.slot_intents[i] <= slots.m


# ---------------------------------------------------------------- baselines


def survivial_types(survivals):
    """One type; network i bids 1 w.p. survivals[i], else 0."""
    return make_types([[{1.0: s, 0.0: 1.0 - s} if s < 1 else {1.0: 1.0} for s in survivals]])


def test_max_prob_takes_top_k():
    types = survivial_types([0.9, 0.5, 0.1])
    dec = baseline_decide(
        "max-prob", PolicyParams("max-prob", k=2), types[0], ONE_SLOT,
        rng=np.random.default_rng(0),
    )
    assert dec.callouts == (0, 1)


def test_th_prob_randomizes_the_boundary_network():
    types = survivial_types([0.9, 0.5])
    params = PolicyParams("th-prob", threshold=1.0)
    rng = np.random.default_rng(31)
    hits = Counter()
    n = 4000
    for _ in range(n):
        dec = baseline_decide("th-prob", params, types[0], ONE_SLOT, rng=rng)
        assert 0 in dec.callouts
        hits[1 in dec.callouts] += 1
    # second network joins w.p. (1.0 - 0.9) / 0.5 = 0.2
    freq = hits[True] / n
    assert abs(freq - 0.2) < 3 * math.sqrt(0.2 * 0.8 / n)


def test_th_prefix_stops_exactly_on_threshold():
    types = survivial_types([0.6, 0.4, 0.3])
    params = PolicyParams("th-prob", threshold=1.0)
    rng = np.random.default_rng(1)
    for _ in range(50):
        dec = baseline_decide("th-prob", params, types[0], ONE_SLOT, rng=rng)
        # 0.6 + 0.4 hits 1.0 exactly: third network never joins
        assert dec.callouts == (0, 1)


def test_random_ordering_reproducible_and_covering():
    types = survivial_types([0.5, 0.5, 0.5])
    params = PolicyParams("random", k=2)
    a = baseline_decide("random", params, types[0], ONE_SLOT, rng=np.random.default_rng(9))
    b = baseline_decide("random", params, types[0], ONE_SLOT, rng=np.random.default_rng(9))
    assert a.callouts == b.callouts
    assert len(a.callouts) == 2


def test_max_exp_orders_by_expected_bid():
    types = make_types([[{2.0: 0.3, 0.0: 0.7}, {0.9: 1.0}, {5.0: 0.05, 0.0: 0.95}]])
    # expectations: 0.6, 0.9, 0.25
    dec = baseline_decide(
        "max-exp", PolicyParams("max-exp", k=1), types[0], ONE_SLOT,
        rng=np.random.default_rng(0),
    )
    assert dec.callouts == (1,)


def test_max_rem_band_prefers_spare_capacity():
    types = survivial_types([0.5, 0.5])
    cap = Reject(set(), remaining={0: 1.0, 1: 7.0})
    dec = baseline_decide(
        "max-rem-band", PolicyParams("max-rem-band", k=1), types[0], ONE_SLOT,
        capacity=cap, rng=np.random.default_rng(0),
    )
    assert dec.callouts == (1,)


def test_th_lp_orders_by_score_margin():
    slots = ONE_SLOT
    types = make_types([[{1.0: 0.9, 0.0: 0.1}, {1.0: 0.8, 0.0: 0.2}]])
    duals = hand_duals([0.85, 0.1], [0.0])  # margins 0.05 vs 0.7
    # threshold equals the leading network's survival, so it joins surely
    # and the walk stops there regardless of the rng
    dec = baseline_decide(
        "th-lp", PolicyParams("th-lp", threshold=0.8), types[0], slots,
        rng=np.random.default_rng(0), duals=duals,
    )
    assert dec.callouts == (1,)


def test_baseline_rejects_unknown_kind():
    with pytest.raises(ValueError):
        PolicyParams("best-effort")


# --------------------------------------------------------------- cut-off


def test_cutoff_grid_for_quarter_delta():
    rng = np.random.default_rng(3)
    seen = {cutoff_from_delta(0.25, rng) for _ in range(400)}
    assert seen == {0.125, 0.25, 0.5, 1.0}


def test_cutoff_rounds_non_power_down_with_warning():
    rng = np.random.default_rng(3)
    with pytest.warns(UserWarning):
        vals = {cutoff_from_delta(0.3, rng) for _ in range(200)}
    assert vals == {0.125, 0.25, 0.5, 1.0}


def test_adv_cutoff_band_and_cap():
    types = survivial_types([0.6, 0.55, 0.3, 0.9])
    dec = adv_cutoff_decide(0.25, types[0], ONE_SLOT, cutoff=0.5)
    # band [0.5, 1.0] admits networks 0, 1, 3; cap floor(2/0.5) = 4
    assert dec.callouts == (0, 1, 3)


def test_adv_cutoff_at_one_needs_certain_bidders():
    types = survivial_types([1.0, 0.99, 1.0, 1.0])
    dec = adv_cutoff_decide(0.25, types[0], ONE_SLOT, cutoff=1.0)
    assert dec.callouts == (0, 2)  # at most floor(2/1) = 2 networks


# ------------------------------------------------------------- invariants


def test_slot_lists_satisfy_stop_process_floor():
    rng = np.random.default_rng(77)
    checked = 0
    for _ in range(10):
        types, rho, slots = random_instance(rng)
        duals = solve_duals(types, rho, slots)
        for t in types:
            dec = lp_val_decide(t, duals, slots)
            for rows in dec.slot_lists:
                pairs = [(w, u) for _, w, u in rows]
                total_u = sum(u for _, u in pairs)
                if not pairs or total_u > 1 + 1e-9:
                    continue
                got = stop_process_expectation(pairs)
                floor = (1 - 1 / math.e) * sum(w for w, _ in pairs)
                assert got >= floor - 1e-9
                checked += 1
    assert checked > 0


def test_decision_validates_prices_inside_callouts():
    from calloutsim.policies import CallOutDecision

    with pytest.raises(ValueError):
        CallOutDecision(callouts=(1,), mechanism="posted", prices={2: 1.0})
    with pytest.raises(ValueError):
        CallOutDecision(callouts=(), mechanism="none", reserve=-0.5)
