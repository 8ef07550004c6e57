"""Shared helpers for the test suite.

The cvxpy builders below are deliberately naive, dense, and written against a
different modeling layer and solver than the production scipy/HiGHS path: they
are the independent cross-check for small LP instances. Keep them independent;
do not refactor them to share code with calloutsim.duals.
"""

from __future__ import annotations

import numpy as np

from calloutsim.bidmodel import BidDistribution, ImpressionType, SlotProfile


def point_mass(v: float) -> BidDistribution:
    return BidDistribution(np.array([float(v)]), np.array([1.0]))


def make_types(per_type_bids, q=None, min_prices=None, verticals=None):
    """per_type_bids: list over types of lists over networks of {value: prob}."""
    big_j = len(per_type_bids)
    if q is None:
        q = [1.0 / big_j] * big_j
    out = []
    for j, nets in enumerate(per_type_bids):
        bids = tuple(BidDistribution.from_mapping(m) for m in nets)
        out.append(
            ImpressionType(
                type_id=j,
                arrival_prob=q[j],
                bids=bids,
                vertical=verticals[j] if verticals else 0,
                min_price=min_prices[j] if min_prices else 0.0,
            )
        )
    return out


def cvxpy_callout_lp(types, rho, slots: SlotProfile, objective="value",
                     mode="value", eps_shrink=0.0) -> float:
    """Independent dense LP oracle; returns the optimal objective value."""
    import cvxpy as cp

    n = len(rho)
    m = slots.m
    disc = list(slots.discounts)
    q = [t.arrival_prob for t in types]
    total_q = sum(q)
    q = [x / total_q for x in q]

    constraints = []
    obj_terms = []
    global_lhs = [[] for _ in range(n)]
    for j, t in enumerate(types):
        eff = t.effective_bids(objective)
        slot_lhs = [[] for _ in range(m)]
        for i in range(n):
            vals = eff[i].values
            probs = eff[i].probs
            if mode == "value":
                x = cp.Variable(nonneg=True)
                constraints.append(x <= 1)
                global_lhs[i].append(q[j] * x)
                for k in range(len(vals)):
                    y = cp.Variable(m, nonneg=True)
                    constraints.append(cp.sum(y) <= probs[k] * x)
                    for l in range(m):
                        slot_lhs[l].append(y[l])
                        obj_terms.append(q[j] * vals[k] * disc[l] * y[l])
            else:
                x = cp.Variable(len(vals), nonneg=True)
                constraints.append(cp.sum(x) <= 1)
                global_lhs[i].append(q[j] * cp.sum(x))
                sf = np.cumsum(probs[::-1])[::-1]
                for k in range(len(vals)):
                    y = cp.Variable(m, nonneg=True)
                    constraints.append(cp.sum(y) <= sf[k] * x[k])
                    for l in range(m):
                        slot_lhs[l].append(y[l])
                        obj_terms.append(q[j] * vals[k] * disc[l] * y[l])
        for l in range(m):
            if slot_lhs[l]:
                constraints.append(cp.sum(cp.hstack(slot_lhs[l])) <= 1)
    for i in range(n):
        if global_lhs[i]:
            constraints.append(cp.sum(cp.hstack(global_lhs[i])) <= (1 - eps_shrink) * rho[i])
    objective_expr = cp.Maximize(cp.sum(cp.hstack(obj_terms)) if obj_terms else cp.Constant(0.0))
    prob = cp.Problem(objective_expr, constraints)
    prob.solve()
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"cvxpy oracle failed: {prob.status}")
    return float(prob.value)


def random_instance(rng: np.random.Generator, n_max=3, j_max=3, levels_max=4,
                    m_max=2, perturb=True):
    """Random tiny instance with grid-friendly arrival weights and budgets.

    Arrival probabilities are multiples of 1/20 and budgets multiples of 0.05
    so exhaustive grid policy search is exact on these instances.
    """
    from calloutsim.bidmodel import perturb_general_position

    n = int(rng.integers(1, n_max + 1))
    big_j = int(rng.integers(1, j_max + 1))
    m = int(rng.integers(1, m_max + 1))
    if m == 1:
        slots = SlotProfile((1.0,))
    else:
        slots = SlotProfile((1.0, float(rng.choice([0.25, 0.5, 0.75]))))
    # composition of 20 into big_j positive parts
    cuts = np.sort(rng.choice(np.arange(1, 20), size=big_j - 1, replace=False)) if big_j > 1 else np.array([], dtype=int)
    parts = np.diff(np.concatenate([[0], cuts, [20]]))
    q = parts / 20.0
    grid = np.round(np.arange(0.05, 1.0001, 0.05), 2)
    per_type = []
    for _ in range(big_j):
        nets = []
        for _ in range(n):
            k = int(rng.integers(1, levels_max + 1))
            vals = np.sort(rng.choice(grid, size=k, replace=False))
            probs = rng.dirichlet(np.ones(k))
            nets.append(dict(zip(vals.tolist(), probs.tolist())))
        per_type.append(nets)
    types = make_types(per_type, q=q.tolist())
    if perturb:
        types = [
            ImpressionType(
                t.type_id,
                t.arrival_prob,
                tuple(perturb_general_position(d, 1e-9, rng) for d in t.bids),
                t.vertical,
                t.min_price,
            )
            for t in types
        ]
    rho = rng.integers(1, 21, size=n) * 0.05
    return types, rho, slots
