"""Sampled linear programs and the dual prices that drive call-out rules.

Two LP flavors share one builder interface:

* value mode: decision variables are per-(network, type) call-out intensities
  x and per-(network, type, value, slot) service intensities y. Used for the
  total-value and GSP objectives.
* posted mode: call-outs carry a price, so x is indexed by (network, type,
  price) and service is capped by the price's acceptance probability.

Both yield a per-network bandwidth price lambda_i (dual of the global call-out
rate constraint) and per-(type, slot) capacity prices tau_{j,l} (duals of the
unit slot-capacity constraints). The closed-form exploitation rules in
`policies` consume exactly these two objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .bidmodel import BidDistribution, ImpressionType, SlotProfile

__all__ = [
    "SampledLP",
    "DualSolution",
    "SlotFunction",
    "build_sample_lp",
    "solve_for_duals",
    "slot_function",
    "v1_threshold",
    "validate_duals",
]


@dataclass
class SampledLP:
    """A built (not yet solved) call-out LP plus the index maps needed to read
    duals back out of the solver."""

    mode: str
    n: int
    slots: SlotProfile
    type_ids: list[int]
    verticals: list[int]
    q_hat: np.ndarray
    total_weight: float
    eps_shrink: float
    c: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    n_global_rows: int
    n_slot_rows: int
    x_cols: list  # value mode: (n, J) int array; posted mode: per (i, jj) col ranges
    supports: list  # per (i, jj): (values, masses) used to build the y block

    @property
    def n_cols(self) -> int:
        return self.c.size


@dataclass
class DualSolution:
    """Learned dual prices, the exploitation phase's entire state.

    tau maps sampled type ids to per-slot capacity prices. Types never seen
    during exploration fall back to the average tau of their vertical, then to
    the global average.
    """

    mode: str
    lam: np.ndarray
    tau: dict[int, np.ndarray]
    objective: float
    residual: float
    eps_shrink: float
    t_samples: float
    vertical_of: dict[int, int] = field(default_factory=dict)
    sample_x: np.ndarray | None = field(default=None, repr=False)
    type_ids: list[int] = field(default_factory=list)

    def tau_for(self, type_id: int, vertical: int | None = None) -> np.ndarray:
        got = self.tau.get(type_id)
        if got is not None:
            return got
        if vertical is None:
            vertical = self.vertical_of.get(type_id)
        same = [t for tid, t in self.tau.items() if self.vertical_of.get(tid) == vertical]
        if same:
            return np.mean(same, axis=0)
        if self.tau:
            return np.mean(list(self.tau.values()), axis=0)
        m = 1 if not self.tau else len(next(iter(self.tau.values())))
        return np.zeros(m)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "mode": self.mode,
            "lambda": self.lam.tolist(),
            "tau": {str(k): v.tolist() for k, v in self.tau.items()},
            "vertical_of": {str(k): v for k, v in self.vertical_of.items()},
            "objective": self.objective,
            "residual": self.residual,
            "eps_shrink": self.eps_shrink,
            "t_samples": self.t_samples,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DualSolution":
        if d.get("schema_version") != 1:
            raise ValueError(f"unsupported duals schema_version: {d.get('schema_version')!r}")
        return cls(
            mode=d["mode"],
            lam=np.asarray(d["lambda"], dtype=float),
            tau={int(k): np.asarray(v, dtype=float) for k, v in d["tau"].items()},
            objective=float(d["objective"]),
            residual=float(d["residual"]),
            eps_shrink=float(d["eps_shrink"]),
            t_samples=float(d["t_samples"]),
            vertical_of={int(k): int(v) for k, v in d.get("vertical_of", {}).items()},
        )


def _effective_support(dist: BidDistribution, mode: str):
    """Positive-value support plus the per-value cap used in the link rows.

    value mode caps service by the point mass p(v); posted mode caps by the
    acceptance probability Pr[V >= v].
    """
    vals, probs = dist.support()
    mask = vals > 0
    vals, probs = vals[mask], probs[mask]
    if mode == "posted":
        caps = np.cumsum(probs[::-1])[::-1]  # survival at each support value
    else:
        caps = probs
    return vals, caps


def build_sample_lp(
    impression_types: list[ImpressionType],
    sample_weights,
    *,
    objective: str,
    slots: SlotProfile,
    rho: np.ndarray,
    mode: str = "value",
    eps_shrink: float = 0.05,
) -> SampledLP:
    """Assemble the sampled call-out LP over the distinct sampled types.

    sample_weights is a mapping or array giving a non-negative weight per
    type id (sample counts during exploration, exact arrival probabilities
    when computing the offline bound). Types with zero weight are dropped;
    the rest are normalized to empirical probabilities.
    """
    if mode not in ("value", "posted"):
        raise ValueError(f"unknown LP mode: {mode!r}")
    rho = np.asarray(rho, dtype=float)
    n = rho.size
    if isinstance(sample_weights, dict):
        items = sorted((tid, w) for tid, w in sample_weights.items() if w > 0)
    else:
        weights = np.asarray(sample_weights, dtype=float)
        items = [(tid, w) for tid, w in enumerate(weights) if w > 0]
    if not items:
        raise ValueError("no sampled impression types")
    type_ids = [tid for tid, _ in items]
    counts = np.array([w for _, w in items], dtype=float)
    total = counts.sum()
    q_hat = counts / total
    types = [impression_types[tid] for tid in type_ids]
    verticals = [t.vertical for t in types]
    m = slots.m
    disc = slots.as_array()
    big_j = len(types)

    supports = []
    eff = [t.effective_bids(objective) for t in types]
    for i in range(n):
        for jj in range(big_j):
            supports.append(_effective_support(eff[jj][i], mode))

    # column layout: all x first, then y grouped by (i, type, value, slot)
    if mode == "value":
        n_x = n * big_j
        x_cols = np.arange(n_x).reshape(n, big_j)
    else:
        x_cols = []
        off = 0
        for i in range(n):
            row = []
            for jj in range(big_j):
                k = supports[i * big_j + jj][0].size
                row.append((off, off + k))
                off += k
            x_cols.append(row)
        n_x = off
    y_start = np.empty((n, big_j), dtype=int)
    off = n_x
    for i in range(n):
        for jj in range(big_j):
            y_start[i, jj] = off
            off += supports[i * big_j + jj][0].size * m
    n_cols = off

    c = np.zeros(n_cols)
    for i in range(n):
        for jj in range(big_j):
            vals, _ = supports[i * big_j + jj]
            if vals.size == 0:
                continue
            block = (q_hat[jj] * vals)[:, None] * disc[None, :]
            c[y_start[i, jj] : y_start[i, jj] + vals.size * m] = -block.ravel()

    rows, cols, data = [], [], []
    b = []
    r = 0
    # global bandwidth rows, one per network
    for i in range(n):
        for jj in range(big_j):
            if mode == "value":
                rows.append(r)
                cols.append(x_cols[i, jj])
                data.append(q_hat[jj])
            else:
                lo, hi = x_cols[i][jj]
                for cidx in range(lo, hi):
                    rows.append(r)
                    cols.append(cidx)
                    data.append(q_hat[jj])
        b.append((1.0 - eps_shrink) * rho[i])
        r += 1
    n_global = r
    # unit capacity rows, one per (type, slot)
    for jj in range(big_j):
        for l in range(m):
            for i in range(n):
                vals, _ = supports[i * big_j + jj]
                for k in range(vals.size):
                    rows.append(r)
                    cols.append(y_start[i, jj] + k * m + l)
                    data.append(1.0)
            b.append(1.0)
            r += 1
    n_slot = big_j * m
    # posted mode: at most one price per (network, type)
    if mode == "posted":
        for i in range(n):
            for jj in range(big_j):
                lo, hi = x_cols[i][jj]
                if hi == lo:
                    continue
                for cidx in range(lo, hi):
                    rows.append(r)
                    cols.append(cidx)
                    data.append(1.0)
                b.append(1.0)
                r += 1
    # link rows: service below the per-value cap times the call-out variable
    for i in range(n):
        for jj in range(big_j):
            vals, caps = supports[i * big_j + jj]
            for k in range(vals.size):
                for l in range(m):
                    rows.append(r)
                    cols.append(y_start[i, jj] + k * m + l)
                    data.append(1.0)
                rows.append(r)
                if mode == "value":
                    cols.append(x_cols[i, jj])
                else:
                    cols.append(x_cols[i][jj][0] + k)
                data.append(-caps[k])
                b.append(0.0)
                r += 1

    a_ub = sp.csr_matrix(
        (np.asarray(data), (np.asarray(rows), np.asarray(cols))), shape=(r, n_cols)
    )
    lb = np.zeros(n_cols)
    ub = np.full(n_cols, np.inf)
    if mode == "value":
        ub[:n_x] = 1.0

    return SampledLP(
        mode=mode,
        n=n,
        slots=slots,
        type_ids=type_ids,
        verticals=verticals,
        q_hat=q_hat,
        total_weight=float(total),
        eps_shrink=eps_shrink,
        c=c,
        a_ub=a_ub,
        b_ub=np.asarray(b),
        lb=lb,
        ub=ub,
        n_global_rows=n_global,
        n_slot_rows=n_slot,
        x_cols=x_cols,
        supports=supports,
    )


def solve_for_duals(lp: SampledLP) -> DualSolution:
    """Solve the sampled LP to optimality and extract scaled dual prices.

    Slot duals of the weighted LP carry a q_hat_j factor; they are divided out
    so tau is in per-impression units. Slots with equal discounts have their
    duals averaged (the dual optimum is closed under permuting interchangeable
    slot constraints, so the average is still optimal and restores the
    equal-discount structural property deterministically).
    """
    res = linprog(
        lp.c,
        A_ub=lp.a_ub,
        b_ub=lp.b_ub,
        bounds=np.stack([lp.lb, lp.ub], axis=1),
        method="highs",
    )
    if res.status == 2:
        # presolve can misreport infeasibility when link rows carry
        # micro-probability coefficients (~1e-11); the model itself always
        # admits the zero point, so retry without it.
        res = linprog(
            lp.c,
            A_ub=lp.a_ub,
            b_ub=lp.b_ub,
            bounds=np.stack([lp.lb, lp.ub], axis=1),
            method="highs",
            options={"presolve": False},
        )
    if res.status != 0:
        raise RuntimeError(f"LP solve failed (status {res.status}): {res.message}")
    primal = -res.fun
    row_duals = -np.asarray(res.ineqlin.marginals)
    upper_duals = -np.asarray(res.upper.marginals)
    finite_ub = np.isfinite(lp.ub)
    dual_obj = float(lp.b_ub @ row_duals) + float(
        lp.ub[finite_ub] @ upper_duals[finite_ub]
    )
    residual = abs(primal - dual_obj) / max(1.0, abs(primal))

    lam = np.clip(row_duals[: lp.n_global_rows], 0.0, None)
    m = lp.slots.m
    disc = lp.slots.as_array()
    tau_full = np.clip(
        row_duals[lp.n_global_rows : lp.n_global_rows + lp.n_slot_rows], 0.0, None
    ).reshape(len(lp.type_ids), m)
    # average within equal-discount slot groups
    start = 0
    for end in range(1, m + 1):
        if end == m or disc[end] != disc[start]:
            if end - start > 1:
                tau_full[:, start:end] = tau_full[:, start:end].mean(axis=1, keepdims=True)
            start = end
    tau = {
        tid: tau_full[jj] / lp.q_hat[jj] for jj, tid in enumerate(lp.type_ids)
    }

    if lp.mode == "value":
        sample_x = res.x[: lp.n * len(lp.type_ids)].reshape(lp.n, len(lp.type_ids)).copy()
    else:
        sample_x = None

    return DualSolution(
        mode=lp.mode,
        lam=lam,
        tau=tau,
        objective=primal,
        residual=residual,
        eps_shrink=lp.eps_shrink,
        t_samples=lp.total_weight,
        vertical_of={tid: v for tid, v in zip(lp.type_ids, lp.verticals)},
        sample_x=sample_x,
        type_ids=list(lp.type_ids),
    )


@dataclass(frozen=True)
class SlotFunction:
    """Upper envelope of the per-slot surplus lines v * disc_l - tau_l.

    slot(v) returns the 1-based index of the winning slot, or m + 1 when no
    slot has strictly positive surplus at v. Ties go to the smaller index.
    """

    discounts: np.ndarray
    tau: np.ndarray

    def slot(self, v: float) -> int:
        surplus = self.discounts * v - self.tau
        best = int(np.argmax(surplus))
        if surplus[best] > 0.0:
            return best + 1
        return self.discounts.size + 1

    def slot_vec(self, values: np.ndarray) -> np.ndarray:
        surplus = values[:, None] * self.discounts[None, :] - self.tau[None, :]
        best = np.argmax(surplus, axis=1)
        out = best + 1
        out[surplus[np.arange(values.size), best] <= 0.0] = self.discounts.size + 1
        return out

    def envelope(self, v: float) -> float:
        """max(0, max_l v * disc_l - tau_l)."""
        return max(0.0, float(np.max(self.discounts * v - self.tau)))

    def envelope_vec(self, values: np.ndarray) -> np.ndarray:
        surplus = values[:, None] * self.discounts[None, :] - self.tau[None, :]
        return np.maximum(0.0, surplus.max(axis=1))

    @property
    def v1(self) -> float:
        """Smallest bid at which the top slot wins the envelope.

        Maximum of the crossover points between slot 1 and every lower-discount
        slot, including a virtual zero-discount, zero-price slot; +inf when the
        top discount is zero.
        """
        d1, t1 = float(self.discounts[0]), float(self.tau[0])
        if d1 <= 0.0:
            return math.inf
        best = t1 / d1  # crossover with the virtual slot m+1
        for dl, tl in zip(self.discounts[1:], self.tau[1:]):
            if dl < d1:
                best = max(best, (t1 - tl) / (d1 - dl))
        return best


def slot_function(duals: DualSolution, type_id: int, slots: SlotProfile,
                  vertical: int | None = None) -> SlotFunction:
    tau = np.asarray(duals.tau_for(type_id, vertical), dtype=float)
    return SlotFunction(slots.as_array(), tau)


def v1_threshold(duals: DualSolution, type_id: int, slots: SlotProfile,
                 vertical: int | None = None) -> float:
    return slot_function(duals, type_id, slots, vertical).v1


def validate_duals(duals: DualSolution, slots: SlotProfile, rtol: float = 1e-9) -> list[str]:
    """Structural checks on an extracted dual solution.

    Returns a list of human-readable violation strings; empty means valid.
    Checked: non-negativity, tau/discount ratio monotone non-increasing over
    slots, equal discounts carrying equal tau, zero-discount slots carrying
    zero tau, and a closed strong-duality certificate.
    """
    problems = []
    disc = slots.as_array()
    if np.any(duals.lam < -1e-12):
        problems.append("negative-lambda")
    if duals.residual > 1e-6:
        problems.append(f"strong-duality-residual:{duals.residual:.3e}")
    for tid, tau in duals.tau.items():
        if tau.size != disc.size:
            problems.append(f"tau-length-mismatch:type={tid}")
            continue
        if np.any(tau < -1e-12):
            problems.append(f"negative-tau:type={tid}")
        prev = None
        for l in range(disc.size):
            if disc[l] <= 0.0:
                if tau[l] > 1e-9:
                    problems.append(f"positive-tau-on-zero-discount:type={tid},slot={l + 1}")
                continue
            ratio = tau[l] / disc[l]
            if prev is not None and ratio > prev + rtol * max(1.0, abs(prev)):
                problems.append(f"tau-ratio-not-monotone:type={tid},slot={l + 1}")
            prev = ratio
        for l in range(1, disc.size):
            if disc[l] == disc[l - 1] and not math.isclose(
                tau[l], tau[l - 1], rel_tol=1e-9, abs_tol=1e-9
            ):
                problems.append(f"equal-discount-tau-differs:type={tid},slot={l + 1}")
    return problems
