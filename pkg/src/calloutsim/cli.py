"""Command-line front end.

Subcommands: generate (write a benchmark scenario file), learn (solve the
sampled LP and store its duals), simulate (two-phase run or exploit a stored
duals file), sweep (policy families over parameter grids), validate (invariant
suites). Every flag can be preset through an environment variable with the
CALLOUTSIM_ prefix (flag --t-explore reads CALLOUTSIM_T_EXPLORE and so on);
explicit flags win over the environment.

Exit codes: 0 success, 1 validation or invariant failure, 2 malformed
configuration (the diagnostic names the offending field).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import duals as duals_mod
from .bidmodel import generate_benchmark_distribution, perturb_general_position
from .constraints import ArrivalProcess, RateLedger, TokenBucket, warmup_skip
from .duals import DualSolution, build_sample_lp, validate_duals
from .harness import (
    SET_GRID,
    THRESHOLD_GRID,
    Scenario,
    compute_opt_ub,
    effective_types,
    generate_benchmark,
    peak_by_kind,
    run_two_phase,
    run_with_duals,
    sweep,
    write_rows_csv,
    write_summary_csv,
)
from .mechanisms import (
    run_gsp,
    run_posted,
    run_reserve_auction,
    sales_probability,
    stop_process_expectation,
)
from .policies import (
    SET_KINDS,
    THRESHOLD_KINDS,
    UNLIMITED,
    PolicyParams,
    baseline_from_table,
    build_type_table,
    lp_gsp_from_table,
    lp_post_from_table,
    lp_val_from_table,
)

ENV_PREFIX = "CALLOUTSIM_"

LP_KINDS = ("lp-val", "lp-gsp", "lp-post")


class ConfigError(Exception):
    """Bad configuration; `field` names the offending flag or file field."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Resolved per-command settings, checked once before any work starts."""

    command: str
    scenario: str | None = None
    policy: PolicyParams | None = None
    t_explore: int = 500
    m_exploit: int = 2000
    replications: int = 10
    out: str | None = None
    seed: int = 0

    # diagnostics name the flag the user typed, not the internal field
    _FLAG = {"t_explore": "samples", "m_exploit": "impressions",
             "replications": "reps"}

    def validate(self) -> None:
        for name in ("t_explore", "m_exploit", "replications"):
            if getattr(self, name) < 1:
                flag = self._FLAG[name]
                raise ConfigError(flag, f"{flag} must be a positive integer")
        if self.command in ("generate", "learn") and not self.out:
            raise ConfigError("out", "output path must not be empty")
        if self.command in ("learn", "simulate", "sweep") and not self.scenario:
            raise ConfigError("scenario", "scenario path must not be empty")


# ------------------------------------------------------------------ parsing


def parse_policy(text: str) -> PolicyParams:
    kind, _, rest = text.partition(":")
    kv: dict[str, str] = {}
    if rest:
        for part in rest.split(","):
            key, eq, val = part.partition("=")
            if not eq:
                raise ConfigError("policy", f"expected key=value, got {part!r}")
            kv[key.strip()] = val.strip()

    def take_float(key, default):
        raw = kv.pop(key, None)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError("policy", f"{key} must be numeric, got {raw!r}")

    if kind in SET_KINDS:
        k = int(take_float("k", 2))
        if k < 1:
            raise ConfigError("policy", f"k must be >= 1, got {k}")
        params = PolicyParams(kind, k=k)
    elif kind in THRESHOLD_KINDS:
        t = take_float("T", take_float("threshold", 1.0))
        if not t > 0:
            raise ConfigError("policy", f"threshold must be positive, got {t}")
        params = PolicyParams(kind, threshold=t)
    elif kind == "adv-cutoff":
        delta = take_float("delta", 0.25)
        if not 0 < delta <= 1:
            raise ConfigError("policy", f"delta must be in (0, 1], got {delta}")
        params = PolicyParams(kind, delta=delta)
    elif kind in LP_KINDS:
        params = PolicyParams(kind)
    else:
        raise ConfigError("policy", f"unknown policy kind {kind!r}")
    if kv:
        raise ConfigError("policy", f"unexpected parameter(s): {', '.join(sorted(kv))}")
    return params


def _load_scenario(path: str) -> Scenario:
    try:
        return Scenario.load(path)
    except FileNotFoundError:
        raise ConfigError("scenario", f"file not found: {path}")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ConfigError("scenario", f"{path}: {e}")


def _load_duals(path: str) -> DualSolution:
    try:
        with open(path) as f:
            return DualSolution.from_json_dict(json.load(f))
    except FileNotFoundError:
        raise ConfigError("duals", f"file not found: {path}")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ConfigError("duals", f"{path}: {e}")


def _parse_slots(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError("slots", f"expected comma-separated numbers, got {text!r}")
    if not vals or any(v < 0 for v in vals):
        raise ConfigError("slots", "slot discounts must be non-negative")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="calloutsim",
        description="selective call-out simulator: scenarios, duals, policies, sweeps",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic benchmark scenario")
    g.add_argument("--kind", choices=("gaussian", "pareto"), default="gaussian")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--objective", choices=("sales", "value", "gsp", "posted"),
                   default="sales")
    g.add_argument("--networks", type=int, default=32)
    g.add_argument("--verticals", type=int, default=10)
    g.add_argument("--levels", type=int, default=20,
                   help="minimum-price levels per vertical")
    g.add_argument("--min-price-lo", type=float, default=0.2)
    g.add_argument("--min-price-hi", type=float, default=1.0)
    g.add_argument("--bucket-capacity", type=float, default=5.0)
    g.add_argument("--constraint",
                   choices=("token-bucket", "time-average", "converted"),
                   default="token-bucket")
    g.add_argument("--slots", default="1.0", help="comma-separated slot discounts")
    g.add_argument("--no-perturb", action="store_true",
                   help="skip the general-position mass jitter (keeps grids MHR)")

    l = sub.add_parser("learn", help="solve the sampled LP, store the duals")
    l.add_argument("--scenario", required=True)
    l.add_argument("--samples", type=int, default=500)
    l.add_argument("--mode", choices=("value", "posted"), default="value")
    l.add_argument("--eps-shrink", type=float, default=0.05)
    l.add_argument("--seed", type=int, default=0)
    l.add_argument("--out", required=True)

    s = sub.add_parser("simulate", help="run one policy on a scenario")
    w = sub.add_parser("sweep", help="run a policy family over its grid")
    for sp in (s, w):
        sp.add_argument("--scenario", required=True)
        sp.add_argument("--impressions", type=int, default=2000)
        sp.add_argument("--reps", type=int, default=10)
        sp.add_argument("--samples", type=int, default=500,
                        help="exploration samples per replication")
        sp.add_argument("--eps-shrink", type=float, default=0.05)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--constraint",
                        choices=("token-bucket", "time-average", "converted"),
                        default=None, help="override the scenario's mode")
        sp.add_argument("--noise-std", type=float, default=None)
        sp.add_argument("--warmup", action="store_true")
        sp.add_argument("--workers", type=int, default=os.cpu_count(),
                        help="replication pool size")
        sp.add_argument("--out", default=None, help="per-replication rows CSV")
        sp.add_argument("--summary-out", default=None, help="per-policy summary CSV")
    s.add_argument("--policy", default="lp-val",
                   help="kind[:key=value,...], e.g. max-prob:k=4 or th-lp:T=1.5")
    s.add_argument("--duals", default=None,
                   help="stored duals file; skips exploration when given")
    w.add_argument("--family", choices=("set", "threshold", "lp", "cutoff", "all"),
                   default="all")
    w.add_argument("--grid", default="default",
                   help='"default" or comma-separated values (set/threshold only)')
    w.add_argument("--delta", type=float, default=0.25)
    w.add_argument("--metric", choices=("sales", "value", "revenue"), default="sales")

    v = sub.add_parser("validate", help="run invariant suites")
    v.add_argument("--suite", default=None,
                   help=f"one of: {', '.join(SUITES)} (default: all)")
    v.add_argument("--seed", type=int, default=0)

    return p


def _apply_env(parser: argparse.ArgumentParser) -> None:
    """Fold CALLOUTSIM_* variables into option defaults, depth-first."""
    worklist = [parser]
    while worklist:
        cur = worklist.pop()
        for action in cur._actions:
            if isinstance(action, argparse._SubParsersAction):
                worklist.extend(action.choices.values())
                continue
            if not action.option_strings or action.dest == "help":
                continue
            raw = os.environ.get(ENV_PREFIX + action.dest.upper())
            if raw is None:
                continue
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    value = action.type(raw)
                except (TypeError, ValueError):
                    raise ConfigError(
                        action.dest, f"environment override {raw!r} is not valid"
                    )
            else:
                value = raw
            if action.choices is not None and value not in action.choices:
                raise ConfigError(
                    action.dest,
                    f"environment override {raw!r} not in {tuple(action.choices)}",
                )
            action.default = value
            action.required = False


# ----------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    cfg = RunConfig("generate", out=args.out, seed=args.seed)
    cfg.validate()
    for name in ("networks", "verticals", "levels"):
        if getattr(args, name) < 1:
            raise ConfigError(name, f"{name} must be a positive integer")
    if args.min_price_hi < args.min_price_lo:
        raise ConfigError("min_price_hi", "price range is inverted")
    sc = generate_benchmark(
        args.seed,
        kind=args.kind,
        objective=args.objective,
        min_price_range=(args.min_price_lo, args.min_price_hi),
        n_networks=args.networks,
        n_verticals=args.verticals,
        levels_per_vertical=args.levels,
        bucket_capacity=args.bucket_capacity,
        slots=_parse_slots(args.slots),
        constraint_mode=args.constraint,
        perturb=not args.no_perturb,
    )
    sc.save(args.out)
    print(f"wrote {args.out}: {sc.name}, {len(sc.types)} types, {sc.n} networks")
    return 0


def cmd_learn(args) -> int:
    cfg = RunConfig("learn", scenario=args.scenario, t_explore=args.samples,
                    out=args.out, seed=args.seed)
    cfg.validate()
    sc = _load_scenario(args.scenario)
    eff = effective_types(sc)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    counts = rng.multinomial(args.samples, sc.arrival_probs())
    weights = {t.type_id: float(c) for t, c in zip(eff, counts) if c > 0}
    lp = build_sample_lp(
        eff, weights, objective="value", slots=sc.slots, rho=sc.rho,
        mode=args.mode, eps_shrink=args.eps_shrink,
    )
    sol = duals_mod.solve_for_duals(lp)
    problems = validate_duals(sol, sc.slots)
    with open(args.out, "w") as f:
        json.dump(sol.to_json_dict(), f, indent=1, sort_keys=True)
        f.write("\n")
    nonzero = int(np.sum(sol.lam > 1e-12))
    print(f"objective {sol.objective:.9g}  residual {sol.residual:.3e}")
    print(f"lambda: {nonzero}/{sol.lam.size} nonzero, max {sol.lam.max():.9g}")
    if problems:
        for pr in problems:
            print(f"FAIL {pr}")
        return 1
    print("tau-monotonicity: ok")
    print(f"wrote {args.out}")
    return 0


def _print_report(rep, mark="") -> None:
    rates = rep.callout_rates()
    print(
        f"{rep.param_label():<22} value {rep.value_mean:.4f}+-{rep.value_ci:.4f}  "
        f"revenue {rep.revenue_mean:.4f}+-{rep.revenue_ci:.4f}  "
        f"sales {rep.sales_mean:.4f}+-{rep.sales_ci:.4f}  "
        f"rate {rates.mean():.4f}  psi {rep.psi_max}{mark}"
    )


def cmd_simulate(args) -> int:
    cfg = RunConfig("simulate", scenario=args.scenario, t_explore=args.samples,
                    m_exploit=args.impressions, replications=args.reps,
                    out=args.out, seed=args.seed)
    cfg.validate()
    sc = _load_scenario(args.scenario)
    params = parse_policy(args.policy)
    cfg = dataclasses.replace(cfg, policy=params)
    if args.duals is not None:
        sol = _load_duals(args.duals)
        rep = run_with_duals(
            sc, params, sol, m_exploit=args.impressions, replications=args.reps,
            seed=args.seed, constraint=args.constraint, warmup=args.warmup,
        )
    else:
        rep = run_two_phase(
            sc, params, t_explore=args.samples, m_exploit=args.impressions,
            replications=args.reps, seed=args.seed, constraint=args.constraint,
            eps_shrink=args.eps_shrink, noise_std=args.noise_std,
            warmup=args.warmup, workers=args.workers,
        )
    rep.opt_ub = compute_opt_ub(sc)
    try:
        rep.check_constraint_respected()
    except AssertionError as e:
        print(f"FAIL constraint-respected: {e}")
        return 1
    _print_report(rep)
    print(f"opt_ub {rep.opt_ub:.9g}  dual_residual {rep.max_dual_residual:.3e}")
    if args.out:
        write_rows_csv(args.out, [rep])
        print(f"wrote {args.out}")
    if args.summary_out:
        write_summary_csv(args.summary_out, [rep])
        print(f"wrote {args.summary_out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = RunConfig("sweep", scenario=args.scenario, t_explore=args.samples,
                    m_exploit=args.impressions, replications=args.reps,
                    out=args.out, seed=args.seed)
    cfg.validate()
    sc = _load_scenario(args.scenario)
    k_grid, threshold_grid = SET_GRID, THRESHOLD_GRID
    if args.grid != "default":
        try:
            vals = [float(x) for x in args.grid.split(",")]
        except ValueError:
            raise ConfigError("grid", f"expected numbers, got {args.grid!r}")
        if args.family == "set":
            if any(v != int(v) or v < 1 for v in vals):
                raise ConfigError("grid", "set-family grid must be positive integers")
            k_grid = tuple(int(v) for v in vals)
        elif args.family == "threshold":
            if any(v <= 0 for v in vals):
                raise ConfigError("grid", "thresholds must be positive")
            threshold_grid = tuple(vals)
        else:
            raise ConfigError("grid", "custom grids apply to set or threshold families")
    reports = sweep(
        sc, args.family, k_grid=k_grid, threshold_grid=threshold_grid,
        delta=args.delta, t_explore=args.samples, m_exploit=args.impressions,
        replications=args.reps, seed=args.seed, constraint=args.constraint,
        noise_std=args.noise_std, warmup=args.warmup, workers=args.workers,
    )
    ub = compute_opt_ub(sc)
    peaks = {id(r) for r in peak_by_kind(reports, args.metric).values()}
    for rep in reports:
        rep.opt_ub = ub
        try:
            rep.check_constraint_respected()
        except AssertionError as e:
            print(f"FAIL constraint-respected: {e}")
            return 1
        _print_report(rep, mark="  *" if id(rep) in peaks else "")
    print(f"opt_ub {ub:.9g}")
    if args.out:
        write_rows_csv(args.out, reports)
        print(f"wrote {args.out}")
    if args.summary_out:
        write_summary_csv(args.summary_out, reports, args.metric)
        print(f"wrote {args.summary_out}")
    return 0


# ------------------------------------------------------------------- suites


def _tiny_scenario(seed: int, **kw) -> Scenario:
    base = dict(n_networks=3, n_verticals=2, levels_per_vertical=2)
    base.update(kw)
    return generate_benchmark(seed, **base)


def _suite_bid_model(seed: int) -> list[str]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    problems = []
    for k in range(20):
        kind = "gaussian" if k % 2 == 0 else "pareto"
        d = generate_benchmark_distribution(kind, 1.0, rng)
        vals, probs = d.support()
        if abs(probs.sum() - 1.0) > 1e-9:
            problems.append(f"mass-not-normalized:{kind}:{k}")
        if np.any(np.diff(vals) <= 0):
            problems.append(f"support-not-sorted:{kind}:{k}")
        sf = [d.survival(v) for v in vals]
        if np.any(np.diff(sf) > 1e-12):
            problems.append(f"survival-not-monotone:{kind}:{k}")
        if kind == "gaussian" and not d.is_mhr():
            problems.append(f"gaussian-grid-not-mhr:{k}")
        p = perturb_general_position(d, 1e-9, rng)
        if abs(p.support()[1].sum() - 1.0) > 1e-6:
            problems.append(f"perturb-mass-shift:{kind}:{k}")
    return problems


def _solve_small(seed: int, mode: str):
    # two slots so the tau/discount monotonicity check has something to bite on
    sc = _tiny_scenario(seed, slots=(1.0, 0.5))
    eff = effective_types(sc)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    counts = rng.multinomial(300, sc.arrival_probs())
    weights = {t.type_id: float(c) for t, c in zip(eff, counts) if c > 0}
    lp = build_sample_lp(eff, weights, objective="value", slots=sc.slots,
                         rho=sc.rho, mode=mode, eps_shrink=0.05)
    return sc, eff, duals_mod.solve_for_duals(lp)


def _suite_duals(seed: int) -> list[str]:
    problems = []
    for s in range(4):
        sc, _, sol = _solve_small(seed + s, "value")
        problems += validate_duals(sol, sc.slots)
    for s in range(2):
        sc, _, sol = _solve_small(seed + s, "posted")
        problems += validate_duals(sol, sc.slots)
    return problems


class _RejectOne:
    """Capacity view refusing network 0, for filter checks."""

    def can(self, i: int) -> bool:
        return i != 0

    def remaining(self, i: int) -> float:
        return 0.0 if i == 0 else 1.0


def _suite_policies(seed: int) -> list[str]:
    problems = []
    sc, eff, dv = _solve_small(seed, "value")
    _, _, dp = _solve_small(seed, "posted")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))
    for t in eff:
        tb = build_type_table(t, sc.slots, value_duals=dv, posted_duals=dp)
        val = lp_val_from_table(tb)
        gsp = lp_gsp_from_table(tb)
        post = lp_post_from_table(tb)
        thlp = baseline_from_table(
            "th-lp", PolicyParams("th-lp", threshold=1.0), tb, UNLIMITED, rng
        )
        for name, dec in (("lp-val", val), ("lp-gsp", gsp), ("lp-post", post)):
            if len(set(dec.callouts)) != len(dec.callouts):
                problems.append(f"duplicate-callout:{name}:type={t.type_id}")
        if gsp.callouts != val.callouts:
            problems.append(f"gsp-set-differs:type={t.type_id}")
        if not set(thlp.callouts) <= set(val.callouts):
            problems.append(f"th-lp-not-subset:type={t.type_id}")
        for i in post.callouts:
            vals = t.bids[i].support()[0]
            if not np.any(np.isclose(vals, post.prices[i], atol=1e-12)):
                problems.append(f"posted-price-off-support:type={t.type_id},net={i}")
        for kk in (1, 2):
            dec = baseline_from_table(
                "max-prob", PolicyParams("max-prob", k=kk), tb, UNLIMITED, rng
            )
            if len(dec.callouts) > kk:
                problems.append(f"set-size-exceeds-k:type={t.type_id},k={kk}")
        dec = baseline_from_table(
            "max-prob", PolicyParams("max-prob", k=3), tb, _RejectOne(), rng
        )
        if 0 in dec.callouts:
            problems.append(f"capacity-ignored:type={t.type_id}")
    return problems


def _suite_mechanisms(seed: int) -> list[str]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(4,)))
    problems = []
    from .bidmodel import SlotProfile

    slots = SlotProfile((1.0, 0.5))
    for k in range(50):
        n = int(rng.integers(1, 6))
        bids = {i: float(rng.uniform(0, 2)) for i in range(n)}
        out = run_gsp(bids, slots)
        for i, _slot, bid, pay in out.allocation:
            if pay > bid + 1e-12:
                problems.append(f"gsp-overcharge:{k}")
        if out.revenue > out.welfare + 1e-12:
            problems.append(f"revenue-exceeds-welfare:gsp:{k}")
        reserve = float(rng.uniform(0, 2))
        rout = run_reserve_auction(bids, reserve, slots)
        for i, _slot, bid, pay in rout.allocation:
            if pay < reserve - 1e-12 or bid < reserve - 1e-12:
                problems.append(f"reserve-underpaid:{k}")
        prices = {i: float(rng.uniform(0, 2)) for i in range(n)}
        pout = run_posted(prices, bids, slots)
        if pout.revenue > pout.welfare + 1e-12:
            problems.append(f"revenue-exceeds-welfare:posted:{k}")
    for k in range(100):
        m = int(rng.integers(1, 8))
        u = rng.random(m)
        u *= rng.uniform(0.1, 1.0) / u.sum()
        w = u * rng.uniform(0.0, 2.0, size=m)
        if stop_process_expectation(zip(w, u)) < (1 - 1 / np.e) * w.sum() - 1e-12:
            problems.append(f"stop-process-floor:{k}")
        p = rng.random(m)
        x = rng.random(m)
        exact, lo, hi = sales_probability(p, x)
        if not (lo - 1e-12 <= exact <= hi + 1e-12):
            problems.append(f"sales-bounds:{k}")
    return problems


def _suite_token_bucket(seed: int) -> list[str]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(5,)))
    problems = []
    for k in range(30):
        cap = float(rng.uniform(1.5, 10.0))
        b = TokenBucket(cap, float(rng.uniform(0.1, 5.0)))
        now = 0.0
        for _ in range(200):
            now += float(rng.exponential(0.5))
            b.try_consume(now)
            if not (-1e-9 <= b.level <= cap + 1e-9):
                problems.append(f"bucket-level-out-of-bounds:{k}")
                break
    buckets = {0: TokenBucket(4.0, 2.0), 1: TokenBucket(2.0, 1.0)}
    if not warmup_skip(buckets) > 0:
        problems.append("warmup-not-positive")

    ledger = RateLedger(np.array([0.1]), horizon=100)
    grants = [t for t in range(1, 101) if ledger.try_consume(0, t)]
    if grants != list(range(1, 100, 10)):
        problems.append("ledger-pacing")

    sc = _tiny_scenario(seed + 3, objective="value", constraint_mode="converted")
    sc = dataclasses.replace(sc, arrival=ArrivalProcess("uniform", sc.arrival.mean_gap))
    kw = dict(t_explore=80, m_exploit=400, replications=2, seed=seed)
    ctxs: dict = {}
    base = run_two_phase(sc, PolicyParams("lp-val"), constraint="time-average",
                         _contexts=ctxs, **kw)
    conv = run_two_phase(sc, PolicyParams("lp-val"), constraint="converted",
                         _contexts=ctxs, **kw)
    if not np.array_equal(base.rep_value, conv.rep_value):
        problems.append("uniform-conversion-drop")
    return problems


def _suite_determinism(seed: int) -> list[str]:
    problems = []
    sc = _tiny_scenario(seed)
    kw = dict(t_explore=60, m_exploit=150, replications=2, seed=seed)
    a = run_two_phase(sc, PolicyParams("lp-val"), **kw)
    b = run_two_phase(sc, PolicyParams("lp-val"), **kw)
    if not (np.array_equal(a.rep_value, b.rep_value)
            and np.array_equal(a.rep_rates, b.rep_rates)):
        problems.append("run-not-reproducible")
    reports = sweep(sc, "set", k_grid=(1, 2), **kw)
    with tempfile.TemporaryDirectory() as td:
        p1, p2 = os.path.join(td, "a.csv"), os.path.join(td, "b.csv")
        write_rows_csv(p1, reports)
        write_rows_csv(p2, reports)
        with open(p1, "rb") as f1, open(p2, "rb") as f2:
            if f1.read() != f2.read():
                problems.append("csv-not-deterministic")
    return problems


SUITES = {
    "bid-model": _suite_bid_model,
    "duals": _suite_duals,
    "policies": _suite_policies,
    "mechanisms": _suite_mechanisms,
    "token-bucket": _suite_token_bucket,
    "determinism": _suite_determinism,
}


def cmd_validate(args) -> int:
    if args.suite is not None and args.suite not in SUITES:
        raise ConfigError("suite", f"unknown suite {args.suite!r}; "
                                   f"choose from {', '.join(SUITES)}")
    names = [args.suite] if args.suite else list(SUITES)
    failed = False
    for name in names:
        t0 = time.perf_counter()
        problems = SUITES[name](args.seed)
        dt = time.perf_counter() - t0
        status = "ok" if not problems else "FAIL"
        print(f"{name:<14} {status}  ({dt:.2f}s)")
        for pr in problems:
            print(f"  {pr}")
        failed = failed or bool(problems)
    return 1 if failed else 0


# -------------------------------------------------------------------- entry


def main(argv=None) -> int:
    parser = build_parser()
    try:
        _apply_env(parser)
        args = parser.parse_args(argv)
        handler = {
            "generate": cmd_generate,
            "learn": cmd_learn,
            "simulate": cmd_simulate,
            "sweep": cmd_sweep,
            "validate": cmd_validate,
        }[args.command]
        return handler(args)
    except ConfigError as e:
        print(f"config error: {e.field}: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        return int(e.code or 0)


if __name__ == "__main__":
    sys.exit(main())
