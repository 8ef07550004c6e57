"""Selective call-out optimization and auction simulation for ad exchanges.

The package splits into: bid models (bidmodel), dual learning from sampled
impressions (duals), per-impression call-out policies (policies), auction and
pricing mechanisms (mechanisms), call-out rate limiting (constraints), the
two-phase simulation harness (harness), and a CLI (cli).
"""

from .bidmodel import (
    BidDistribution,
    ImpressionType,
    SlotProfile,
    generate_benchmark_distribution,
    is_mhr,
    perturb_general_position,
    survival,
)
from .constraints import ArrivalProcess, RateLedger, TokenBucket, convert_policy
from .duals import (
    DualSolution,
    SampledLP,
    build_sample_lp,
    solve_for_duals,
    validate_duals,
)
from .harness import (
    Scenario,
    SimReport,
    brute_force_policy_value,
    compute_opt_ub,
    effective_types,
    generate_benchmark,
    peak_by_kind,
    peak_report,
    run_two_phase,
    run_with_duals,
    simulate_fast,
    sweep,
    write_rows_csv,
    write_summary_csv,
)
from .mechanisms import (
    lpmax_bound,
    run_gsp,
    run_posted,
    run_reserve_auction,
    run_value_auction,
    sales_probability,
    stop_process_expectation,
)
from .policies import (
    SET_KINDS,
    THRESHOLD_KINDS,
    CallOutDecision,
    PolicyParams,
    baseline_decide,
    build_type_table,
    choose_reserve,
    lp_gsp_decide,
    lp_post_decide,
    lp_val_decide,
)

__version__ = "0.1.0"

__all__ = [
    "ArrivalProcess",
    "BidDistribution",
    "CallOutDecision",
    "DualSolution",
    "ImpressionType",
    "PolicyParams",
    "RateLedger",
    "SET_KINDS",
    "SampledLP",
    "Scenario",
    "SimReport",
    "SlotProfile",
    "THRESHOLD_KINDS",
    "TokenBucket",
    "baseline_decide",
    "brute_force_policy_value",
    "build_sample_lp",
    "build_type_table",
    "choose_reserve",
    "compute_opt_ub",
    "convert_policy",
    "effective_types",
    "generate_benchmark",
    "generate_benchmark_distribution",
    "is_mhr",
    "lp_gsp_decide",
    "lp_post_decide",
    "lp_val_decide",
    "lpmax_bound",
    "peak_by_kind",
    "peak_report",
    "perturb_general_position",
    "run_gsp",
    "run_posted",
    "run_reserve_auction",
    "run_two_phase",
    "run_value_auction",
    "run_with_duals",
    "sales_probability",
    "simulate_fast",
    "solve_for_duals",
    "stop_process_expectation",
    "survival",
    "sweep",
    "validate_duals",
    "write_rows_csv",
    "write_summary_csv",
    "__version__",
]
