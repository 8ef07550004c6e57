"""Rate ledger, token bucket, arrival clock, and the bucket-gating wrapper."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calloutsim.constraints import (
    ArrivalProcess,
    RateLedger,
    TokenBucket,
    convert_policy,
    warmup_skip,
)


def test_full_bucket_grants_and_decrements():
    b = TokenBucket(5, 0.0)
    assert b.try_consume(0.0)
    assert b.level == pytest.approx(4.0)


def test_partial_token_denies_without_spending():
    b = TokenBucket(5, 0.0)
    for _ in range(5):
        assert b.try_consume(0.0)
    b2 = TokenBucket(5, 0.5, start_time=0.0)
    for _ in range(5):
        b2.try_consume(0.0)
    # one time unit refills 0.5: below a whole token, so deny
    assert not b2.try_consume(1.0)
    assert b2.level == pytest.approx(0.5)


def test_bucket_steady_state_grant_fraction_matches_refill_rate():
    # capacity 5, half a token per step, attempt every step: after the
    # initial burst drains, grants alternate, so the long-run fraction is
    # the refill rate 0.5
    b = TokenBucket(5, 0.5)
    n = 10_000
    grants = sum(b.try_consume(float(t)) for t in range(1, n + 1))
    assert grants / n == pytest.approx(0.5, abs=2e-3)


def test_bucket_rejects_time_regression_and_tiny_capacity():
    b = TokenBucket(5, 1.0)
    b.try_consume(3.0)
    with pytest.raises(ValueError):
        b.try_consume(2.0)
    with pytest.raises(ValueError):
        TokenBucket(1.0, 1.0)


def test_bucket_peek_does_not_spend():
    b = TokenBucket(2, 0.0)
    assert b.peek(0.0)
    assert b.level == pytest.approx(2.0)


@given(
    st.floats(1.5, 20.0),
    st.floats(0.0, 3.0),
    st.lists(st.floats(0.0, 5.0), min_size=1, max_size=60),
)
@settings(max_examples=150, deadline=None)
def test_bucket_level_stays_within_bounds(cap, rate, gaps):
    b = TokenBucket(cap, rate)
    now = 0.0
    for g in gaps:
        now += g
        b.try_consume(now)
        assert -1e-9 <= b.level <= cap + 1e-9


# ------------------------------------------------------------------ ledger


def test_ledger_rate_one_always_grants():
    led = RateLedger([1.0])
    assert all(led.try_consume(0, t) for t in range(1, 200))


def test_ledger_rate_zero_never_grants():
    led = RateLedger([0.0])
    assert not any(led.try_consume(0, t) for t in range(1, 200))


def test_ledger_tenth_rate_grants_once_per_ten():
    led = RateLedger([0.1])
    granted_at = [t for t in range(1, 101) if led.try_consume(0, t)]
    assert granted_at == list(range(1, 100, 10))  # 1, 11, ..., 91
    assert led.granted[0] == 10


@given(
    st.floats(0.0, 1.0),
    st.lists(st.booleans(), min_size=1, max_size=300),
)
@settings(max_examples=150, deadline=None)
def test_ledger_prefix_bound_invariant(rate, attempts):
    led = RateLedger([rate])
    for t, attempt in enumerate(attempts, start=1):
        if attempt:
            led.try_consume(0, t)
        led.check_prefix_bound(t)
        assert led.granted[0] <= rate * t + 1 + 1e-9


def test_ledger_tracks_attempt_rates():
    led = RateLedger([0.5, 0.5])
    for t in range(1, 11):
        led.try_consume(0, t)
    assert led.attempt_rates(10)[0] == pytest.approx(1.0)
    assert led.attempt_rates(10)[1] == 0.0


# ---------------------------------------------------------------- arrivals


def test_uniform_arrivals_are_a_unit_grid():
    proc = ArrivalProcess("uniform")
    assert np.allclose(proc.times(4), [1.0, 2.0, 3.0, 4.0])


def test_poisson_gap_mean_within_one_percent():
    proc = ArrivalProcess("poisson", mean_gap=0.003)
    times = proc.times(100_000, np.random.default_rng(42))
    gaps = np.diff(np.concatenate([[0.0], times]))
    assert abs(gaps.mean() - 0.003) / 0.003 < 0.01


def test_arrival_process_validates_inputs():
    with pytest.raises(ValueError):
        ArrivalProcess("weekly")
    with pytest.raises(ValueError):
        ArrivalProcess("poisson").times(5)  # rng required


# ------------------------------------------------------- gating & warmup


def test_infinite_bucket_gating_is_identity():
    buckets = {i: TokenBucket(math.inf, 0.0) for i in range(3)}
    gated = convert_policy(lambda s: s, buckets)
    rng = np.random.default_rng(0)
    now = 0.0
    for _ in range(100):
        now += rng.exponential(1.0)
        want = list(rng.choice(3, size=rng.integers(0, 4), replace=False))
        assert gated(now, want) == want


def test_gated_policy_drops_denied_callouts_silently():
    buckets = {0: TokenBucket(2, 0.0)}
    gated = convert_policy(lambda: [0], buckets)
    assert gated(0.0) == [0]
    assert gated(0.0) == [0]
    assert gated(0.0) == []  # bucket empty, no refill


def test_warmup_skip_examples():
    assert warmup_skip([TokenBucket(5, 0.5)]) == 10
    assert warmup_skip([TokenBucket(5, 0.5), TokenBucket(10, 0.1)]) == 100
    assert warmup_skip([TokenBucket(math.inf, 0.0)]) == 0
    assert warmup_skip({7: TokenBucket(4, 0.5)}) == 8


def test_bucket_ratio_floor_small_scale():
    # a stationary random policy attempting at exactly the refill rate keeps
    # at least 1 - 1/(capacity - 1) of its grants once gated (matched seeds)
    cap, rate, n, reps = 5.0, 0.12, 4000, 30
    ratios = []
    for rep in range(reps):
        rng = np.random.default_rng(1000 + rep)
        attempts = rng.random(n) < rate
        bucket = TokenBucket(cap, rate)
        raw = int(attempts.sum())
        gated = sum(
            bucket.try_consume(float(t))
            for t, a in enumerate(attempts, start=1)
            if a
        )
        if raw:
            ratios.append(gated / raw)
    mean = float(np.mean(ratios))
    sem = float(np.std(ratios, ddof=1) / math.sqrt(len(ratios)))
    assert mean >= (1 - 1 / (cap - 1)) - 3 * sem
