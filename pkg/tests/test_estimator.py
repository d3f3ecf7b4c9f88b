"""Sequential estimators: oracle traces, search bounds, replayability.

Oracles: deterministic stand-in tests with hand-picked p-values, so
every trace is checked against control flow worked out by hand, plus a
brute-force changepoint sweep over all (p, q) combinations.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

import ngdim
from ngdim import (
    BootstrapConfig,
    DimensionEstimate,
    VisitedTest,
    estimate_divide_conquer,
    estimate_incremental,
    replay_decisions,
    scatter_pair,
)


def _oracle(p_values, calls=None):
    """Stand-in test that reads its p-value from a dict keyed by k."""

    def fn(X, k, config):
        if calls is not None:
            calls.append((k, config.seed))
        return ngdim.TestOutcome(
            statistic=1.0,
            p_value=p_values[k],
            k=k,
            method="oracle",
            model="ngca",
            n=X.shape[1],
            seed=config.seed,
        )

    return fn


def _changepoint(p, q):
    """p-values for a test that rejects exactly when k < q."""
    return {k: (0.01 if k < q else 0.5) for k in range(p)}


def _config(seed=0, M=40):
    return BootstrapConfig(
        pair=scatter_pair("cov-cov4"),
        model="ngca",
        noise="parametric",
        replicates=M,
        seed=seed,
        statistic="variance",
    )


def _data(p, n=60, seed=5):
    return np.random.default_rng(seed).standard_normal((p, n))


# ---------------------------------------------------------------------------
# hand-checked traces


def test_incremental_trace_with_mixed_decisions():
    # k=4 and k=3 accepted, k=2 rejected: the scan stops there and the
    # estimate is one above the rejected candidate.
    X = _data(6)
    pv = {4: 0.4, 3: 0.3, 2: 0.01}
    est = estimate_incremental(X, _config(), test_fn=_oracle(pv))
    assert est.q_hat == 3
    assert est.strategy == "incremental"
    assert [v.k for v in est.visited] == [4, 3, 2]
    assert [v.decision for v in est.visited] == ["accept", "accept", "reject"]
    assert [v.p_value for v in est.visited] == [0.4, 0.3, 0.01]
    assert est.tests_performed() == 3


def test_incremental_all_accepted_estimates_zero():
    X = _data(6)
    est = estimate_incremental(X, _config(), test_fn=_oracle(_changepoint(6, 0)))
    assert est.q_hat == 0
    assert [v.k for v in est.visited] == [4, 3, 2, 1, 0]
    assert all(v.decision == "accept" for v in est.visited)


def test_incremental_first_rejection_gives_ceiling():
    # Rejecting the very first candidate p-2 yields the ceiling p-1:
    # the scan cannot distinguish p-1 from p signals.
    X = _data(6)
    est = estimate_incremental(X, _config(), test_fn=_oracle(_changepoint(6, 5)))
    assert est.q_hat == 5
    assert est.tests_performed() == 1
    assert est.visited[0] == VisitedTest(4, 0.01, "reject")


def test_divide_conquer_bracket_in_one_round():
    # p=6 with three signals: candidate 3 accepted, neighbour 2
    # rejected, so the answer is bracketed immediately.
    X = _data(6)
    est = estimate_divide_conquer(X, _config(), test_fn=_oracle(_changepoint(6, 3)))
    assert est.q_hat == 3
    assert est.strategy == "divide-conquer"
    assert [v.k for v in est.visited] == [3, 2]
    assert [v.decision for v in est.visited] == ["accept", "reject"]


def test_divide_conquer_trace_single_signal_p8():
    # p=8 with one signal: both candidate 4 and neighbour 3 accept so
    # the interval shrinks to [1, 3]; candidate 2 and neighbour 1 both
    # accept, shrinking to [1, 1].
    X = _data(8)
    est = estimate_divide_conquer(X, _config(), test_fn=_oracle(_changepoint(8, 1)))
    assert est.q_hat == 1
    assert [v.k for v in est.visited] == [4, 3, 2, 1]
    assert all(v.decision == "accept" for v in est.visited)


def test_divide_conquer_untestable_candidate_auto_accepts():
    # With p=3 the first candidate is k=2=p-1, whose noise block is a
    # single value; it is recorded as accepted with a NaN p-value and
    # the neighbour decides.
    X = _data(3)
    est = estimate_divide_conquer(X, _config(), test_fn=_oracle(_changepoint(3, 2)))
    assert est.q_hat == 2
    first = est.visited[0]
    assert first.k == 2
    assert math.isnan(first.p_value)
    assert first.decision == "accept"
    assert est.visited[1] == VisitedTest(1, 0.01, "reject")


# ---------------------------------------------------------------------------
# changepoint sweep: both strategies recover any true q, within their
# test-count budgets, and the recorded trail replays to the estimate


@pytest.mark.parametrize("p", range(3, 11))
def test_changepoint_sweep_incremental(p):
    X = _data(p)
    for q in range(p):
        est = estimate_incremental(X, _config(), test_fn=_oracle(_changepoint(p, q)))
        assert est.q_hat == min(q, p - 1)
        assert est.tests_performed() <= p - 1
        assert replay_decisions(est, p) == est.q_hat


@pytest.mark.parametrize("p", range(3, 11))
def test_changepoint_sweep_divide_conquer(p):
    budget = 2 * math.ceil(math.log2(p)) + 2
    X = _data(p)
    for q in range(1, p):
        est = estimate_divide_conquer(X, _config(), test_fn=_oracle(_changepoint(p, q)))
        assert est.q_hat == q
        assert est.tests_performed() <= budget
        # every candidate is tested at most once
        ks = [v.k for v in est.visited]
        assert len(ks) == len(set(ks))
        assert replay_decisions(est, p) == est.q_hat


def test_divide_conquer_never_below_one():
    # The bisection interval starts at [1, p-1], so even a pure-noise
    # oracle cannot drive the estimate to zero.
    X = _data(6)
    est = estimate_divide_conquer(X, _config(), test_fn=_oracle(_changepoint(6, 0)))
    assert est.q_hat == 1


# ---------------------------------------------------------------------------
# replay validation


def test_replay_rejects_missing_candidate():
    est = DimensionEstimate(
        q_hat=3,
        strategy="incremental",
        alpha=0.05,
        visited=[VisitedTest(4, 0.4, "accept")],
    )
    with pytest.raises(ValueError, match="missing candidate"):
        replay_decisions(est, 6)


def test_replay_rejects_unknown_strategy():
    est = DimensionEstimate(q_hat=1, strategy="bogus", alpha=0.05, visited=[])
    with pytest.raises(ValueError, match="strategy"):
        replay_decisions(est, 6)


# ---------------------------------------------------------------------------
# argument validation


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.7])
def test_alpha_out_of_range_rejected(alpha):
    X = _data(6)
    fn = _oracle(_changepoint(6, 2))
    with pytest.raises(ValueError, match="alpha"):
        estimate_incremental(X, _config(), alpha, test_fn=fn)
    with pytest.raises(ValueError, match="alpha"):
        estimate_divide_conquer(X, _config(), alpha, test_fn=fn)


def test_divide_conquer_needs_three_variables():
    with pytest.raises(ValueError, match="at least 3"):
        estimate_divide_conquer(_data(2), _config(), test_fn=_oracle({}))


def test_incremental_works_with_two_variables():
    est = estimate_incremental(_data(2), _config(), test_fn=_oracle(_changepoint(2, 1)))
    assert est.q_hat == 1
    assert [v.k for v in est.visited] == [0]


# ---------------------------------------------------------------------------
# per-candidate seeds are shared across strategies


def test_candidate_seeds_agree_between_strategies():
    # Both strategies derive the candidate test's seed from the master
    # seed and k alone, so a candidate visited by both sees the same
    # stream; distinct candidates see distinct streams.
    X = _data(8)
    inc_calls, dc_calls = [], []
    estimate_incremental(
        X, _config(seed=12), test_fn=_oracle(_changepoint(8, 1), inc_calls)
    )
    estimate_divide_conquer(
        X, _config(seed=12), test_fn=_oracle(_changepoint(8, 1), dc_calls)
    )
    inc_seed = dict(inc_calls)
    dc_seed = dict(dc_calls)
    shared = set(inc_seed) & set(dc_seed)
    assert shared  # the sweep and the bisection overlap somewhere
    for k in shared:
        assert inc_seed[k] == dc_seed[k]
    assert len(set(inc_seed.values())) == len(inc_seed)
    # a different master seed moves every candidate seed
    other_calls = []
    estimate_incremental(
        X, _config(seed=13), test_fn=_oracle(_changepoint(8, 1), other_calls)
    )
    assert all(dict(other_calls)[k] != inc_seed[k] for k in inc_seed)


# ---------------------------------------------------------------------------
# end-to-end with the real bootstrap test


def _one_signal_sample(n=400, seed=3):
    rng = np.random.default_rng(seed)
    z = np.vstack(
        [
            rng.exponential(1.0, size=n) - 1.0,
            rng.standard_normal((3, n)),
        ]
    )
    A = np.array(
        [
            [1.0, 0.3, -0.2, 0.5],
            [0.0, 1.2, 0.4, -0.3],
            [0.2, -0.5, 0.9, 0.1],
            [-0.4, 0.1, 0.3, 1.1],
        ]
    )
    return A @ z


def test_real_bootstrap_strategies_agree():
    # On a clear one-signal sample both strategies find q=1, and any
    # candidate they both visit gets the identical p-value because the
    # candidate seed depends only on (master seed, k).
    X = _one_signal_sample()
    cfg = _config(seed=7, M=60)
    inc = estimate_incremental(X, cfg)
    dc = estimate_divide_conquer(X, cfg)
    assert inc.q_hat == 1
    assert dc.q_hat == 1
    inc_p = {v.k: v.p_value for v in inc.visited}
    dc_p = {v.k: v.p_value for v in dc.visited}
    shared = set(inc_p) & set(dc_p)
    assert shared
    for k in shared:
        assert inc_p[k] == dc_p[k]
    assert replay_decisions(inc, 4) == 1
    assert replay_decisions(dc, 4) == 1
