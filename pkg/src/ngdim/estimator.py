"""Sequential estimation of the number of non-Gaussian components.

Both strategies reduce the estimation problem to a sequence of
fixed-level tests of "exactly ``k`` non-Gaussian components" and return
``q_hat = min { k : the k-null is not rejected }``:

* :func:`estimate_incremental` scans ``k = p - 2`` down to 0 and stops
  at the first rejection;
* :func:`estimate_divide_conquer` bisects on ``k``, testing a candidate
  and its left neighbour to decide the search direction.

Candidate tests draw their seeds from the master seed keyed by ``k``
(see :mod:`ngdim._rng`), so both strategies see identical p-values
whenever they visit the same candidate on the same data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._rng import NS_ESTIMATOR_K, derive_seed
from .dimtest import BootstrapConfig, TestOutcome, bootstrap_test
from .scatter import as_data_matrix

__all__ = [
    "VisitedTest",
    "DimensionEstimate",
    "estimate_incremental",
    "estimate_divide_conquer",
    "replay_decisions",
]


@dataclass(frozen=True)
class VisitedTest:
    """One candidate test performed during estimation.

    ``decision`` is ``"reject"`` or ``"accept"``; a candidate that
    cannot be tested (``k = p - 1``, where the noise block is a single
    value) is recorded as accepted with a NaN p-value, since an
    untestable null is never rejected.
    """

    k: int
    p_value: float
    decision: str


@dataclass
class DimensionEstimate:
    """Estimated signal count with the audit trail of candidate tests."""

    q_hat: int
    strategy: str
    alpha: float
    visited: list[VisitedTest]

    def tests_performed(self) -> int:
        return len(self.visited)


def _default_test(X, k: int, config: BootstrapConfig, threads: int | None) -> TestOutcome:
    return bootstrap_test(X, k, config, threads=threads)


def _run_test(X, k, config, test_fn, threads):
    cfg_k = replace(config, seed=derive_seed(config.seed, NS_ESTIMATOR_K, k))
    if test_fn is None:
        return _default_test(X, k, cfg_k, threads)
    return test_fn(X, k, cfg_k)


def estimate_incremental(
    X,
    config: BootstrapConfig,
    alpha: float = 0.05,
    *,
    test_fn=None,
    threads: int | None = None,
) -> DimensionEstimate:
    """Estimate the signal count by scanning candidates downward.

    Tests ``k = p - 2, p - 3, ...`` at level ``alpha``; the first
    rejection at ``k`` yields ``q_hat = k + 1``, and reaching an
    unrejected ``k = 0`` yields ``q_hat = 0`` (no evidence of any
    non-Gaussian component).  Cannot distinguish ``p - 1`` from ``p``
    signals, so ``q_hat = p - 1`` is the ceiling.

    ``test_fn(X, k, config) -> TestOutcome`` may replace the bootstrap
    test, e.g. with a deterministic oracle in unit tests.
    """
    X = as_data_matrix(X)
    p = X.shape[0]
    _check_alpha(alpha)
    visited: list[VisitedTest] = []
    for k in range(p - 2, -1, -1):
        out = _run_test(X, k, config, test_fn, threads)
        if out.p_value <= alpha:
            visited.append(VisitedTest(k, out.p_value, "reject"))
            return DimensionEstimate(k + 1, "incremental", alpha, visited)
        visited.append(VisitedTest(k, out.p_value, "accept"))
    return DimensionEstimate(0, "incremental", alpha, visited)


def estimate_divide_conquer(
    X,
    config: BootstrapConfig,
    alpha: float = 0.05,
    *,
    test_fn=None,
    threads: int | None = None,
) -> DimensionEstimate:
    """Estimate the signal count by bisection over candidates.

    Maintains a search interval ``[q_min, q_max]`` starting at
    ``[1, p - 1]`` with candidate ``k = ceil(p / 2)``.  Each round
    tests the candidate and its left neighbour: accept/reject brackets
    the answer at ``k``; accept/accept moves the interval left of
    ``k``; a rejection at ``k`` moves it right.  The interval
    collapsing to a point returns that point.  Visits at most
    ``O(log p)`` candidates, each tested once (results are cached, and
    the untestable candidate ``k = p - 1`` counts as accepted).

    Requires ``p >= 3``.
    """
    X = as_data_matrix(X)
    p = X.shape[0]
    if p < 3:
        raise ValueError("divide-and-conquer needs at least 3 variables")
    _check_alpha(alpha)

    cache: dict[int, VisitedTest] = {}
    visited: list[VisitedTest] = []

    def tested(k: int) -> VisitedTest:
        if k not in cache:
            if k > p - 2:
                cache[k] = VisitedTest(k, math.nan, "accept")
            else:
                out = _run_test(X, k, config, test_fn, threads)
                decision = "reject" if out.p_value <= alpha else "accept"
                cache[k] = VisitedTest(k, out.p_value, decision)
            visited.append(cache[k])
        return cache[k]

    q_min, q_max = 1, p - 1
    k = math.ceil(p / 2)
    while q_min != q_max:
        if tested(k).decision == "reject":
            q_min = k + 1
        else:
            if tested(k - 1).decision == "reject":
                return DimensionEstimate(k, "divide-conquer", alpha, visited)
            q_max = k - 1
        k = math.ceil((q_min + q_max) / 2)
    return DimensionEstimate(q_min, "divide-conquer", alpha, visited)


def replay_decisions(estimate: DimensionEstimate, p: int) -> int:
    """Recompute ``q_hat`` from the recorded decisions alone.

    Replays the strategy's control flow against the visited list,
    verifying that the estimate is an auditable function of its trail.
    Raises ``ValueError`` if the trail is inconsistent with the
    strategy.
    """
    decisions = {v.k: v.decision for v in estimate.visited}

    def decision(k: int) -> str:
        if k > p - 2:
            return "accept"
        if k not in decisions:
            raise ValueError(f"trail is missing candidate k={k}")
        return decisions[k]

    if estimate.strategy == "incremental":
        for k in range(p - 2, -1, -1):
            if decision(k) == "reject":
                return k + 1
        return 0
    if estimate.strategy == "divide-conquer":
        q_min, q_max = 1, p - 1
        k = math.ceil(p / 2)
        while q_min != q_max:
            if decision(k) == "reject":
                q_min = k + 1
            else:
                if decision(k - 1) == "reject":
                    return k
                q_max = k - 1
            k = math.ceil((q_min + q_max) / 2)
        return q_min
    raise ValueError(f"unknown strategy {estimate.strategy!r}")


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"test level alpha must be in (0, 1), got {alpha}")
