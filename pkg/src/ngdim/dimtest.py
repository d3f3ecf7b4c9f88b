"""Tests of the hypothesis that exactly ``k`` components are non-Gaussian.

Given an unmixing with kurtosis values ``D``, the null "the data carry
exactly ``k`` non-Gaussian components" predicts that some ``p - k`` of
the values agree (and, for the cov-cov4 pair, equal one).  Two test
statistic families quantify the disagreement:

* the known-noise-value statistic ``T_k = n * sum (d - 1)^2`` over the
  ``p - k`` values closest to one (cov-cov4 pair only, where one is the
  exact Gaussian value), carried by :func:`fobi_statistic`, with a
  Monte-Carlo asymptotic reference law in :func:`asymptotic_test_fobi`
  and chi-square component tests in :func:`asymptotic_split_tests`;
* the variance statistic ``t_k = n * sum (d - mean d)^2`` over the
  minimum-variance block (:func:`variance_statistic`), which needs no
  known noise value and is calibrated by the resampling bootstrap in
  :func:`bootstrap_test`.

Bootstrap replicates regenerate the noise block as Gaussian (or rotate
it) while resampling the signal block, refit the full pipeline and
recompute the statistic, giving a null distribution conditional on the
fitted signal content.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._rng import NS_ASYMPTOTIC_MC, NS_BOOT_REPLICATE, derive_rng
from .exceptions import (
    BootstrapFailureError,
    ConvergenceError,
    DegenerateScatterError,
    WhiteningError,
)
from .scatter import as_data_matrix, sample_cov
from .unmixing import (
    ScatterPairSpec,
    latent_components,
    order_for_known_noise,
    order_for_partition,
    scatter_pair,
    two_scatter_unmixing,
)

__all__ = [
    "TestOutcome",
    "BootstrapConfig",
    "MethodSpec",
    "method_spec",
    "METHOD_LABELS",
    "fobi_statistic",
    "variance_statistic",
    "split_statistics",
    "tk_star_known_noise",
    "sigma1_hat",
    "asymptotic_test_fobi",
    "asymptotic_split_tests",
    "resample_signal",
    "resample_noise",
    "bootstrap_p_value",
    "bootstrap_test",
]

logger = logging.getLogger(__name__)

_MAX_BOOT_FAILURES = 10
_SOLVER_ERRORS = (DegenerateScatterError, ConvergenceError, WhiteningError)


@dataclass
class TestOutcome:
    """Result of one dimension test."""

    statistic: float
    p_value: float
    k: int
    method: str
    model: str
    n: int
    seed: int | None = None
    sigma1: float | None = None
    replicates: np.ndarray | None = None
    failures: int = 0

    def rejects(self, alpha: float) -> bool:
        """True when the null of exactly ``k`` non-Gaussian components is rejected."""
        return self.p_value <= alpha


# ---------------------------------------------------------------------------
# statistics on kurtosis values


def fobi_statistic(D, k: int, n: int) -> float:
    """Known-noise-value statistic ``n * sum (d - 1)^2`` over the
    ``p - k`` kurtosis values closest to one (ties toward smaller value)."""
    D = np.asarray(D, dtype=float)
    _, noise = order_for_known_noise(D, k)
    d = D[noise]
    return float(n * ((d - 1.0) ** 2).sum())


def variance_statistic(D, k: int, n: int) -> float:
    """Variance statistic ``n * sum (d - mean)^2`` over the
    minimum-variance block of ``p - k`` kurtosis values."""
    D = np.asarray(D, dtype=float)
    _, noise = order_for_partition(D, k)
    d = D[noise]
    return float(n * ((d - d.mean()) ** 2).sum())


def split_statistics(D, k: int, n: int, convention: str = "decomposition"):
    """Within-block and block-level components of the known-noise statistic.

    Under ``convention="decomposition"`` (default) the parts are

    ``t1 = n * sum (d - mean d)^2``  and  ``t2 = n * (p - k) * (mean d - 1)^2``

    over the block of values closest to one, so that ``t1 + t2`` equals
    :func:`fobi_statistic` exactly.  ``convention="printed"`` instead
    evaluates the unnormalized forms ``n * (sum d^2 - (sum d)^2)`` and
    ``n * (sum (d - 1))^2``; these do not add up to the statistic (the
    first can even go negative) and are kept only for comparison.
    """
    D = np.asarray(D, dtype=float)
    _, noise = order_for_known_noise(D, k)
    d = D[noise]
    m = d.shape[0]
    if convention == "decomposition":
        t1 = float(n * ((d - d.mean()) ** 2).sum())
        t2 = float(n * m * (d.mean() - 1.0) ** 2)
    elif convention == "printed":
        t1 = float(n * ((d * d).sum() - d.sum() ** 2))
        t2 = float(n * (d - 1.0).sum() ** 2)
    else:
        raise ValueError(f"unknown split convention {convention!r}")
    return t1, t2


def tk_star_known_noise(D2_block_or_S2, k: int, n: int) -> float:
    """Known-noise-subspace diagnostic ``n * || (S2 - I) restricted to the
    noise block ||_F^2``.

    Expects a second-scatter matrix of standardized data whose last
    ``p - k`` coordinates are the true noise block (e.g. simulated
    latents), so this is a diagnostic for studies where the truth is
    known.  It dominates the eigenvalue-based statistic when the
    candidate count is not smaller than the true one.
    """
    S2 = np.asarray(D2_block_or_S2, dtype=float)
    p = S2.shape[0]
    if not 0 <= k <= p - 1:
        raise ValueError(f"k={k} out of range 0..{p - 1}")
    B = S2[k:, k:] - np.eye(p - k)
    return float(n * (B * B).sum())


def sigma1_hat(Z, model: str) -> float:
    """Estimate of the fourth-moment variance parameter entering the
    asymptotic reference laws.

    For standardized components ``Z`` (shape ``(p, n)``), the estimate
    is ``mean_i sum_k z_ik^4 - p + 8`` under the independent-component
    model (``model="ngica"``) and ``mean_i ||z_i||^4 - p^2 + 8`` under
    the general model (``model="ngca"``).  Both converge to
    ``Var(||z||^2) + 8`` (equal to ``2p + 8`` at the Gaussian) and are
    floored at ``1e-6``.
    """
    Z = np.asarray(Z, dtype=float)
    p, n = Z.shape
    if model == "ngica":
        value = float((Z**4).sum() / n - p + 8.0)
    elif model == "ngca":
        norms2 = np.einsum("ij,ij->j", Z, Z)
        value = float((norms2**2).mean() - p * p + 8.0)
    else:
        raise ValueError(f"unknown model assumption {model!r}")
    return max(value, 1e-6)


# ---------------------------------------------------------------------------
# asymptotic tests (cov-cov4 pair)


def _fobi_fit(X, k: int):
    pair = scatter_pair("cov-cov4")
    fit = two_scatter_unmixing(X, pair, k=k, noise_rule="closest_to_one")
    Z = latent_components(X, fit)
    return fit, Z


def asymptotic_test_fobi(
    X,
    k: int,
    model: str = "ngica",
    *,
    seed: int = 0,
    mc_draws: int = 100_000,
) -> TestOutcome:
    """Asymptotic test of exactly ``k`` non-Gaussian components for the
    cov-cov4 pair.

    The scaled statistic ``(p + 2)^2 * T_k`` is referred to the limit
    law ``2 s Q1 + (2 s + 4 (p - k)) Q2`` where ``Q1`` is chi-square
    with ``(p - k - 1)(p - k + 2)/2`` degrees of freedom, ``Q2`` is
    chi-square with one degree of freedom and ``s`` is the estimated
    fourth-moment variance parameter (:func:`sigma1_hat`).  The law is
    evaluated by seeded Monte Carlo with ``mc_draws`` draws; the
    p-value uses the add-one convention so it always lies in (0, 1].

    Requires ``k <= p - 2`` so the first chi-square has positive
    degrees of freedom.
    """
    X = as_data_matrix(X)
    p, n = X.shape
    m = p - k
    df1 = (m - 1) * (m + 2) // 2
    if not 0 <= k <= p - 2 or df1 <= 0:
        raise ValueError(
            f"asymptotic test needs 0 <= k <= p-2 (got k={k}, p={p})"
        )
    fit, Z = _fobi_fit(X, k)
    tk = fobi_statistic(fit.D, k, n)
    s = sigma1_hat(Z, model)
    statistic = (p + 2) ** 2 * tk

    rng = derive_rng(seed, NS_ASYMPTOTIC_MC)
    draws = 2.0 * s * rng.chisquare(df1, mc_draws) + (2.0 * s + 4.0 * m) * rng.chisquare(
        1, mc_draws
    )
    p_value = (np.count_nonzero(draws >= statistic) + 1) / (mc_draws + 1)
    return TestOutcome(
        statistic=float(statistic),
        p_value=float(p_value),
        k=k,
        method="asymptotic[fobi]",
        model=model,
        n=n,
        seed=seed,
        sigma1=s,
    )


def asymptotic_split_tests(
    X,
    k: int,
    model: str = "ngica",
    *,
    convention: str = "decomposition",
):
    """Chi-square tests of the two components of the known-noise statistic.

    The within-block part ``(p + 2)^2 t1 / (2 s)`` is referred to a
    chi-square with ``(p - k - 1)(p + 2 - k)/2`` degrees of freedom and
    the block-level part ``(p + 2)^2 t2 / (2 s + 4 (p - k))`` to a
    chi-square with one degree of freedom, with ``s`` from
    :func:`sigma1_hat`.  Returns the two outcomes ``(within, level)``.

    The scalings target the decomposition convention of
    :func:`split_statistics`; with ``convention="printed"`` the
    unnormalized statistics are plugged into the same reference laws
    for comparison only.
    """
    X = as_data_matrix(X)
    p, n = X.shape
    m = p - k
    df1 = (m - 1) * (m + 2) // 2
    if not 0 <= k <= p - 2 or df1 <= 0:
        raise ValueError(f"split tests need 0 <= k <= p-2 (got k={k}, p={p})")
    fit, Z = _fobi_fit(X, k)
    t1, t2 = split_statistics(fit.D, k, n, convention)
    s = sigma1_hat(Z, model)

    stat1 = (p + 2) ** 2 * t1 / (2.0 * s)
    stat2 = (p + 2) ** 2 * t2 / (2.0 * s + 4.0 * m)
    out1 = TestOutcome(
        statistic=float(stat1),
        p_value=float(stats.chi2.sf(stat1, df=df1)),
        k=k,
        method="asymptotic[fobi-within]",
        model=model,
        n=n,
        sigma1=s,
    )
    out2 = TestOutcome(
        statistic=float(stat2),
        p_value=float(stats.chi2.sf(stat2, df=1)),
        k=k,
        method="asymptotic[fobi-level]",
        model=model,
        n=n,
        sigma1=s,
    )
    return out1, out2


# ---------------------------------------------------------------------------
# bootstrap


@dataclass(frozen=True)
class BootstrapConfig:
    """Configuration of :func:`bootstrap_test`.

    ``model`` states which structure the signal resampler preserves:
    ``"ngca"`` resamples whole signal columns (keeps dependence inside
    the signal block), ``"ngica"`` resamples each signal row
    independently.  ``noise`` picks the noise-block regenerator:
    ``"parametric"`` draws fresh mean-zero Gaussian noise with the
    empirical covariance of the fitted noise block, ``"rotation"``
    applies an independent Haar-random rotation to each noise column.
    ``statistic`` is ``"variance"`` (default) or ``"fobi"`` for the
    known-noise-value statistic of the cov-cov4 pair.
    """

    pair: ScatterPairSpec
    model: str = "ngca"
    noise: str = "parametric"
    replicates: int = 200
    seed: int = 0
    statistic: str = "variance"

    def __post_init__(self):
        if self.model not in ("ngca", "ngica"):
            raise ValueError(f"unknown model assumption {self.model!r}")
        if self.noise not in ("parametric", "rotation"):
            raise ValueError(f"unknown noise strategy {self.noise!r}")
        if self.statistic not in ("variance", "fobi"):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        if self.replicates < 1:
            raise ValueError("need at least one bootstrap replicate")


@dataclass(frozen=True)
class MethodSpec:
    """A method label resolved to a scatter pair plus statistic choice."""

    label: str
    pair: ScatterPairSpec
    statistic: str


METHOD_LABELS = ("fobi", "cov-cov4", "cau-hub", "scau-shub", "scaui-shubi")


def method_spec(label: str, **pair_options) -> MethodSpec:
    """Resolve a method label.

    ``fobi`` is the cov-cov4 pair tested with the known-noise-value
    statistic; every other label is the pair of the same name tested
    with the variance statistic.
    """
    key = label.lower()
    if key == "fobi":
        return MethodSpec("fobi", scatter_pair("cov-cov4", **pair_options), "fobi")
    pair = scatter_pair(key, **pair_options)
    return MethodSpec(pair.label, pair, "variance")


def resample_signal(S_hat: np.ndarray, model: str, rng: np.random.Generator) -> np.ndarray:
    """Resample the fitted signal block under the stated model.

    ``"ngca"`` draws whole columns i.i.d. with replacement, preserving
    the joint distribution of the signal vector; ``"ngica"`` resamples
    every row independently, preserving only the marginals as an
    independence model implies.  An empty block passes through.
    """
    k, n = S_hat.shape
    if k == 0:
        return S_hat.copy()
    if model == "ngca":
        idx = rng.integers(0, n, size=n)
        return S_hat[:, idx]
    if model == "ngica":
        idx = rng.integers(0, n, size=(k, n))
        return np.take_along_axis(S_hat, idx, axis=1)
    raise ValueError(f"unknown model assumption {model!r}")


def resample_noise(N_hat: np.ndarray, strategy: str, rng: np.random.Generator) -> np.ndarray:
    """Regenerate the fitted noise block as Gaussian-compatible data.

    ``"parametric"`` draws mean-zero Gaussian columns with the
    empirical covariance of ``N_hat`` (near-singular covariances are
    floored at ``1e-10 * trace`` per eigenvalue, with a warning);
    ``"rotation"`` left-multiplies each column by an independent
    Haar-random orthogonal matrix, preserving column norms.
    """
    m, n = N_hat.shape
    if strategy == "parametric":
        C = sample_cov(N_hat) if m >= 2 else np.atleast_2d(np.var(N_hat))
        vals, vecs = np.linalg.eigh(C)
        floor = 1e-10 * max(float(np.trace(C)), np.finfo(float).tiny)
        if np.any(vals < floor):
            warnings.warn(
                "noise covariance nearly singular; flooring eigenvalues",
                RuntimeWarning,
                stacklevel=2,
            )
            vals = np.maximum(vals, floor)
        root = (vecs * np.sqrt(vals)) @ vecs.T
        return root @ rng.standard_normal((m, n))
    if strategy == "rotation":
        G = rng.standard_normal((n, m, m))
        Q, R = np.linalg.qr(G)
        signs = np.sign(np.einsum("nii->ni", R))
        signs[signs == 0.0] = 1.0
        Q = Q * signs[:, None, :]
        return np.einsum("nij,jn->in", Q, N_hat)
    raise ValueError(f"unknown noise strategy {strategy!r}")


def bootstrap_p_value(replicates, observed: float) -> float:
    """Add-one bootstrap p-value ``(#{t* >= t} + 1) / (M + 1)``."""
    replicates = np.asarray(replicates, dtype=float)
    M = replicates.shape[0]
    return float((np.count_nonzero(replicates >= observed) + 1) / (M + 1))


def _statistic_fn(statistic: str):
    return fobi_statistic if statistic == "fobi" else variance_statistic


def _noise_rule(statistic: str) -> str:
    return "closest_to_one" if statistic == "fobi" else "min_variance"


def _replicate_batch(payload, js) -> tuple[list[float], int]:
    """Evaluate bootstrap replicates ``js``; returns (statistics, failures).

    Each replicate draws from its own derived stream
    ``(seed, namespace, j, attempt)``, so results do not depend on how
    replicates are batched across workers.  A replicate whose refit
    fails is retried once on a fresh resample (attempt 1) and dropped
    if that fails too.
    """
    Winv, S_hat, N_hat, pair, k, n, statistic, noise, model, seed = payload
    stat_fn = _statistic_fn(statistic)
    rule = _noise_rule(statistic)
    values: list[float] = []
    failures = 0
    for j in js:
        for attempt in (0, 1):
            rng = derive_rng(seed, NS_BOOT_REPLICATE, j, attempt)
            try:
                S_star = resample_signal(S_hat, model, rng)
                N_star = resample_noise(N_hat, noise, rng)
                X_star = Winv @ np.vstack([S_star, N_star])
                fit = two_scatter_unmixing(X_star, pair, k=k, noise_rule=rule)
                values.append(stat_fn(fit.D, k, n))
                break
            except _SOLVER_ERRORS:
                failures += 1
                if failures >= _MAX_BOOT_FAILURES:
                    return values, failures
        # falls through with the replicate dropped when both attempts failed
    return values, failures


def bootstrap_test(X, k: int, config: BootstrapConfig, *, threads: int | None = None) -> TestOutcome:
    """Bootstrap test of exactly ``k`` non-Gaussian components.

    Fits the unmixing for the configured scatter pair, computes the
    observed statistic, then generates ``config.replicates`` artificial
    samples that satisfy the null (signal block resampled under the
    stated model, noise block regenerated Gaussian or rotated), refits
    the full pipeline on each and recomputes the statistic.  The
    p-value is the add-one exceedance fraction.

    Raises
    ------
    BootstrapFailureError
        When ten replicate refits have failed in total.
    """
    X = as_data_matrix(X)
    p, n = X.shape
    if not 0 <= k <= p - 2:
        raise ValueError(f"bootstrap test needs 0 <= k <= p-2 (got k={k}, p={p})")

    rule = _noise_rule(config.statistic)
    fit = two_scatter_unmixing(X, config.pair, k=k, noise_rule=rule)
    observed = _statistic_fn(config.statistic)(fit.D, k, n)
    Z = latent_components(X, fit)
    S_hat, N_hat = Z[:k], Z[k:]
    Winv = np.linalg.inv(fit.W)

    payload = (
        Winv,
        S_hat,
        N_hat,
        config.pair,
        k,
        n,
        config.statistic,
        config.noise,
        config.model,
        config.seed,
    )
    M = config.replicates
    if threads is None or threads <= 1 or M < 4:
        values, failures = _replicate_batch(payload, range(M))
    else:
        chunks = np.array_split(np.arange(M), min(threads * 2, M))
        values, failures = [], 0
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for vals, fails in pool.map(
                _replicate_batch, [payload] * len(chunks), [c.tolist() for c in chunks]
            ):
                values.extend(vals)
                failures += fails
    if failures >= _MAX_BOOT_FAILURES:
        raise BootstrapFailureError(
            f"bootstrap aborted after {failures} replicate failures", failures=failures
        )
    if failures:
        logger.warning("bootstrap dropped replicates after %d refit failures", failures)

    replicates = np.asarray(values, dtype=float)
    label = config.pair.label if config.statistic == "variance" else "fobi"
    return TestOutcome(
        statistic=float(observed),
        p_value=bootstrap_p_value(replicates, observed),
        k=k,
        method=f"bootstrap[{label}]",
        model=config.model,
        n=n,
        seed=config.seed,
        replicates=replicates,
        failures=failures,
    )
