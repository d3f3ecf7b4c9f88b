"""Location/scatter functionals against independent oracles.

Oracles used here:
  * chi-squared quantiles and numerical integration (scipy) for the
    Huber tuning constants;
  * explicit enumeration of pairwise/lagged differences for the
    symmetrized estimators;
  * closed-form moment identities (Gaussian fourth moments, uniform
    kurtosis) for cov4;
  * direct evaluation of the defining fixed-point equations for the
    M-estimators.
"""

from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate, stats

import ngdim
from ngdim import (
    ConvergenceError,
    cov4,
    huber_weight_constants,
    huber_weights,
    identity_weights,
    incomplete_symmetrized_scatter,
    m_estimate,
    m_scatter,
    mean_location,
    sample_cov,
    symmetrized_scatter,
    t_weights,
)

from conftest import max_abs, random_full_rank


# ---------------------------------------------------------------------------
# mean / covariance
# ---------------------------------------------------------------------------


def test_mean_location_small_example():
    X = np.array([[0.0, 2.0, 1.0], [0.0, 0.0, 0.0]])
    assert np.allclose(mean_location(X), [1.0, 0.0])


def test_too_few_observations_rejected():
    # the data-matrix contract requires n >= p + 1
    with pytest.raises(ValueError):
        mean_location(np.zeros((2, 2)))


def test_mean_location_constant_data():
    v = np.array([3.0, -1.0, 2.5])
    X = np.tile(v[:, None], (1, 17))
    assert np.allclose(mean_location(X), v)


def test_mean_location_gaussian_clt(rng):
    n = 100_000
    X = rng.standard_normal((3, n))
    assert max_abs(mean_location(X)) < 0.02


def test_sample_cov_divisor_n():
    X = np.array([[0.0, 2.0, 4.0], [0.0, 0.0, 0.0]])
    # mean (2, 0); squared deviations 4, 0, 4 -> divisor n gives 8/3
    assert np.allclose(sample_cov(X), [[8.0 / 3.0, 0.0], [0.0, 0.0]])


def test_sample_cov_affine_equivariance_exact(rng):
    Z = rng.standard_normal((3, 40))
    A = random_full_rank(3, rng)
    b = rng.standard_normal(3)
    X = A @ Z + b[:, None]
    assert np.allclose(sample_cov(X), A @ sample_cov(Z) @ A.T, atol=1e-12)


def test_sample_cov_monte_carlo(rng):
    n = 100_000
    X = np.sqrt([1.0, 4.0])[:, None] * rng.standard_normal((2, n))
    S = sample_cov(X)
    assert abs(S[0, 0] - 1.0) < 0.1
    assert abs(S[1, 1] - 4.0) < 0.1


# ---------------------------------------------------------------------------
# cov4
# ---------------------------------------------------------------------------


def test_cov4_gaussian_population_identity(rng):
    n = 200_000
    X = rng.standard_normal((4, n))
    assert max_abs(cov4(X) - np.eye(4)) < 0.03


def test_cov4_uniform_gaussian_kurtosis_eigenvalues(rng):
    # For an independent standardized coordinate with kurtosis kappa,
    # the corresponding eigenvalue is (kappa + p - 1) / (p + 2):
    # uniform (kappa = 9/5) -> 0.7 at p = 2, Gaussian -> 1.
    n = 1_000_000
    u = rng.uniform(-np.sqrt(3), np.sqrt(3), n)
    g = rng.standard_normal(n)
    X = np.vstack([u, g])
    d = np.sort(np.linalg.eigvalsh(cov4(ngdim.whiten(X, mean_location(X), sample_cov(X))[0])))
    assert abs(d[0] - 0.7) < 0.01
    assert abs(d[1] - 1.0) < 0.01


def test_cov4_affine_equivariance(rng):
    Z = rng.standard_normal((3, 500))
    A = random_full_rank(3, rng)
    X = A @ Z
    assert max_abs(cov4(X) - A @ cov4(Z) @ A.T) < 1e-8 * max_abs(cov4(X))


def test_cov4_singular_covariance_errors(rng):
    X = np.zeros((2, 30))
    X[0] = rng.standard_normal(30)  # second row constant -> singular cov
    with pytest.raises(ngdim.DegenerateScatterError, match="whitening impossible"):
        cov4(X)


# ---------------------------------------------------------------------------
# Huber tuning constants
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("q,p", [(0.7, 6), (0.9, 3), (0.5, 1), (0.95, 9)])
def test_huber_cutoff_matches_chi2_quantile(q, p):
    w = huber_weight_constants(q, p)
    assert w.c**2 == pytest.approx(stats.chi2.ppf(q, df=p), rel=1e-12)


def test_huber_cutoff_median_chi2_1():
    w = huber_weight_constants(0.5, 1)
    assert w.c**2 == pytest.approx(0.45493642311957, rel=1e-8)


def _w2(weights, r, p=None):
    """Scatter weight function implied by a WeightSpec."""
    r = np.asarray(r, dtype=float)
    if weights.kind == "huber":
        c = weights.c
        head = np.where(r <= c, 1.0, 0.0)
        if weights.tail == "paper":
            tail = np.where(r > c, c / np.maximum(r, 1e-300) ** 2, 0.0)
        else:
            tail = np.where(r > c, c**2 / np.maximum(r, 1e-300) ** 2, 0.0)
        return (head + tail) / weights.sigma2
    if weights.kind == "t":
        nu = weights.nu
        dim = weights.p if weights.p is not None else p
        return (dim + nu) / (nu + r**2)
    return np.ones_like(r)


@pytest.mark.parametrize("tail", ["standard", "paper"])
@pytest.mark.parametrize("q,p", [(0.9, 6), (0.7, 3)])
def test_huber_sigma2_consistency_integral(q, p, tail):
    # sigma^2 is defined so that E(Q * w2(sqrt(Q))) = p for Q ~ chi2_p,
    # making the estimator Fisher-consistent at the Gaussian.
    w = huber_weight_constants(q, p, tail=tail)
    fn = lambda t: t * _w2(w, np.sqrt(t)) * stats.chi2.pdf(t, df=p)
    # split at the cutoff where the weight switches branches
    lo, e1 = integrate.quad(fn, 0, w.c**2, limit=200)
    hi, e2 = integrate.quad(fn, w.c**2, np.inf, limit=200)
    assert e1 + e2 < 1e-7
    assert lo + hi == pytest.approx(p, abs=1e-6)


def test_huber_q_to_one_degenerates_to_cov():
    w = huber_weight_constants(1 - 1e-12, 4)
    assert w.sigma2 == pytest.approx(1.0, abs=1e-6)
    # cutoff grows without bound as q -> 1, so effectively no trimming
    assert w.c > huber_weight_constants(0.99, 4).c > huber_weight_constants(0.9, 4).c


@pytest.mark.parametrize("q", [0.0, 1.0, -0.2, 1.5])
def test_huber_q_out_of_range(q):
    with pytest.raises(ValueError):
        huber_weight_constants(q, 3)


def test_weight_spec_constructors():
    assert huber_weights(0.9).kind == "huber"
    assert t_weights(1.0).kind == "t"
    assert identity_weights().kind == "identity"
    with pytest.raises(ValueError):
        t_weights(0.5)  # nu >= 1 required


# ---------------------------------------------------------------------------
# M-estimation
# ---------------------------------------------------------------------------


def test_m_estimate_identity_weights_gives_mean_cov(rng):
    X = rng.standard_normal((3, 50)) + 2.0
    T, S = m_estimate(X, identity_weights())
    assert np.allclose(T, mean_location(X), atol=1e-12)
    assert np.allclose(S, sample_cov(X), atol=1e-12)


def _fixed_point_residual(X, weights, T, S):
    """Directly evaluate the defining implicit equations at (T, S)."""
    p = X.shape[0]
    if weights.kind == "huber" and weights.c is None:
        weights = huber_weight_constants(weights.q, p, tail=weights.tail)
    Xc = X - T[:, None]
    root_inv = np.linalg.inv(np.linalg.cholesky(S))
    r = np.sqrt(np.sum((root_inv @ Xc) ** 2, axis=0))
    if weights.kind == "huber":
        w1 = np.minimum(1.0, weights.c / np.maximum(r, 1e-300))
    elif weights.kind == "t":
        w1 = (p + weights.nu) / (weights.nu + r**2)
    else:
        w1 = np.ones_like(r)
    w2 = _w2(weights, r, p=p)
    T_new = (w1 * X).sum(axis=1) / w1.sum()
    S_new = (w2 * Xc) @ Xc.T / X.shape[1]
    return max(max_abs(T_new - T), max_abs(S_new - S))


@pytest.mark.parametrize("weights", [huber_weights(0.9), t_weights(1.0)])
def test_m_estimate_satisfies_fixed_point_equations(rng, weights):
    X = rng.standard_normal((3, 800))
    T, S = m_estimate(X, weights)
    assert _fixed_point_residual(X, weights, T, S) < 5e-5


@pytest.mark.parametrize("weights", [huber_weights(0.9), t_weights(1.0)])
def test_m_estimate_affine_equivariance(rng, weights):
    Z = rng.standard_normal((3, 600))
    A = random_full_rank(3, rng)
    b = rng.standard_normal(3)
    T0, S0 = m_estimate(Z, weights)
    T1, S1 = m_estimate(A @ Z + b[:, None], weights)
    assert max_abs(T1 - (A @ T0 + b)) < 1e-4
    assert max_abs(S1 - A @ S0 @ A.T) < 1e-4 * max(1.0, max_abs(S1))


def test_m_scatter_identity_weights_gives_cov(rng):
    X = rng.standard_normal((3, 60)) - 1.5
    S = m_scatter(X, identity_weights())
    assert np.allclose(S, sample_cov(X), atol=1e-12)


@pytest.mark.parametrize("weights", [huber_weights(0.9), t_weights(1.0)])
def test_m_scatter_fixed_point_at_mean(rng, weights):
    X = rng.standard_normal((3, 800)) + np.array([[2.0], [0.0], [-1.0]])
    S = m_scatter(X, weights)
    T = mean_location(X)
    # the scatter equation must hold with the center frozen at the mean
    w = weights
    if w.kind == "huber" and w.c is None:
        w = huber_weight_constants(w.q, 3, tail=w.tail)
    Xc = X - T[:, None]
    root_inv = np.linalg.inv(np.linalg.cholesky(S))
    r = np.sqrt(np.sum((root_inv @ Xc) ** 2, axis=0))
    S_new = (_w2(w, r, p=3) * Xc) @ Xc.T / X.shape[1]
    assert max_abs(S_new - S) < 5e-5


def test_m_scatter_gaussian_consistency(rng):
    X = rng.standard_normal((4, 60000))
    S = m_scatter(X, huber_weights(0.9))
    assert max_abs(S - np.eye(4)) < 0.05


@pytest.mark.parametrize("weights", [huber_weights(0.9), t_weights(1.0)])
def test_m_scatter_affine_equivariance(rng, weights):
    Z = rng.standard_normal((3, 600))
    A = random_full_rank(3, rng)
    b = rng.standard_normal(3)
    S0 = m_scatter(Z, weights)
    S1 = m_scatter(A @ Z + b[:, None], weights)
    assert max_abs(S1 - A @ S0 @ A.T) < 1e-4 * max(1.0, max_abs(S1))


def test_m_scatter_explicit_location(rng):
    X = rng.standard_normal((3, 400))
    S_default = m_scatter(X, t_weights(1.0))
    S_explicit = m_scatter(X, t_weights(1.0), location=X.mean(axis=1))
    assert np.allclose(S_default, S_explicit, atol=1e-12)
    with pytest.raises(ValueError, match="location"):
        m_scatter(X, t_weights(1.0), location=np.zeros(4))


def test_cauchy_weights_resist_point_contamination(rng):
    n = 2000
    X = rng.standard_normal((3, n))
    Xc = X.copy()
    idx = rng.choice(n, size=n // 100, replace=False)
    Xc[:, idx] += 100.0

    _, S_rob_clean = m_estimate(X, t_weights(1.0))
    _, S_rob_cont = m_estimate(Xc, t_weights(1.0))
    rob_change = max_abs(S_rob_cont - S_rob_clean) / max_abs(S_rob_clean)
    cov_change = max_abs(sample_cov(Xc) - sample_cov(X)) / max_abs(sample_cov(X))
    assert rob_change < 0.05
    assert cov_change > 0.5


def test_m_estimate_non_convergence_error(rng):
    X = rng.standard_normal((3, 200))
    with pytest.raises(ConvergenceError) as exc:
        m_estimate(X, huber_weights(0.9), tol=1e-14, max_iter=2)
    # the error carries the last iterate and residual for diagnosis
    assert exc.value.residual > 0
    assert exc.value.scatter is not None


def test_m_estimate_return_info_monotone_tail(rng):
    # Fixed-point residuals should not increase over the final few
    # iterations on well-behaved data.
    X = rng.standard_normal((4, 2000))
    _, _, info = m_estimate(X, huber_weights(0.9), return_info=True)
    res = info["residuals"]
    tail = res[-5:]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(tail, tail[1:]))


# ---------------------------------------------------------------------------
# symmetrized scatters
# ---------------------------------------------------------------------------


def test_symmetrized_cov_identity(rng):
    # Covariance of pairwise differences about the origin equals
    # 2n/(n-1) times the sample covariance (exact algebraic identity).
    n = 25
    X = rng.standard_normal((3, n))
    S = symmetrized_scatter(X, "cov")
    assert np.allclose(S, 2 * n / (n - 1) * sample_cov(X), atol=1e-10)


def _all_differences(X):
    p, n = X.shape
    cols = [X[:, i] - X[:, j] for i in range(n) for j in range(i + 1, n)]
    return np.array(cols).T


def test_symmetrized_brute_force_oracle(rng):
    n, p = 20, 3
    X = rng.standard_normal((p, n))
    diffs = _all_differences(X)
    assert diffs.shape == (p, n * (n - 1) // 2)

    # base = cov about the origin on the materialized differences
    S = symmetrized_scatter(X, "cov")
    assert np.allclose(S, diffs @ diffs.T / diffs.shape[1], atol=1e-10)

    # base = Huber M-scatter about the origin on the same differences
    S_h = symmetrized_scatter(X, huber_weights(0.9))
    w = huber_weight_constants(0.9, p)
    res = _m_scatter_origin_residual(diffs, w, S_h)
    assert res < 5e-5


def _m_scatter_origin_residual(Y, weights, S):
    if weights.kind == "huber" and weights.c is None:
        weights = huber_weight_constants(weights.q, Y.shape[0], tail=weights.tail)
    root_inv = np.linalg.inv(np.linalg.cholesky(S))
    r = np.sqrt(np.sum((root_inv @ Y) ** 2, axis=0))
    S_new = (_w2(weights, r, p=Y.shape[0]) * Y) @ Y.T / Y.shape[1]
    return max_abs(S_new - S)


def test_symmetrized_shift_invariance(rng):
    X = rng.standard_normal((2, 15))
    b = np.array([5.0, -3.0])
    assert np.allclose(
        symmetrized_scatter(X, "cov"),
        symmetrized_scatter(X + b[:, None], "cov"),
        atol=1e-10,
    )


def test_incomplete_lag_enumeration_oracle(rng):
    # d = 4 on n = 12 points: differences at cyclic lags 1 and 2, in the
    # given column order when no permutation is applied.
    n, p, d = 12, 2, 4
    X = rng.standard_normal((p, n))
    cols = []
    for lag in (1, 2):
        for i in range(n):
            cols.append(X[:, i] - X[:, (i + lag) % n])
    diffs = np.array(cols).T
    assert diffs.shape == (p, 24)
    S = incomplete_symmetrized_scatter(X, "cov", d=d, permutation_seed=None)
    assert np.allclose(S, diffs @ diffs.T / diffs.shape[1], atol=1e-10)


def test_incomplete_full_lags_equals_complete(rng):
    # With n odd and d = n - 1 the cyclic lag set covers every pair.
    n = 11
    X = rng.standard_normal((3, n))
    a = incomplete_symmetrized_scatter(X, "cov", d=n - 1, permutation_seed=None)
    b = symmetrized_scatter(X, "cov")
    assert np.allclose(a, b, atol=1e-10)


def test_incomplete_permutation_is_deterministic(rng):
    X = rng.standard_normal((2, 30))
    a = incomplete_symmetrized_scatter(X, "cov", d=6, permutation_seed=3)
    b = incomplete_symmetrized_scatter(X, "cov", d=6, permutation_seed=3)
    assert np.array_equal(a, b)


def test_incomplete_shift_invariance(rng):
    X = rng.standard_normal((2, 20))
    b = np.array([-2.0, 7.0])
    assert np.allclose(
        incomplete_symmetrized_scatter(X, "cov", d=8),
        incomplete_symmetrized_scatter(X + b[:, None], "cov", d=8),
        atol=1e-10,
    )


@pytest.mark.parametrize("d", [3, 0, 30, 40])
def test_incomplete_d_validation(rng, d):
    X = rng.standard_normal((2, 30))
    with pytest.raises(ValueError):
        incomplete_symmetrized_scatter(X, "cov", d=d)


# ---------------------------------------------------------------------------
# structural properties across all implemented scatters
# ---------------------------------------------------------------------------


def _scatter_callables():
    return {
        "cov": lambda X: sample_cov(X),
        "cov4": lambda X: cov4(X),
        "hub": lambda X: m_estimate(X, huber_weights(0.9))[1],
        "cau": lambda X: m_estimate(X, t_weights(1.0))[1],
        "scau": lambda X: symmetrized_scatter(X, t_weights(1.0)),
        "scaui": lambda X: incomplete_symmetrized_scatter(X, t_weights(1.0), d=100),
    }


@pytest.mark.parametrize("name", list(_scatter_callables()))
def test_scatter_symmetric_psd(rng, name):
    X = rng.standard_normal((4, 400))
    S = _scatter_callables()[name](X)
    assert max_abs(S - S.T) < 1e-10 * max(1.0, max_abs(S))
    eig = np.linalg.eigvalsh(S)
    assert eig.min() >= -1e-10 * eig.max()


@pytest.mark.parametrize("name", ["hub", "cau", "scau", "scaui"])
def test_m_scatter_affine_equivariance(rng, name):
    Z = rng.standard_normal((3, 400))
    A = random_full_rank(3, rng)
    b = rng.standard_normal(3)
    fn = _scatter_callables()[name]
    S0 = fn(Z)
    S1 = fn(A @ Z + b[:, None])
    assert max_abs(S1 - A @ S0 @ A.T) < 2e-4 * max(1.0, max_abs(S1))


@pytest.mark.parametrize(
    "name,n",
    [("cov", 100_000), ("cov4", 100_000), ("hub", 100_000), ("cau", 100_000),
     ("scau", 4000), ("scaui", 100_000)],
)
def test_block_independence_symmetric_second_block(name, n):
    # Independent blocks, second block symmetric: every implemented
    # scatter is block-diagonal up to sampling error of order 1/sqrt(n).
    gen = np.random.default_rng(5150 + n)
    block1 = gen.uniform(-np.sqrt(3), np.sqrt(3), (2, n))
    block2 = gen.standard_normal((2, n))
    X = np.vstack([block1, block2])
    S = _scatter_callables()[name](X)
    off = S[:2, 2:]
    scale = np.sqrt(np.abs(np.diag(S)[:2, None] * np.diag(S)[None, 2:]))
    assert max_abs(off / scale) < 5 / np.sqrt(n)


@pytest.mark.parametrize("name,n", [("scau", 4000), ("scaui", 50_000)])
def test_symmetrized_full_independence_skewed_blocks(name, n):
    # Symmetrized scatters stay block-diagonal for independent blocks
    # even when a block is skewed (no symmetry assumption needed).
    gen = np.random.default_rng(777)
    skewed = (gen.chisquare(1, (2, n)) - 1) / np.sqrt(2)
    sym = gen.standard_normal((2, n))
    X = np.vstack([skewed, sym])
    S = _scatter_callables()[name](X)
    off = S[:2, 2:]
    scale = np.sqrt(np.abs(np.diag(S)[:2, None] * np.diag(S)[None, 2:]))
    assert max_abs(off / scale) < 5 / np.sqrt(n)
