"""Location and scatter functionals.

Data conventions used throughout the package:

* a data matrix ``X`` has shape ``(p, n)`` with one **column per
  observation**, ``p >= 2`` variables and ``n >= p + 1`` observations;
* the sample covariance uses divisor ``n`` (the functional form
  ``E[(x - E x)(x - E x)']`` applied to the empirical distribution);
* every scatter returned here is symmetric positive semi-definite and
  affine equivariant, ``S(A x + b) = A S(x) A'``.

Besides the classical mean/covariance pair the module provides the
fourth-moment scatter :func:`cov4`, Huber and t-likelihood M-estimators
of location and scatter (:func:`m_estimate`), and symmetrized variants
computed from pairwise differences (:func:`symmetrized_scatter`,
:func:`incomplete_symmetrized_scatter`).  Symmetrized scatters are the
route to the independence property required by unmixing when component
distributions are asymmetric.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular

from ._rng import NS_PAIRING_PERM, derive_rng
from .exceptions import ConvergenceError, DegenerateScatterError

__all__ = [
    "as_data_matrix",
    "mean_location",
    "sample_cov",
    "cov4",
    "WeightSpec",
    "identity_weights",
    "huber_weights",
    "huber_weight_constants",
    "t_weights",
    "m_estimate",
    "m_scatter",
    "symmetrized_scatter",
    "incomplete_symmetrized_scatter",
]

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500


def as_data_matrix(X, *, min_p: int = 2) -> np.ndarray:
    """Validate and return ``X`` as a float ``(p, n)`` data matrix.

    Columns are observations.  Requires ``p >= min_p``, ``n >= p + 1``
    and all entries finite.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"data matrix must be 2-dimensional, got shape {X.shape}")
    p, n = X.shape
    if p < min_p:
        raise ValueError(f"need at least {min_p} variables (rows), got p={p}")
    if n < p + 1:
        raise ValueError(f"need at least p+1={p + 1} observations (columns), got n={n}")
    if not np.all(np.isfinite(X)):
        raise ValueError("data matrix contains non-finite entries")
    return X


def mean_location(X) -> np.ndarray:
    """Sample mean of the columns of ``X``."""
    X = as_data_matrix(X)
    return X.mean(axis=1)


def sample_cov(X) -> np.ndarray:
    """Sample covariance of the columns of ``X`` with divisor ``n``."""
    X = as_data_matrix(X)
    n = X.shape[1]
    Xc = X - X.mean(axis=1, keepdims=True)
    S = (Xc @ Xc.T) / n
    return _symmetrize(S)


def cov4(X) -> np.ndarray:
    """Fourth-moment scatter matrix.

    With ``r`` the Mahalanobis distance of an observation from the mean
    in the metric of the sample covariance,

    ``cov4(X) = E[ r^2 (x - E x)(x - E x)' ] / (p + 2)``

    evaluated on the empirical distribution.  Equals the covariance (and
    hence the identity after whitening) when the data are multivariate
    normal; deviations of its whitened eigenvalues from one measure a
    generalized excess kurtosis per direction.

    Raises
    ------
    DegenerateScatterError
        If the sample covariance is singular, so that whitening is
        impossible.
    """
    X = as_data_matrix(X)
    p, n = X.shape
    Xc = X - X.mean(axis=1, keepdims=True)
    S = (Xc @ Xc.T) / n
    r2 = _mahalanobis_sq(Xc, S)
    S4 = (Xc * r2) @ Xc.T / (n * (p + 2))
    return _symmetrize(S4)


# ---------------------------------------------------------------------------
# M-estimation weights


@dataclass(frozen=True)
class WeightSpec:
    """Weight functions ``(w1, w2)`` for M-estimation of location and scatter.

    ``kind`` is one of ``"identity"``, ``"huber"`` or ``"t"``:

    * ``identity`` -- ``w1 = w2 = 1``; the M-estimate reduces to the
      mean and covariance.
    * ``huber`` -- location weights 1 up to the cutoff ``c`` and ``c/r``
      beyond it; scatter weights ``1/sigma2`` up to ``c`` with a
      ``tail`` beyond it that is either ``c^2/(r^2 sigma2)``
      (``tail="standard"``, the default, continuous at ``c``) or
      ``c/(r^2 sigma2)`` (``tail="paper"``, an alternative convention
      with a jump at the cutoff).  ``c^2`` is the chi-square(p) quantile
      at level ``q`` and ``sigma2`` is the consistency constant making
      the scatter Fisher-consistent at the normal model, i.e. solving
      ``E[Q w2(sqrt(Q))] = p`` for ``Q ~ chi-square(p)``.
    * ``t`` -- ``w1 = w2 = (p + nu)/(r^2 + nu)``, the weights of the
      elliptical t(nu) maximum-likelihood estimator; ``nu = 1`` gives
      the Cauchy M-estimator.

    Huber constants depend on the data dimension; a spec created by
    :func:`huber_weights` is resolved lazily inside :func:`m_estimate`,
    while :func:`huber_weight_constants` resolves one explicitly for a
    given ``p`` (fields ``p``, ``c`` and ``sigma2`` are then set).
    """

    kind: str
    q: float | None = None
    nu: float | None = None
    tail: str = "standard"
    p: int | None = None
    c: float | None = None
    sigma2: float | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "huber", "t"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "huber":
            if self.q is None or not 0.0 < self.q < 1.0:
                raise ValueError("huber weights need a quantile level q in (0, 1)")
            if self.tail not in ("standard", "paper"):
                raise ValueError(f"unknown huber tail convention {self.tail!r}")
        if self.kind == "t":
            if self.nu is None or self.nu < 1.0:
                raise ValueError("t weights need degrees of freedom nu >= 1")

    def label(self) -> str:
        if self.kind == "huber":
            return f"huber(q={self.q:g})"
        if self.kind == "t":
            return f"t(nu={self.nu:g})"
        return "identity"


def identity_weights() -> WeightSpec:
    """Weights of the mean/covariance pair."""
    return WeightSpec(kind="identity")


def t_weights(nu: float = 1.0) -> WeightSpec:
    """t-likelihood weights; the default ``nu = 1`` is the Cauchy M-estimator."""
    return WeightSpec(kind="t", nu=nu)


def huber_weights(q: float = 0.9, tail: str = "standard") -> WeightSpec:
    """Huber weights at quantile level ``q``, constants resolved per dataset."""
    return WeightSpec(kind="huber", q=q, tail=tail)


def huber_weight_constants(q: float, p: int, tail: str = "standard") -> WeightSpec:
    """Resolve Huber weight constants for dimension ``p``.

    Returns a :class:`WeightSpec` with the cutoff ``c`` (``c^2`` the
    chi-square(p) quantile at ``q``) and the consistency constant
    ``sigma2`` filled in.  ``sigma2`` has the closed form
    ``F_{p+2}(c^2) + c^2 (1 - q)/p`` under the standard tail and
    ``F_{p+2}(c^2) + c (1 - q)/p`` under the paper tail, where
    ``F_{p+2}`` is the chi-square(p+2) distribution function.
    """
    if p < 1:
        raise ValueError("dimension p must be at least 1")
    base = WeightSpec(kind="huber", q=q, tail=tail)  # validates q, tail
    c2 = float(stats.chi2.ppf(q, df=p))
    c = math.sqrt(c2)
    head = float(stats.chi2.cdf(c2, df=p + 2))
    if tail == "standard":
        sigma2 = head + c2 * (1.0 - q) / p
    else:
        sigma2 = head + c * (1.0 - q) / p
    return replace(base, p=int(p), c=c, sigma2=sigma2)


def _resolved(spec: WeightSpec, p: int) -> WeightSpec:
    if spec.kind != "huber":
        return spec
    if spec.c is not None:
        if spec.p != p:
            raise ValueError(
                f"huber constants were resolved for p={spec.p}, data has p={p}"
            )
        return spec
    return huber_weight_constants(spec.q, p, spec.tail)


def _weight_values(spec: WeightSpec, r: np.ndarray, p: int):
    """Evaluate ``(w1(r), w2(r))`` for a resolved spec."""
    if spec.kind == "identity":
        ones = np.ones_like(r)
        return ones, ones
    if spec.kind == "t":
        w = (p + spec.nu) / (r * r + spec.nu)
        return w, w
    # huber
    c, sigma2 = spec.c, spec.sigma2
    out = r > c
    w1 = np.ones_like(r)
    np.divide(c, r, out=w1, where=out)
    w2 = np.ones_like(r)
    r2 = r * r
    num = c * c if spec.tail == "standard" else c
    np.divide(num, r2, out=w2, where=out)
    w2 /= sigma2
    return w1, w2


# ---------------------------------------------------------------------------
# M-estimation


def m_estimate(
    X,
    weights: WeightSpec,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    return_info: bool = False,
):
    """M-estimate of location and scatter by fixed-point iteration.

    Starting from the mean and covariance, iterates

    ``T <- sum_i w1(r_i) x_i / sum_i w1(r_i)``
    ``S <- mean_i w2(r_i) (x_i - T)(x_i - T)'``

    where ``r_i`` is the Mahalanobis distance of ``x_i`` from the
    current ``(T, S)``.  Convergence is declared when the maximum of the
    relative Frobenius change in ``S`` and the Euclidean change in ``T``
    (scaled by the root average variance ``sqrt(tr S / p)``) drops
    below ``tol``.

    Parameters
    ----------
    X : array, shape (p, n)
        Data, one observation per column.
    weights : WeightSpec
        Weight functions; see :class:`WeightSpec`.
    tol, max_iter :
        Convergence tolerance and iteration cap.
    return_info : bool
        If true, also return a dict with the iteration count and the
        residual history (useful for convergence diagnostics).

    Returns
    -------
    (T, S) or (T, S, info)
        Location vector and scatter matrix, plus diagnostics when
        requested.

    Raises
    ------
    DegenerateScatterError
        If the scatter iterate loses positive definiteness.
    ConvergenceError
        If ``max_iter`` is exhausted; the last iterate is attached.
    """
    X = as_data_matrix(X)
    p, n = X.shape
    spec = _resolved(weights, p)

    T = X.mean(axis=1)
    Xc = X - T[:, None]
    S = (Xc @ Xc.T) / n

    residuals: list[float] = []
    for it in range(1, max_iter + 1):
        r = np.sqrt(_mahalanobis_sq(X - T[:, None], S))
        w1, w2 = _weight_values(spec, r, p)
        sw1 = w1.sum()
        if sw1 <= 0.0 or not np.isfinite(sw1):
            raise DegenerateScatterError("location weights degenerate in M-iteration")
        T_new = (X @ w1) / sw1
        Xc = X - T_new[:, None]
        S_new = (Xc * w2) @ Xc.T / n
        S_new = _symmetrize(S_new)

        scale = math.sqrt(max(np.trace(S_new), 0.0) / p)
        if scale <= 0.0 or not np.isfinite(scale):
            raise DegenerateScatterError("scatter iterate collapsed in M-iteration")
        ds = np.linalg.norm(S_new - S, "fro") / max(np.linalg.norm(S, "fro"), 1e-300)
        dt = np.linalg.norm(T_new - T) / scale
        residual = max(ds, dt)
        residuals.append(residual)
        T, S = T_new, S_new
        if residual < tol:
            logger.debug("m_estimate converged in %d iterations (%s)", it, spec.label())
            if return_info:
                return T, S, {"iterations": it, "residuals": residuals}
            return T, S

    raise ConvergenceError(
        f"M-estimation ({spec.label()}) did not converge in {max_iter} iterations "
        f"(last residual {residuals[-1]:.3e})",
        location=T,
        scatter=S,
        residual=residuals[-1],
    )


def m_scatter(
    X,
    weights: WeightSpec,
    *,
    location=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """M-scatter with the location held fixed (default: the sample mean).

    Solves ``S = mean_i w2(r_i) (x_i - t)(x_i - t)'`` with ``t`` given,
    iterating only the scatter from the covariance about ``t``.  This is
    the estimator used when the centering functional of a scatter pair
    is the expectation: the weights still downweight distant points, but
    the center they measure distance from is not re-estimated.

    Parameters
    ----------
    X : array, shape (p, n)
        Data, one observation per column.
    weights : WeightSpec
        Weight functions; only ``w2`` is used.
    location : array, shape (p,), optional
        Fixed center; defaults to the sample mean of ``X``.
    tol, max_iter :
        Convergence tolerance (relative Frobenius change) and cap.
    """
    X = as_data_matrix(X)
    p = X.shape[0]
    spec = _resolved(weights, p)
    t = X.mean(axis=1) if location is None else np.asarray(location, dtype=float)
    if t.shape != (p,):
        raise ValueError(f"location must have shape ({p},), got {t.shape}")
    return _m_scatter_origin(X - t[:, None], spec, p, tol=tol, max_iter=max_iter)


def _m_scatter_origin(
    D: np.ndarray,
    spec: WeightSpec,
    p: int,
    *,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    """Scatter-only M fixed point with the location pinned at the origin."""
    N = D.shape[1]
    S = (D @ D.T) / N
    prev = S
    for it in range(1, max_iter + 1):
        r = np.sqrt(_mahalanobis_sq(D, S))
        _, w2 = _weight_values(spec, r, p)
        S = _symmetrize((D * w2) @ D.T / N)
        residual = np.linalg.norm(S - prev, "fro") / max(np.linalg.norm(prev, "fro"), 1e-300)
        prev = S
        if residual < tol:
            logger.debug("origin-pinned M-scatter converged in %d iterations", it)
            return S
    raise ConvergenceError(
        f"origin-pinned M-scatter ({spec.label()}) did not converge in {max_iter} iterations",
        scatter=S,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# Symmetrized scatters


def _scatter_of_differences(D, base, *, tol, max_iter) -> np.ndarray:
    p = D.shape[0]
    if isinstance(base, WeightSpec):
        spec = _resolved(base, p)
        return _m_scatter_origin(D, spec, p, tol=tol, max_iter=max_iter)
    if base == "cov":
        return _symmetrize((D @ D.T) / D.shape[1])
    if base == "cov4":
        N = D.shape[1]
        S = (D @ D.T) / N
        r2 = _mahalanobis_sq(D, S)
        return _symmetrize((D * r2) @ D.T / (N * (p + 2)))
    raise ValueError(f"unknown base scatter {base!r}")


def symmetrized_scatter(
    X,
    base: WeightSpec | str = "cov",
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """Base scatter applied to all pairwise differences of observations.

    The differences ``x_i - x_j`` over the ``n(n-1)/2`` unordered pairs
    are symmetric about the origin by construction, so the base scatter
    is evaluated with its location pinned at zero.  Symmetrizing buys
    the independence property: for data with independent components the
    result is diagonal in population regardless of the components'
    skewness.  Cost grows quadratically in ``n``; see
    :func:`incomplete_symmetrized_scatter` for the subsampled variant.

    ``base`` may be ``"cov"``, ``"cov4"`` or a :class:`WeightSpec`
    describing an M-scatter.
    """
    X = as_data_matrix(X)
    n = X.shape[1]
    i, j = np.triu_indices(n, k=1)
    D = X[:, i] - X[:, j]
    return _scatter_of_differences(D, base, tol=tol, max_iter=max_iter)


def incomplete_symmetrized_scatter(
    X,
    base: WeightSpec | str = "cov",
    d: int = 100,
    *,
    permutation_seed: int | None = 0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """Symmetrized scatter on an incomplete set of pairwise differences.

    Instead of all pairs, uses the ``n * d/2`` cyclic-lag differences
    ``x_i - x_{i+l}`` (indices mod ``n``) for lags ``l = 1 .. d/2``, so
    each observation enters exactly ``d`` differences.  To avoid any
    dependence on the order in which observations were recorded, the
    columns are first shuffled by a permutation drawn from a dedicated
    stream of ``permutation_seed`` (``None`` skips the shuffle; the
    seed is part of the configuration so results are reproducible).

    ``d`` must be even with ``2 <= d < n``.  With ``d = n - 1`` (``n``
    odd) every pair occurs exactly once and the estimate coincides with
    :func:`symmetrized_scatter`.
    """
    X = as_data_matrix(X)
    n = X.shape[1]
    d = int(d)
    if d < 2 or d >= n or d % 2 != 0:
        raise ValueError(f"pairing degree d must be even with 2 <= d < n, got d={d}, n={n}")
    if permutation_seed is not None:
        perm = derive_rng(permutation_seed, NS_PAIRING_PERM).permutation(n)
        X = X[:, perm]
    i, j = _cyclic_pair_indices(n, d)
    D = X[:, i] - X[:, j]
    return _scatter_of_differences(D, base, tol=tol, max_iter=max_iter)


def _cyclic_pair_indices(n: int, d: int):
    """Index pairs (i, j) of the cyclic-lag difference set, lags 1..d/2."""
    base = np.arange(n)
    i = np.concatenate([base for _ in range(d // 2)])
    j = np.concatenate([(base + lag) % n for lag in range(1, d // 2 + 1)])
    return i, j


# ---------------------------------------------------------------------------
# shared helpers


def _symmetrize(S: np.ndarray) -> np.ndarray:
    return (S + S.T) * 0.5


def _mahalanobis_sq(Xc: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis norms of the columns of ``Xc`` in the metric of ``S``."""
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise DegenerateScatterError(
            "scatter matrix is not positive definite; whitening impossible"
        ) from None
    Z = solve_triangular(L, Xc, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", Z, Z)
