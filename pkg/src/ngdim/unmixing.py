"""Two-scatter unmixing.

Standardize the data with one scatter, diagonalize a second scatter of
the standardized data, and read the eigenvectors back as an unmixing
matrix ``W`` with ``W S1 W' = I`` and ``W S2' W'`` diagonal.  The
eigenvalues ``D`` act as generalized kurtosis values per recovered
component: components whose values separate from the common noise value
span the non-Gaussian part of the data.

A :class:`ScatterPairSpec` configures which location/scatter functionals
make up the pair; :func:`scatter_pair` builds the named combinations
used throughout (``cov-cov4``, ``cau-hub``, ``scau-shub``,
``scaui-shubi``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import scatter as sc
from .exceptions import WhiteningError

__all__ = [
    "ScatterKind",
    "ScatterPairSpec",
    "scatter_pair",
    "PAIR_LABELS",
    "whiten",
    "two_scatter_unmixing",
    "order_for_partition",
    "order_for_known_noise",
    "latent_components",
    "UnmixingResult",
]

_SING_REL = 1e-12  # relative eigenvalue threshold below which whitening fails


@dataclass(frozen=True)
class ScatterKind:
    """One scatter functional: ``"cov"``, ``"cov4"`` or an M-estimator ``"m"``."""

    kind: str
    weights: sc.WeightSpec | None = None

    def __post_init__(self):
        if self.kind not in ("cov", "cov4", "m"):
            raise ValueError(f"unknown scatter kind {self.kind!r}")
        if self.kind == "m" and self.weights is None:
            raise ValueError("M-scatter needs a WeightSpec")
        if self.kind != "m" and self.weights is not None:
            raise ValueError(f"scatter kind {self.kind!r} takes no weights")

    def label(self) -> str:
        return f"m[{self.weights.label()}]" if self.kind == "m" else self.kind


@dataclass(frozen=True)
class ScatterPairSpec:
    """Configuration of the scatter pair driving the unmixing.

    Parameters
    ----------
    s1, s2 : ScatterKind
        The standardizing scatter and the scatter diagonalized after
        standardization.  They must differ as configured functionals.
    location : str
        Centering functional for the pipeline: the vector the data are
        shifted by before standardization and in the recovered
        components.  ``"mean"`` (default) centers at the sample mean;
        ``"s1"`` centers at the location estimated jointly with an
        M-type ``s1`` (falls back to the mean when ``s1`` has no own
        location, e.g. symmetrized kinds).  M-type scatters themselves
        are always the full location/scatter fixed points about their
        own estimated centers; this choice only sets the reported
        centering, which scatter equivariance keeps out of the
        kurtosis values.
    symmetrization : str
        ``"none"``, ``"complete"`` (all pairwise differences) or
        ``"incomplete"`` (cyclic-lag differences of degree
        ``pairing_d`` after a seeded column shuffle).  Applies to both
        scatters of the pair.
    pairing_d, pairing_seed :
        Degree and shuffle seed of the incomplete pairing.
    tol, max_iter :
        Fixed-point solver controls for M-type scatters.
    label : str
        Optional display name used in reports.
    """

    s1: ScatterKind
    s2: ScatterKind
    location: str = "mean"
    symmetrization: str = "none"
    pairing_d: int = 100
    pairing_seed: int | None = 0
    tol: float = sc.DEFAULT_TOL
    max_iter: int = sc.DEFAULT_MAX_ITER
    label: str = ""

    def __post_init__(self):
        if self.location not in ("mean", "s1"):
            raise ValueError(f"unknown location kind {self.location!r}")
        if self.symmetrization not in ("none", "complete", "incomplete"):
            raise ValueError(f"unknown symmetrization mode {self.symmetrization!r}")
        if (self.s1.kind, self.s1.weights) == (self.s2.kind, self.s2.weights):
            raise ValueError("s1 and s2 must be different scatter functionals")
        if not self.label:
            object.__setattr__(self, "label", f"{self.s1.label()}/{self.s2.label()}")


PAIR_LABELS = ("cov-cov4", "cau-hub", "scau-shub", "scaui-shubi")


def scatter_pair(
    name: str,
    *,
    pairing_d: int = 100,
    pairing_seed: int | None = 0,
    huber_q: float = 0.9,
    huber_tail: str = "standard",
    t_nu: float = 1.0,
    tol: float = sc.DEFAULT_TOL,
    max_iter: int = sc.DEFAULT_MAX_ITER,
) -> ScatterPairSpec:
    """Build one of the named scatter pairs.

    ``cov-cov4``
        Covariance and fourth-moment scatter; the classical
        moment-based pair (also the pair behind the ``fobi`` method
        label).
    ``cau-hub``
        Cauchy M-scatter (t weights, ``nu = t_nu``) and Huber M-scatter
        at quantile ``huber_q``; robust to heavy tails and outliers.
    ``scau-shub``
        The same M-scatters symmetrized over all pairwise differences;
        adds the independence property for asymmetric components.
    ``scaui-shubi``
        Incompletely symmetrized variant of degree ``pairing_d``.
    """
    key = name.lower()
    if key in ("cov-cov4", "fobi"):
        return ScatterPairSpec(
            s1=ScatterKind("cov"),
            s2=ScatterKind("cov4"),
            tol=tol,
            max_iter=max_iter,
            label="cov-cov4",
        )
    cau = ScatterKind("m", sc.t_weights(t_nu))
    hub = ScatterKind("m", sc.huber_weights(huber_q, huber_tail))
    if key == "cau-hub":
        return ScatterPairSpec(s1=cau, s2=hub, tol=tol, max_iter=max_iter, label="cau-hub")
    if key == "scau-shub":
        return ScatterPairSpec(
            s1=cau,
            s2=hub,
            symmetrization="complete",
            tol=tol,
            max_iter=max_iter,
            label="scau-shub",
        )
    if key == "scaui-shubi":
        return ScatterPairSpec(
            s1=cau,
            s2=hub,
            symmetrization="incomplete",
            pairing_d=pairing_d,
            pairing_seed=pairing_seed,
            tol=tol,
            max_iter=max_iter,
            label=f"scaui-shubi({pairing_d})",
        )
    raise ValueError(f"unknown scatter pair {name!r}; expected one of {PAIR_LABELS}")


@dataclass
class UnmixingResult:
    """Fitted unmixing.

    Attributes
    ----------
    W : array, shape (p, p)
        Unmixing matrix; rows are component extractors, each row's
        largest-magnitude entry is positive.
    D : array, shape (p,)
        Generalized kurtosis values, one per row of ``W``.
    location : array, shape (p,)
        Centering vector.
    ordering : array of int, shape (p,)
        Permutation applied to the initially eigenvalue-descending
        components (identity when no partition was requested).
    noise_index : int or None
        First row index of the presumed-noise block; rows ``0 ..
        noise_index - 1`` are the signal block.  ``None`` when no
        partition was requested.
    """

    W: np.ndarray
    D: np.ndarray
    location: np.ndarray
    ordering: np.ndarray
    noise_index: int | None = None


def whiten(X, location, scatter):
    """Standardize ``X`` by a location vector and the symmetric inverse
    square root of a scatter matrix.

    Returns ``(X_st, R)`` with ``X_st = R (X - location)`` and
    ``R = scatter^(-1/2)`` computed from the eigendecomposition (so the
    root is symmetric, not a Cholesky factor).

    Raises
    ------
    WhiteningError
        If the scatter is singular or near-singular (smallest
        eigenvalue below ``1e-12`` of the largest); the condition
        number is attached.
    """
    X = np.asarray(X, dtype=float)
    location = np.asarray(location, dtype=float)
    scatter = np.asarray(scatter, dtype=float)
    vals, vecs = np.linalg.eigh(scatter)
    top = vals[-1]
    if top <= 0.0 or vals[0] <= _SING_REL * top:
        cond = float("inf") if vals[0] <= 0.0 else float(top / vals[0])
        raise WhiteningError(
            f"whitening impossible: scatter is singular or near-singular "
            f"(condition number {cond:.3e})",
            condition_number=cond,
        )
    R = (vecs / np.sqrt(vals)) @ vecs.T
    return R @ (X - location[:, None]), R


def _evaluate_scatter(X, kind: ScatterKind, pair: ScatterPairSpec) -> np.ndarray:
    base = kind.weights if kind.kind == "m" else kind.kind
    if pair.symmetrization == "complete":
        return sc.symmetrized_scatter(X, base, tol=pair.tol, max_iter=pair.max_iter)
    if pair.symmetrization == "incomplete":
        return sc.incomplete_symmetrized_scatter(
            X,
            base,
            d=pair.pairing_d,
            permutation_seed=pair.pairing_seed,
            tol=pair.tol,
            max_iter=pair.max_iter,
        )
    if kind.kind == "cov":
        return sc.sample_cov(X)
    if kind.kind == "cov4":
        return sc.cov4(X)
    _, S = sc.m_estimate(X, kind.weights, tol=pair.tol, max_iter=pair.max_iter)
    return S


def _fit_location_and_s1(X, pair: ScatterPairSpec):
    """Location vector and standardizing scatter for the pair."""
    if (
        pair.location == "s1"
        and pair.s1.kind == "m"
        and pair.symmetrization == "none"
    ):
        T, S1 = sc.m_estimate(X, pair.s1.weights, tol=pair.tol, max_iter=pair.max_iter)
        return T, S1
    return sc.mean_location(X), _evaluate_scatter(X, pair.s1, pair)


def two_scatter_unmixing(
    X,
    pair: ScatterPairSpec,
    k: int | None = None,
    *,
    noise_rule: str = "min_variance",
) -> UnmixingResult:
    """Fit the two-scatter unmixing for a configured pair.

    Components come out ordered by decreasing kurtosis value ``D``.
    When a candidate signal count ``k`` is given, the rows are
    re-ordered so the presumed noise block sits last: the noise block is
    the ``p - k`` values of minimum variance (``noise_rule =
    "min_variance"``) or the ``p - k`` values closest to the known
    noise value one (``noise_rule = "closest_to_one"``, appropriate for
    the cov-cov4 pair whose Gaussian value is exactly one).
    """
    X = sc.as_data_matrix(X)
    p = X.shape[0]
    if k is not None and not 0 <= k <= p - 1:
        raise ValueError(f"candidate signal count k={k} out of range 0..{p - 1}")

    T, S1 = _fit_location_and_s1(X, pair)
    X_st, R = whiten(X, T, S1)
    S2 = _evaluate_scatter(X_st, pair.s2, pair)

    vals, vecs = np.linalg.eigh(S2)
    desc = np.argsort(-vals, kind="stable")
    D = np.maximum(vals[desc], 0.0)
    W = vecs[:, desc].T @ R

    if k is None:
        ordering = np.arange(p)
        noise_index = None
    else:
        if noise_rule == "min_variance":
            ordering, _ = order_for_partition(D, k)
        elif noise_rule == "closest_to_one":
            ordering, _ = order_for_known_noise(D, k)
        else:
            raise ValueError(f"unknown noise rule {noise_rule!r}")
        D = D[ordering]
        W = W[ordering]
        noise_index = k

    # sign convention: make each row's largest-magnitude entry positive
    flip = W[np.arange(p), np.abs(W).argmax(axis=1)] < 0
    W[flip] *= -1.0

    return UnmixingResult(W=W, D=D, location=T, ordering=ordering, noise_index=noise_index)


def order_for_partition(D, k: int):
    """Partition kurtosis values into k signals and a minimum-variance noise block.

    Among all subsets of size ``p - k`` the noise block is the one with
    the smallest sum of squared deviations from its own mean.  Such a
    subset is always contiguous in sorted order, so only the ``k + 1``
    sorted windows need to be scanned.  Ties go to the subset whose mean
    is closest to the overall median, then to the lowest sorted
    positions.  Both numeric criteria are rounded to 12 decimals before
    comparison so that algebraically tied subsets compare equal even
    when their sums of squares were accumulated in different orders.
    When the winning window starts inside a run of duplicated values,
    the lowest-position rule selects the earliest copies of that value,
    which live just left of the window.

    Returns
    -------
    (ordering, noise_subset)
        ``ordering``: indices into ``D`` placing the ``k`` signal
        values first in decreasing order, then the noise block (also
        decreasing).  ``noise_subset``: sorted indices of the noise
        block in ``D``.
    """
    D = np.asarray(D, dtype=float)
    p = D.shape[0]
    if not 0 <= k <= p - 2:
        raise ValueError(f"signal count k={k} out of range 0..{p - 2}")
    m = p - k

    order = np.argsort(D, kind="stable")
    vals = D[order]
    med = float(np.median(D))

    csum = np.concatenate([[0.0], np.cumsum(vals)])
    csum2 = np.concatenate([[0.0], np.cumsum(vals * vals)])
    best = None
    for i in range(k + 1):
        s = csum[i + m] - csum[i]
        s2 = csum2[i + m] - csum2[i]
        sse = s2 - s * s / m
        key = (round(sse, 12), round(abs(s / m - med), 12), i)
        if best is None or key < best[0]:
            best = (key, i)
    i = best[1]

    if i > 0 and vals[i - 1] == vals[i]:
        # exact copies of the window minimum extend left of the window;
        # the earliest copies have the lowest sorted positions
        first = int(np.searchsorted(vals, vals[i], side="left"))
        inside = int(np.searchsorted(vals[i : i + m], vals[i], side="right"))
        ranks = np.concatenate(
            [np.arange(first, first + inside), np.arange(i + inside, i + m)]
        )
    else:
        ranks = np.arange(i, i + m)
    noise_sorted_pos = order[ranks]
    signal_sorted_pos = order[np.setdiff1d(np.arange(p), ranks)]
    ordering = np.concatenate([signal_sorted_pos[::-1], noise_sorted_pos[::-1]])
    return ordering.astype(int), np.sort(noise_sorted_pos).astype(int)


def order_for_known_noise(D, k: int):
    """Partition with the noise block taken as the values closest to one.

    Selection is by squared distance ``(d - 1)^2`` (rounded to 12
    decimals so that symmetric values compare equal) with ties broken
    toward the smaller value.  Returns the same ``(ordering,
    noise_subset)`` structure as :func:`order_for_partition`.
    """
    D = np.asarray(D, dtype=float)
    p = D.shape[0]
    if not 0 <= k <= p - 1:
        raise ValueError(f"signal count k={k} out of range 0..{p - 1}")
    m = p - k
    closeness = np.lexsort((D, np.round((D - 1.0) ** 2, 12)))
    noise_pos = closeness[:m]
    mask = np.zeros(p, dtype=bool)
    mask[noise_pos] = True
    signal_pos = np.flatnonzero(~mask)

    def desc(idx):
        return idx[np.argsort(D[idx], kind="stable")][::-1]

    ordering = np.concatenate([desc(signal_pos), desc(noise_pos)])
    return ordering.astype(int), np.sort(noise_pos).astype(int)


def latent_components(X, result: UnmixingResult) -> np.ndarray:
    """Recovered components ``W (X - location)`` for a fitted unmixing."""
    X = np.asarray(X, dtype=float)
    return result.W @ (X - result.location[:, None])
