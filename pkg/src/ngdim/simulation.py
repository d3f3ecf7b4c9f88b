"""Benchmark model generators and Monte-Carlo experiment drivers.

Two families of synthetic models exercise the dimension tests:

* ``M1`` mixes a dependent pair (uniform on a Gamma-shaped region) with
  a skewed chi-square component, ``M2`` mixes three independent
  Gaussian-mixture components, one of which has kurtosis exactly 3 and
  is therefore invisible to fourth-moment methods;
* ``M1x`` / ``M2x`` add a small fraction of shifted outlier columns,
  ``M1star`` / ``M2star`` double the Gaussian noise dimension.

All latent signals are standardized with their exact population mean
and covariance, so the generated ``Z`` has mean zero and identity
covariance in the model sense (up to sampling error).  The observed
data are ``X = A Z`` with a fresh standard-normal mixing matrix per
repetition.

:func:`rejection_rate_experiment` and :func:`estimator_experiment`
drive repeated bootstrap tests / dimension estimates over such data
and aggregate rejection rates and ``q_hat`` frequencies.  Every
repetition draws from its own derived random stream, so results are
identical no matter how repetitions are scheduled.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._rng import NS_SIM_DATA, NS_SIM_REP, NS_SIM_TEST, derive_rng, derive_seed
from .dimtest import BootstrapConfig, MethodSpec, bootstrap_test, method_spec
from .estimator import estimate_divide_conquer, estimate_incremental
from .exceptions import (
    BootstrapFailureError,
    ConvergenceError,
    DegenerateScatterError,
    SimulationFailureError,
    WhiteningError,
)

__all__ = [
    "ModelSpec",
    "SimulationReport",
    "MODEL_NAMES",
    "model_spec",
    "sample_gamma_glyph",
    "glyph_moments",
    "sample_model",
    "contaminate",
    "rejection_rate_experiment",
    "estimator_experiment",
]

logger = logging.getLogger(__name__)

MODEL_NAMES = ("M1", "M2", "M1x", "M2x", "M1star", "M2star")

GLYPH_THICKNESS = 0.15
_MAX_MIXING_CONDITION = 1.0e6
_MAX_FAILURE_FRACTION = 0.02
_REP_ERRORS = (
    BootstrapFailureError,
    ConvergenceError,
    DegenerateScatterError,
    WhiteningError,
)


@dataclass(frozen=True)
class ModelSpec:
    """One of the benchmark models.

    ``contamination`` is ``None`` or a pair ``(fraction, shift)`` where
    ``shift`` is a length-``p`` tuple added to the selected observed
    columns.  ``seed`` is the default master seed used by the
    experiment drivers when none is passed explicitly.
    """

    name: str
    p: int
    q: int
    contamination: tuple[float, tuple[float, ...]] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.name!r}; choose from {MODEL_NAMES}")
        expected_p = 9 if self.name.endswith("star") else 6
        if (self.p, self.q) != (expected_p, 3):
            raise ValueError(
                f"model {self.name} requires p={expected_p}, q=3 "
                f"(got p={self.p}, q={self.q})"
            )
        if self.contamination is not None:
            fraction, shift = self.contamination
            if not 0.0 <= fraction <= 0.05:
                raise ValueError(f"contamination fraction {fraction} outside [0, 0.05]")
            if len(shift) != self.p:
                raise ValueError(
                    f"contamination shift has length {len(shift)}, expected {self.p}"
                )


def model_spec(name: str, *, fraction: float | None = None, shift=None, seed: int = 0) -> ModelSpec:
    """Build the :class:`ModelSpec` for a model name.

    Accepts ``M1``, ``M2``, ``M1x``, ``M2x``, ``M1star``/``M1*`` and
    ``M2star``/``M2*`` (case-insensitive).  The ``x`` variants default
    to shifting 0.5% of the columns by ``10`` in every coordinate;
    ``fraction`` and ``shift`` override that for them.
    """
    key = name.strip().lower().replace("*", "star")
    canonical = {n.lower(): n for n in MODEL_NAMES}
    if key not in canonical:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
    resolved = canonical[key]
    p = 9 if resolved.endswith("star") else 6
    contamination = None
    if resolved.endswith("x"):
        fraction = 0.005 if fraction is None else float(fraction)
        shift = np.full(p, 10.0) if shift is None else np.asarray(shift, dtype=float)
        contamination = (fraction, tuple(float(s) for s in shift))
    elif fraction is not None or shift is not None:
        raise ValueError(f"model {resolved} takes no contamination overrides")
    return ModelSpec(name=resolved, p=p, q=3, contamination=contamination, seed=seed)


# ---------------------------------------------------------------------------
# latent signal generators


def _glyph_rectangles(thickness: float):
    """Disjoint rectangles (x0, x1, y0, y1) whose union is the glyph."""
    t = thickness
    top = (0.0, 1.0, 1.0 - t, 1.0)
    stem = (0.0, t, 0.0, 1.0 - t)
    return top, stem


def glyph_moments(thickness: float = GLYPH_THICKNESS):
    """Exact mean vector and covariance of the uniform law on the glyph.

    Computed from the disjoint-rectangle decomposition: within a
    rectangle the coordinates are independent uniforms, so all first
    and second moments are closed-form.
    """
    rects = _glyph_rectangles(thickness)
    areas = np.array([(x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in rects])
    weights = areas / areas.sum()
    ex = ey = exx = eyy = exy = 0.0
    for w, (x0, x1, y0, y1) in zip(weights, rects):
        mx, my = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        ex += w * mx
        ey += w * my
        exx += w * (x0 * x0 + x0 * x1 + x1 * x1) / 3.0
        eyy += w * (y0 * y0 + y0 * y1 + y1 * y1) / 3.0
        exy += w * mx * my
    mean = np.array([ex, ey])
    cov = np.array(
        [
            [exx - ex * ex, exy - ex * ey],
            [exy - ex * ey, eyy - ey * ey],
        ]
    )
    return mean, cov


def sample_gamma_glyph(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample on the Gamma-shaped region, returned as a 2 x n matrix.

    The region is the union of a horizontal bar ``[0,1] x [0.85,1]``
    and a vertical bar ``[0,0.15] x [0,1]``; the two rows are the x and
    y coordinates and are dependent by construction.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    top, stem = _glyph_rectangles(GLYPH_THICKNESS)
    area_top = (top[1] - top[0]) * (top[3] - top[2])
    area_stem = (stem[1] - stem[0]) * (stem[3] - stem[2])
    w_top = area_top / (area_top + area_stem)
    in_top = rng.random(n) < w_top
    u = rng.random(n)
    v = rng.random(n)
    x = np.where(in_top, top[0] + (top[1] - top[0]) * u, stem[0] + (stem[1] - stem[0]) * u)
    y = np.where(in_top, top[2] + (top[3] - top[2]) * v, stem[2] + (stem[3] - stem[2]) * v)
    return np.vstack((x, y))


def _inverse_sqrt(C: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(C)
    return (vecs / np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class _Gmm:
    """Finite univariate Gaussian mixture; the scale entries are
    standard deviations, so a component listed with scale 2 has
    variance 4."""

    weights: tuple[float, ...]
    means: tuple[float, ...]
    scales: tuple[float, ...]

    def moments(self) -> tuple[float, float]:
        w = np.asarray(self.weights)
        mu = np.asarray(self.means)
        sd = np.asarray(self.scales)
        mean = float(w @ mu)
        second = float(w @ (sd * sd + mu * mu))
        return mean, second - mean * mean

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        mu = np.asarray(self.means)[comp]
        sd = np.asarray(self.scales)[comp]
        return mu + sd * rng.standard_normal(n)


_M2_WEIGHT = 1.0 / (3.0 + math.sqrt(3.0))
_M2_SOURCES = (
    _Gmm((_M2_WEIGHT, 1.0 - _M2_WEIGHT), (-5.0, 5.0), (1.0, 1.0)),
    _Gmm((0.7, 0.3), (10.0, 15.0), (2.0, 5.0)),
    _Gmm((0.4, 0.6), (-4.0, 2.0), (1.0, 15.0)),
)


def _m1_signals(n: int, rng: np.random.Generator) -> np.ndarray:
    """Glyph pair plus a standardized chi-square(1) coordinate.

    The glyph coordinates are correlated, so they are standardized
    jointly with the exact population covariance; the chi-square
    coordinate has mean 1 and variance 2 in closed form.
    """
    glyph = sample_gamma_glyph(n, rng)
    mean, cov = glyph_moments()
    pair = _inverse_sqrt(cov) @ (glyph - mean[:, None])
    chi = rng.chisquare(1.0, n)
    third = (chi - 1.0) / math.sqrt(2.0)
    return np.vstack((pair, third))


def _m2_signals(n: int, rng: np.random.Generator) -> np.ndarray:
    rows = []
    for gmm in _M2_SOURCES:
        mean, var = gmm.moments()
        rows.append((gmm.sample(n, rng) - mean) / math.sqrt(var))
    return np.vstack(rows)


def contaminate(X, fraction: float, shift, rng: np.random.Generator) -> np.ndarray:
    """Add ``shift`` to ``ceil(fraction * n)`` columns chosen uniformly
    without replacement; returns a contaminated copy."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"contamination fraction {fraction} outside [0, 1]")
    X = np.array(X, dtype=float)
    n = X.shape[1]
    count = math.ceil(fraction * n)
    if count == 0:
        return X
    shift = np.asarray(shift, dtype=float)
    cols = rng.choice(n, size=count, replace=False)
    X[:, cols] += shift[:, None]
    return X


def _draw_mixing(p: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    redraws = 0
    while True:
        A = rng.standard_normal((p, p))
        cond = np.linalg.cond(A)
        if cond <= _MAX_MIXING_CONDITION:
            return A, redraws
        redraws += 1
        logger.info(
            "mixing matrix condition %.3g exceeds %.1g; redrawing (%d so far)",
            cond,
            _MAX_MIXING_CONDITION,
            redraws,
        )


def sample_model(spec: ModelSpec, n: int, rng: np.random.Generator):
    """Draw one sample of the model: returns ``(X, A, Z)``.

    ``Z`` stacks the standardized signals over ``p - q`` rows of
    standard Gaussian noise; ``A`` is a square mixing matrix with
    i.i.d. N(0,1) entries, redrawn (and the redraw logged) while its
    condition number exceeds 1e6; ``X = A @ Z`` with contamination
    applied last when the spec carries one.  The stream is consumed in
    the fixed order signals, noise, mixing matrix, contamination
    columns, which is what makes equal-seed runs bit-identical.
    """
    p, q = spec.p, spec.q
    if n < p + 1:
        raise ValueError(f"need n > p observations (got n={n}, p={p})")
    if spec.name.startswith("M1"):
        signals = _m1_signals(n, rng)
    else:
        signals = _m2_signals(n, rng)
    noise = rng.standard_normal((p - q, n))
    Z = np.vstack((signals, noise))
    A, _ = _draw_mixing(p, rng)
    X = A @ Z
    if spec.contamination is not None:
        fraction, shift = spec.contamination
        X = contaminate(X, fraction, shift, rng)
    return X, A, Z


# ---------------------------------------------------------------------------
# experiment drivers


@dataclass
class SimulationReport:
    """Aggregated experiment output plus everything needed to rerun it.

    ``rows`` hold the aggregate table (one dict per cell), ``details``
    one dict per (repetition, method, k) or (repetition, strategy,
    method), and ``failures`` one dict per excluded repetition.  The
    ``config`` echo includes the master seed and the stream-derivation
    scheme, so a report identifies its own reproduction command.
    """

    kind: str
    config: dict
    rows: list[dict] = field(default_factory=list)
    details: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)


def _resolve_methods(methods, pair_options) -> list[MethodSpec]:
    if not methods:
        raise ValueError("need at least one method label")
    return [method_spec(label, **(pair_options or {})) for label in methods]


def _decision(p_value: float, alpha: float) -> str:
    return "reject" if p_value <= alpha else "accept"


def _rejection_rep(payload, rep: int):
    """One repetition of the rejection-rate experiment.

    Returns ``(rep, rows, error)`` where ``error`` is ``None`` on
    success; all randomness comes from streams derived from the master
    seed and ``rep``, never from worker state.
    """
    (spec, n, ks, specs, M, master_seed, alpha, assumption, noise) = payload
    rep_seed = derive_seed(master_seed, NS_SIM_REP, rep)
    data_rng = derive_rng(rep_seed, NS_SIM_DATA)
    rows: list[dict] = []
    try:
        X, _, _ = sample_model(spec, n, data_rng)
        for mi, meth in enumerate(specs):
            for k in ks:
                test_seed = derive_seed(rep_seed, NS_SIM_TEST, mi, k)
                cfg = BootstrapConfig(
                    pair=meth.pair,
                    model=assumption,
                    noise=noise,
                    replicates=M,
                    seed=test_seed,
                    statistic=meth.statistic,
                )
                outcome = bootstrap_test(X, k, cfg)
                rows.append(
                    {
                        "rep": rep,
                        "method": meth.label,
                        "k": k,
                        "seed": test_seed,
                        "statistic": outcome.statistic,
                        "p_value": outcome.p_value,
                        "decision": _decision(outcome.p_value, alpha),
                    }
                )
    except _REP_ERRORS as exc:
        return rep, [], f"{type(exc).__name__}: {exc}"
    return rep, rows, None


def _run_repetitions(worker, payload, reps: int, threads: int | None):
    """Run repetitions (serially or in a process pool), aborting once
    failures exceed the tolerated fraction.  Yields results in
    repetition order either way."""
    limit = _MAX_FAILURE_FRACTION * reps
    results = []
    failures = []

    def absorb(result):
        rep, rows, error = result
        if error is not None:
            failures.append({"rep": rep, "error": error})
            if len(failures) > limit:
                raise SimulationFailureError(
                    f"{len(failures)} of {reps} repetitions failed "
                    f"(tolerated fraction {_MAX_FAILURE_FRACTION})",
                    failures=len(failures),
                    total=reps,
                )
        results.append(result)

    if threads is None or threads <= 1 or reps < 2:
        for rep in range(reps):
            absorb(worker(payload, rep))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(partial(worker, payload), range(reps)):
                absorb(result)
    return results, failures


def rejection_rate_experiment(
    spec: ModelSpec,
    n: int,
    ks,
    methods,
    reps: int,
    M: int = 200,
    master_seed: int | None = None,
    *,
    alpha: float = 0.05,
    assumption: str = "ngca",
    noise: str = "parametric",
    pair_options: dict | None = None,
    threads: int | None = None,
) -> SimulationReport:
    """Empirical rejection rates of the bootstrap tests on a model.

    For each repetition a fresh ``(A, Z)`` is drawn and every
    configured method is run at every candidate ``k`` on the same data;
    the aggregate row for a (method, k) cell is the fraction of
    successful repetitions that rejected at level ``alpha``.  A
    repetition whose solver fails is excluded (and recorded); more
    than 2% failures abort the experiment.
    """
    if reps < 1:
        raise ValueError("need at least one repetition")
    ks = [int(k) for k in ks]
    for k in ks:
        if not 0 <= k <= spec.p - 2:
            raise ValueError(f"candidate k={k} outside 0..{spec.p - 2}")
    specs = _resolve_methods(methods, pair_options)
    if master_seed is None:
        master_seed = spec.seed
    payload = (spec, n, ks, specs, M, master_seed, alpha, assumption, noise)
    results, failures = _run_repetitions(_rejection_rep, payload, reps, threads)

    details = [row for _, rows, error in results if error is None for row in rows]
    completed = reps - len(failures)
    rows = []
    for meth in specs:
        for k in ks:
            cell = [
                d for d in details if d["method"] == meth.label and d["k"] == k
            ]
            rate = (
                float(np.mean([d["decision"] == "reject" for d in cell]))
                if cell
                else float("nan")
            )
            rows.append(
                {
                    "model": spec.name,
                    "n": n,
                    "pair": meth.label,
                    "assumption": assumption,
                    "k": k,
                    "rejection_rate": rate,
                    "repetitions": completed,
                    "M": M,
                }
            )
    config = {
        "experiment": "rejection-rates",
        "model": spec.name,
        "contamination": _contamination_echo(spec),
        "n": n,
        "ks": list(ks),
        "methods": [m.label for m in specs],
        "assumption": assumption,
        "noise": noise,
        "reps": reps,
        "M": M,
        "alpha": alpha,
        "master_seed": master_seed,
        "rng": "philox(seed; namespaced streams)",
    }
    return SimulationReport(
        kind="rejection-rates",
        config=config,
        rows=rows,
        details=details,
        failures=failures,
    )


def _estimator_rep(payload, rep: int):
    (spec, n, strategies, specs, M, master_seed, alpha, assumption, noise) = payload
    rep_seed = derive_seed(master_seed, NS_SIM_REP, rep)
    data_rng = derive_rng(rep_seed, NS_SIM_DATA)
    rows: list[dict] = []
    try:
        X, _, _ = sample_model(spec, n, data_rng)
        for mi, meth in enumerate(specs):
            seed = derive_seed(rep_seed, NS_SIM_TEST, mi)
            cfg = BootstrapConfig(
                pair=meth.pair,
                model=assumption,
                noise=noise,
                replicates=M,
                seed=seed,
                statistic=meth.statistic,
            )
            for strategy in strategies:
                estimate = _ESTIMATORS[strategy](X, cfg, alpha)
                rows.append(
                    {
                        "rep": rep,
                        "strategy": strategy,
                        "method": meth.label,
                        "seed": seed,
                        "q_hat": estimate.q_hat,
                        "tests": estimate.tests_performed(),
                    }
                )
    except _REP_ERRORS as exc:
        return rep, [], f"{type(exc).__name__}: {exc}"
    return rep, rows, None


_ESTIMATORS = {
    "incremental": estimate_incremental,
    "divide-conquer": estimate_divide_conquer,
}


def estimator_experiment(
    spec: ModelSpec,
    n: int,
    strategies,
    methods,
    reps: int,
    master_seed: int | None = None,
    *,
    M: int = 200,
    alpha: float = 0.05,
    assumption: str = "ngca",
    noise: str = "parametric",
    pair_options: dict | None = None,
    threads: int | None = None,
) -> SimulationReport:
    """Frequency distribution of the estimated signal count ``q_hat``.

    Runs every (strategy, method) combination on the same data within a
    repetition; both strategies share one bootstrap seed per method, so
    a candidate ``k`` tested by both gets the identical p-value and the
    strategies differ only in their search paths.
    """
    if reps < 1:
        raise ValueError("need at least one repetition")
    strategies = list(strategies)
    for strategy in strategies:
        if strategy not in _ESTIMATORS:
            raise ValueError(
                f"unknown strategy {strategy!r}; choose from {sorted(_ESTIMATORS)}"
            )
    specs = _resolve_methods(methods, pair_options)
    if master_seed is None:
        master_seed = spec.seed
    payload = (spec, n, strategies, specs, M, master_seed, alpha, assumption, noise)
    results, failures = _run_repetitions(_estimator_rep, payload, reps, threads)

    details = [row for _, rows, error in results if error is None for row in rows]
    completed = reps - len(failures)
    rows = []
    for strategy in strategies:
        for meth in specs:
            cell = [
                d
                for d in details
                if d["strategy"] == strategy and d["method"] == meth.label
            ]
            counts: dict[int, int] = {}
            for d in cell:
                counts[d["q_hat"]] = counts.get(d["q_hat"], 0) + 1
            for q_hat in sorted(counts):
                rows.append(
                    {
                        "model": spec.name,
                        "n": n,
                        "pair": meth.label,
                        "assumption": assumption,
                        "strategy": strategy,
                        "q_hat": q_hat,
                        "frequency": counts[q_hat] / len(cell),
                        "repetitions": completed,
                    }
                )
    config = {
        "experiment": "estimator-frequencies",
        "model": spec.name,
        "contamination": _contamination_echo(spec),
        "n": n,
        "strategies": strategies,
        "methods": [m.label for m in specs],
        "assumption": assumption,
        "noise": noise,
        "reps": reps,
        "M": M,
        "alpha": alpha,
        "master_seed": master_seed,
        "rng": "philox(seed; namespaced streams)",
    }
    return SimulationReport(
        kind="estimator-frequencies",
        config=config,
        rows=rows,
        details=details,
        failures=failures,
    )


def _contamination_echo(spec: ModelSpec) -> str:
    if spec.contamination is None:
        return "none"
    fraction, shift = spec.contamination
    values = set(shift)
    if len(values) == 1:
        return f"{fraction} @ {values.pop()}*ones"
    return f"{fraction} @ {list(shift)}"
