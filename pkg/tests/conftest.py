"""Shared helpers for the test suite.

Test data is generated with plain numpy Generators seeded locally so
that oracle checks stay independent of the package's own stream
derivation (which has tests of its own).
"""

from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_spd(p: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random symmetric positive-definite matrix with eigenvalues >= 0.3."""
    A = rng.standard_normal((p, p))
    Q, _ = np.linalg.qr(A)
    eigs = 0.3 + scale * rng.random(p)
    return (Q * eigs) @ Q.T


def random_full_rank(p: int, rng: np.random.Generator) -> np.ndarray:
    while True:
        A = rng.standard_normal((p, p))
        if np.linalg.cond(A) < 1e4:
            return A


def max_abs(a) -> float:
    return float(np.max(np.abs(a)))
