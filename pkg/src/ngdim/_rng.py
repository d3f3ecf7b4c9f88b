"""Deterministic random-stream derivation.

All randomness in this package flows through Philox counter-based
generators keyed by a ``SeedSequence`` built from a user seed plus an
integer derivation path.  Streams derived from the same seed and path
are bit-identical on every platform and independent of scheduling, so
results never depend on thread or process count.

Derivation paths used across the package (first element is a fixed
namespace constant, remaining elements identify the consumer):

==========  =====================================================
namespace   consumer
==========  =====================================================
1           bootstrap replicate ``(1, j, attempt)``
2           asymptotic-test Monte Carlo reference draws ``(2,)``
3           estimator per-candidate test seed ``(3, k)``
4           simulation repetition seed ``(4, rep)``
5           simulation data draw within a repetition ``(5,)``
6           simulation per-method/per-k test seed ``(6, mi, k)``
7           column permutation for incomplete pairing ``(7,)``
==========  =====================================================
"""

from __future__ import annotations

import numpy as np

NS_BOOT_REPLICATE = 1
NS_ASYMPTOTIC_MC = 2
NS_ESTIMATOR_K = 3
NS_SIM_REP = 4
NS_SIM_DATA = 5
NS_SIM_TEST = 6
NS_PAIRING_PERM = 7

__all__ = [
    "derive_rng",
    "derive_seed",
    "NS_BOOT_REPLICATE",
    "NS_ASYMPTOTIC_MC",
    "NS_ESTIMATOR_K",
    "NS_SIM_REP",
    "NS_SIM_DATA",
    "NS_SIM_TEST",
    "NS_PAIRING_PERM",
]


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Return a Philox generator for the stream ``(seed, *path)``.

    The same ``(seed, path)`` always yields the same stream;
    different paths yield statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(x) for x in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse the stream ``(seed, *path)`` to a single 63-bit integer seed.

    Used where a component expects a plain integer seed (for example a
    per-repetition seed recorded in a report) rather than a generator.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(x) for x in path))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
