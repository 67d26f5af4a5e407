"""Deterministic, splittable random generation.

All randomness in the package flows through `Rng`, a thin wrapper around
numpy's counter-based Philox bit generator. Children spawned from one
parent use distinct-key splitting (`SeedSequence.spawn`), so parallel
replications never share streams regardless of scheduling.
"""

from __future__ import annotations

import numpy as np



class Rng:
    """Counter-based generator with reproducible child spawning.

    The same seed yields the same stream on every platform and run; two
    children spawned from the same parent occupy disjoint streams.
    """

    def __init__(self, seed, _seq: np.random.SeedSequence | None = None):
        if _seq is not None:
            self.seq = _seq
        else:
            self.seq = np.random.SeedSequence(int(seed))
        self.gen = np.random.Generator(np.random.Philox(self.seq))

    @property
    def seed_entropy(self):
        return self.seq.entropy

    def spawn(self, n: int) -> list["Rng"]:
        """Split off n independent child generators."""
        return [Rng(0, _seq=s) for s in self.seq.spawn(n)]

    def child(self) -> "Rng":
        return self.spawn(1)[0]

    # -- delegated draws ------------------------------------------------

    def standard_normal(self, size=None):
        return self.gen.standard_normal(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def choice(self, a, size=None, replace=True):
        return self.gen.choice(a, size=size, replace=replace)

    def permutation(self, n):
        return self.gen.permutation(n)


def gaussian(rng: Rng, mean, chol) -> np.ndarray:
    """Draw mean + chol @ z with z standard normal.

    `chol` must be a lower-triangular Cholesky factor of the intended
    covariance (see `linalg.cholesky`); a zero matrix gives the mean back.
    """
    mean = np.asarray(mean, dtype=float)
    chol = np.asarray(chol, dtype=float)
    z = rng.standard_normal(mean.shape[0])
    return mean + chol @ z


def gaussian_batch(rng: Rng, mean, chol, n: int) -> np.ndarray:
    """n draws of mean + chol @ z, rows are samples."""
    mean = np.asarray(mean, dtype=float)
    chol = np.asarray(chol, dtype=float)
    z = rng.standard_normal((n, mean.shape[0]))
    return mean + z @ chol.T
