"""Dense linear algebra and sampling primitives shared by every module."""

import numpy as np

__all__ = ["Rng", "matvec", "sigmoid"]


class Rng:
    """Seeded random stream. Equal seeds give bitwise-identical streams."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, size=None):
        return self._gen.random(size)

    def bernoulli(self, p, size=None):
        """Draw 0/1 floats with success probability p (scalar or array)."""
        p = np.asarray(p, dtype=np.float64)
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("bernoulli probability outside [0, 1]")
        if size is None:
            size = p.shape
        u = self._gen.random(size)
        return (u < p).astype(np.float64)

    def gaussian(self, mean=0.0, stddev=1.0, size=None):
        stddev = np.asarray(stddev, dtype=np.float64)
        if np.any(stddev < 0.0):
            raise ValueError("negative stddev")
        return self._gen.normal(mean, stddev, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def shuffle(self, x):
        self._gen.shuffle(x)

    def permutation(self, n):
        return self._gen.permutation(n)

    def spawn(self, n):
        """Derive n independently seeded child streams (consumes this stream)."""
        seeds = self._gen.integers(0, 2**63 - 1, size=n)
        return [Rng(int(s)) for s in seeds]


def matvec(m, v):
    """Matrix-vector product with an explicit dimension check."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec dimension mismatch: {m.shape} x {v.shape}")
    return m @ v


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out
