"""Seedable, splittable random streams.

Every estimator in the package is a pure function of a :class:`RandomStream`.
Streams wrap a numpy ``Generator`` driven by PCG64; splitting spawns child
seed sequences so sub-streams never share state.
"""

import numpy as np

__all__ = ["RandomStream", "split", "as_stream"]


class RandomStream:
    """Single-owner source of randomness.

    Parameters
    ----------
    seed : int or numpy.random.SeedSequence
        64-bit integer seed. Identical seeds give identical draw sequences.
    """

    def __init__(self, seed=0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            if int(seed) < 0:
                raise ValueError("seed must be non-negative")
            self._seq = np.random.SeedSequence(int(seed))
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    @property
    def seed(self):
        return self._seq.entropy

    @property
    def generator(self):
        return self._gen

    def split(self, k):
        """Return ``k`` independent child streams."""
        return [RandomStream(s) for s in self._seq.spawn(int(k))]

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, size=None):
        # open interval (0, 1): never returns 0, so logs and powers stay finite
        u = self._gen.random(size)
        return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)

    def exponential(self, size=None):
        return self._gen.standard_exponential(size)

    def bits(self, size=None):
        return self._gen.integers(0, 2**63 - 1, size=size, dtype=np.int64, endpoint=True)

    def __repr__(self):
        return f"RandomStream(seed={self.seed})"


def split(stream, k):
    return stream.split(k)


def as_stream(seed_or_stream):
    if isinstance(seed_or_stream, RandomStream):
        return seed_or_stream
    return RandomStream(seed_or_stream)
