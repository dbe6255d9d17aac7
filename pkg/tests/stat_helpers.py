"""Shared statistical checks for the test-suite."""

import numpy as np
from scipy import stats

from vind.streams import RandomStream


def replicated_ks(draw, reference, seed, alpha=0.01):
    """KS test at ``alpha`` that must fail on two independent seeds to count as a failure.

    ``draw(stream)`` returns a sample; ``reference`` is a cdf or a second
    sampler ``(stream) -> sample`` for a two-sample test. Returns the two
    p-values (the second is None when the first passes).
    """
    def pvalue(stream):
        x = draw(stream)
        if callable(reference) and getattr(reference, "two_sample", False):
            return stats.ks_2samp(x, reference(stream)).pvalue
        return stats.kstest(x, reference).pvalue

    s1, s2 = RandomStream(seed).split(2)
    p1 = pvalue(s1)
    if p1 > alpha:
        return p1, None
    return p1, pvalue(s2)


def ks_passes(draw, reference, seed, alpha=0.01):
    p1, p2 = replicated_ks(draw, reference, seed, alpha)
    return p1 > alpha or p2 > alpha


def sampler(fn):
    """Mark a callable as a reference sampler for a two-sample test."""
    fn.two_sample = True
    return fn


def within_se(samples, target, k=5.0):
    x = np.asarray(samples, dtype=float)
    se = x.std(ddof=1) / np.sqrt(len(x))
    return abs(x.mean() - target) <= k * se + 1e-15
