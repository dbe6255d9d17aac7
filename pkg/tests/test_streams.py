import numpy as np
import pytest

from vind.streams import RandomStream, as_stream, split


def test_same_seed_same_sequence():
    a, b = RandomStream(123), RandomStream(123)
    np.testing.assert_array_equal(a.normal(1000), b.normal(1000))
    np.testing.assert_array_equal(a.uniform(10), b.uniform(10))


def test_different_seeds_differ():
    assert not np.array_equal(RandomStream(1).normal(10), RandomStream(2).normal(10))


def test_split_is_deterministic():
    x = [s.normal(5) for s in RandomStream(9).split(3)]
    y = [s.normal(5) for s in split(RandomStream(9), 3)]
    for a, b in zip(x, y):
        np.testing.assert_array_equal(a, b)


def test_split_streams_share_no_subsequence():
    n = 10**6
    a, b = RandomStream(5).split(2)
    xa, xb = a.bits(n), b.bits(n)
    # 63-bit words: any shared window would show up as common values
    assert np.intersect1d(xa, xb).size == 0
    assert abs(np.corrcoef(a.normal(n), b.normal(n))[0, 1]) < 5 / np.sqrt(n)


def test_uniform_open_interval():
    u = RandomStream(0).uniform(10**6)
    assert u.min() > 0 and u.max() < 1


def test_as_stream_passthrough():
    s = RandomStream(3)
    assert as_stream(s) is s
    assert as_stream(3).seed == 3
    with pytest.raises(ValueError):
        RandomStream(-1)
