import numpy as np

from spikesde.rng import stream


def test_same_key_same_draws():
    a = stream(123, 7).standard_normal(64)
    b = stream(123, 7).standard_normal(64)
    assert np.array_equal(a, b)


def test_different_index_different_draws():
    a = stream(123, 0).standard_normal(64)
    b = stream(123, 1).standard_normal(64)
    assert not np.array_equal(a, b)


def test_streams_independent_of_order():
    # drawing from stream 1 first must not perturb stream 2
    first = stream(9, 2).standard_normal(16)
    _ = stream(9, 1).standard_normal(1000)
    second = stream(9, 2).standard_normal(16)
    assert np.array_equal(first, second)
