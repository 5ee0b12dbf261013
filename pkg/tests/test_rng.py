import numpy as np

from dropsense import rng


def test_stream_deterministic_and_keyed():
    a = rng.stream(7, rng.NOISE, 0).standard_normal(5)
    assert np.array_equal(a, rng.stream(7, rng.NOISE, 0).standard_normal(5))
    assert not np.array_equal(a, rng.stream(7, rng.NOISE, 1).standard_normal(5))
    assert not np.array_equal(a, rng.stream(8, rng.NOISE, 0).standard_normal(5))


def test_particle_streams_order_independent():
    fwd = [rng.particle_stream(3, i).random() for i in range(5)]
    rev = [rng.particle_stream(3, i).random() for i in reversed(range(5))][::-1]
    assert fwd == rev


def test_derive_seed_u64():
    s = rng.derive_seed(2**64 - 1, rng.TITRATION, 4)
    assert 0 <= s < 2**64
    assert s != rng.derive_seed(2**64 - 1, rng.TITRATION, 5)
