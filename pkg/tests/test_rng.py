import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperfk import rng, sampling


def numpy_philox_words(seed, index, stream, n_blocks):
    """Reference blocks from numpy's Philox; it increments before each block."""
    # numpy adds one to the 256-bit counter before producing a block, so start
    # one below (block 0, stream s) = (2^64 - 1, s - 1) with a borrow
    if stream == 0:
        counter = [2 ** 64 - 1, 2 ** 64 - 1, 2 ** 64 - 1, 2 ** 64 - 1]
    else:
        counter = [2 ** 64 - 1, stream - 1, 0, 0]
    bg = np.random.Philox(key=np.array([seed, index], dtype=np.uint64),
                          counter=np.array(counter, dtype=np.uint64))
    return bg.random_raw(4 * n_blocks)


class TestPhilox:
    @pytest.mark.parametrize("seed,index,stream", [(0, 0, 0), (7, 42, 1), (2 ** 63 + 5, 3, 2),
                                                   (123, 2 ** 40, 3)])
    def test_matches_numpy(self, seed, index, stream):
        ours = rng.random_words(seed, [index], 12, stream)[0]
        ref = numpy_philox_words(seed, index, stream, 3)
        np.testing.assert_array_equal(ours, ref)

    def test_offset_is_a_window(self):
        full = rng.random_words(3, [0, 1, 2], 40, 1)
        np.testing.assert_array_equal(rng.random_words(3, [0, 1, 2], 13, 1, offset=21),
                                      full[:, 21:34])

    def test_streams_and_indices_differ(self):
        a = rng.random_words(5, [0], 8, 0)
        assert not np.array_equal(a, rng.random_words(5, [0], 8, 1))
        assert not np.array_equal(a, rng.random_words(5, [1], 8, 0))
        assert not np.array_equal(a, rng.random_words(6, [0], 8, 0))

    def test_seed_range(self):
        with pytest.raises(ValueError):
            rng.SeedSpec(-1, 0)
        with pytest.raises(ValueError):
            rng.SeedSpec(0, 2 ** 64)


class TestDerivedStreams:
    def test_uniform_ranges(self):
        u = rng.uniforms(1, np.arange(64), 100)
        v = rng.uniforms32(1, np.arange(64), 101)
        assert u.min() >= 0 and u.max() < 1
        assert v.min() >= 0 and v.max() < 1
        assert v.shape == (64, 101)

    def test_uniform_moments(self):
        u = rng.uniforms(11, np.arange(2000), 50).ravel()
        assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)

    def test_sign_bits_are_word_bits(self):
        w = rng.random_words(9, [4], 2, 0)[0]
        s = rng.sign_bits(9, [4], 70, 0)[0]
        bits = [(int(w[i // 64]) >> (i % 64)) & 1 for i in range(70)]
        np.testing.assert_array_equal(s, 2 * np.array(bits) - 1)

    def test_uniforms32_offset_parity(self):
        with pytest.raises(ValueError):
            rng.uniforms32(0, [0], 4, offset=1)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 64 - 1), st.lists(st.integers(0, 10 ** 9), min_size=1, max_size=5))
    def test_rowwise_independent_of_batch(self, seed, indices):
        batch = rng.uniforms(seed, indices, 9, 2)
        for row, i in zip(batch, indices):
            np.testing.assert_array_equal(row, rng.uniforms(seed, [i], 9, 2)[0])


class TestSampling:
    def test_blocks_cover(self):
        b = sampling.blocks(10000)
        assert b[0] == (0, 4096) and b[-1][1] == 10000
        assert all(x[1] == y[0] for x, y in zip(b, b[1:]))

    @pytest.mark.parametrize("workers", [1, 3, 8])
    def test_map_blocks_order(self, workers):
        out = sampling.map_blocks(lambda idx: idx.astype(float) * 2, 9000, workers)
        np.testing.assert_array_equal(out, 2 * np.arange(9000))

    def test_map_blocks_tuples(self):
        a, b = sampling.map_blocks(lambda idx: (idx, -idx.astype(np.int64)), 5000, 2)
        assert a.shape == b.shape == (5000,)

    def test_stable_mean_constant_exact(self):
        assert sampling.stable_mean(np.full(12345, 0.1)) == 0.1

    def test_mean_and_error(self):
        m, se = sampling.mean_and_error([1.0, 2.0, 3.0, 4.0])
        assert m == 2.5
        assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
