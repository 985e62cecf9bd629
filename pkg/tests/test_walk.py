import math
from collections import Counter
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from hyperfk import walk
from hyperfk.errors import DomainError, ReachabilityError
from hyperfk.manifold import Circle, EuclideanLine, HyperbolicPlane, Sphere2
from hyperfk.rng import SeedSpec
from hyperfk.walk import HyperfiniteGrid


class TestGrid:
    def test_epsilon_and_times(self):
        g = HyperfiniteGrid(2.0, 7)
        assert g.epsilon * g.n == pytest.approx(2.0, rel=1e-15)
        assert g.times[0] == 0 and g.times[-1] == 2.0 and len(g.times) == 8

    @pytest.mark.parametrize("t,n", [(0.0, 4), (-1.0, 4), (1.0, 0)])
    def test_invalid(self, t, n):
        with pytest.raises(DomainError):
            HyperfiniteGrid(t, n)

    def test_nearest_index(self):
        k, d = HyperfiniteGrid(1.0, 16).nearest_index(0.5)
        assert k == 8 and d == 0


class TestLineWalk:
    def test_single_step_is_fair(self):
        g = HyperfiniteGrid(1.0, 1)
        ends = walk.line_walk_endpoints(0.0, g, 3, np.arange(100_000))
        assert set(np.unique(ends)) == {-1.0, 1.0}
        p = np.mean(ends > 0)
        assert abs(p - 0.5) < 3 * math.sqrt(0.25 / ends.size)

    def test_endpoint_moments(self):
        g = HyperfiniteGrid(2.0, 10_000)
        ends = walk.line_walk_endpoints(0.3, g, 11, np.arange(100_000))
        se_mean = math.sqrt(2.0 / ends.size)
        assert abs(ends.mean() - 0.3) < 3 * se_mean
        # Var of the sample variance for Gaussian-like data is 2 sigma^4 / N
        assert abs(ends.var(ddof=1) - 2.0) < 3 * math.sqrt(2 * 4.0 / ends.size)

    def test_endpoints_match_paths(self):
        g = HyperfiniteGrid(1.0, 130)
        idx = np.arange(300)
        for anti in (False, True):
            paths = walk.line_walk_batch(0.2, g, 4, idx, anti)
            ends = walk.line_walk_endpoints(0.2, g, 4, idx, anti)
            np.testing.assert_allclose(paths[:, -1], ends, atol=1e-12)

    def test_deterministic(self):
        g = HyperfiniteGrid(1.0, 50)
        a = walk.sample_line_walk(0.0, g, SeedSpec(7, 42))
        b = walk.sample_line_walk(0.0, g, SeedSpec(7, 42))
        assert a.points.tobytes() == b.points.tobytes()

    def test_step_lengths(self):
        g = HyperfiniteGrid(1.5, 64)
        p = walk.sample_line_walk(0.0, g, SeedSpec(1, 2))
        np.testing.assert_allclose(p.step_lengths(), g.sqrt_eps, rtol=1e-9)
        assert p.points.shape == (65, 1) and p.points[0, 0] == 0.0

    def test_antithetic_pairs_mirror(self):
        g = HyperfiniteGrid(1.0, 20)
        p = walk.line_walk_batch(0.5, g, 9, np.arange(4), antithetic=True)
        np.testing.assert_allclose(p[1] - 0.5, -(p[0] - 0.5))


class TestPinnedWalk:
    def test_two_step_frequencies(self):
        g = HyperfiniteGrid(1.0, 2)
        pts = walk.pinned_walk_batch(0.0, 0.0, g, 5, np.arange(100_000))
        up_first = np.mean(pts[:, 1] > 0)
        assert abs(up_first - 0.5) < 3 * math.sqrt(0.25 / 100_000)

    def test_four_step_uniform(self):
        g = HyperfiniteGrid(1.0, 4)
        pts = walk.pinned_walk_batch(0.0, 0.0, g, 6, np.arange(60_000))
        keys = Counter(tuple(np.sign(np.diff(p)).astype(int)) for p in pts)
        brute = {s for s in np.ndindex(2, 2, 2, 2) if sum(2 * np.array(s) - 1) == 0}
        assert len(keys) == comb(4, 2) == len(brute)
        counts = np.array(list(keys.values()))
        assert stats.chisquare(counts).pvalue > 0.001

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 40), st.integers(0, 2 ** 32), st.booleans())
    def test_endpoint_exact(self, n, seed, anti):
        g = HyperfiniteGrid(1.0, n)
        m = n - 2 * (seed % (n + 1))
        q2 = 0.25 + g.sqrt_eps * m
        pts = walk.pinned_walk_batch(0.25, q2, g, seed, np.arange(6), anti)
        assert np.all(pts[:, -1] == q2) and np.all(pts[:, 0] == 0.25)
        np.testing.assert_allclose(np.abs(np.diff(pts, axis=1)), g.sqrt_eps, rtol=1e-9)

    def test_unreachable(self):
        g = HyperfiniteGrid(1.0, 256)
        with pytest.raises(ReachabilityError) as info:
            walk.sample_pinned_line_walk(0.0, 0.1, g, SeedSpec(0, 0))
        assert info.value.nearest == (0.0, 0.125)

    def test_snap(self):
        assert walk.snap_endpoint(0.0, 0.1, HyperfiniteGrid(1.0, 256)) == 0.125

    def test_time_reversal_antithetic(self):
        g = HyperfiniteGrid(1.0, 10)
        pts = walk.pinned_walk_batch(0.0, 4 * g.sqrt_eps, g, 2, np.arange(2), antithetic=True)
        np.testing.assert_allclose(np.diff(pts[1]), np.diff(pts[0])[::-1])

    def test_marginals_match_enumeration(self):
        g = HyperfiniteGrid(1.0, 12)
        pos = walk.pinned_marginal_batch(0.0, 2 * g.sqrt_eps, g, [4, 9], 3, np.arange(40_000))
        # exact joint law of (ups in first 4, ups in first 9) with 7 ups among 12
        j4 = np.round((pos[:, 0] / g.sqrt_eps + 4) / 2).astype(int)
        freq = Counter(j4)
        expected = {u: comb(4, u) * comb(8, 7 - u) / comb(12, 7) for u in range(5)}
        obs = np.array([freq.get(u, 0) for u in range(5)])
        exp = np.array([expected[u] for u in range(5)]) * pos.shape[0]
        assert stats.chisquare(obs, exp).pvalue > 0.001
        assert np.all(np.abs(pos[:, 1] - pos[:, 0]) <= 5 * g.sqrt_eps + 1e-12)


class TestManifoldWalk:
    def test_line_matches_line_sampler(self):
        g = HyperfiniteGrid(1.0, 100)
        a = walk.manifold_walk_batch(EuclideanLine(), 0.0, g, 1, np.arange(10_000))[:, -1, 0]
        b = walk.line_walk_endpoints(0.0, g, 1, np.arange(10_000))
        assert stats.ks_2samp(a, b).pvalue > 0.001

    def test_circle_equilibrium(self):
        # endpoints live on a lattice of spacing 2 sqrt(eps) before wrapping, so
        # uniformity holds for modes much coarser than the lattice
        g = HyperfiniteGrid(50.0, 5000)
        ang = walk.manifold_walk_endpoints(Circle(1.0), 0.0, g, 2, np.arange(10_000))[:, 0]
        assert np.all((ang >= 0) & (ang < 2 * math.pi))
        tol = 4 * math.sqrt(0.5 / ang.size)
        for k in range(1, 11):
            assert abs(np.cos(k * ang).mean() - math.cos(k * g.sqrt_eps) ** g.n) < tol
            assert abs(np.sin(k * ang).mean()) < tol

    def test_circle_lattice_mode(self):
        # the mode closest to the lattice frequency keeps its exact walk value
        g = HyperfiniteGrid(50.0, 5000)
        ang = walk.manifold_walk_endpoints(Circle(1.0), 0.0, g, 2, np.arange(10_000))[:, 0]
        exact = math.cos(63 * g.sqrt_eps) ** g.n
        assert exact > 0.4
        assert abs(np.cos(63 * ang).mean() - exact) < 4 * math.sqrt(0.5 / ang.size)

    def test_sphere_first_mode(self):
        g = HyperfiniteGrid(0.3, 64)
        ends = walk.manifold_walk_endpoints(Sphere2(1.0), [0.0, 0.0], g, 8, np.arange(40_000))
        c = np.cos(ends[:, 0])
        target = math.cos(math.sqrt(2 * g.epsilon)) ** g.n
        assert abs(c.mean() - target) < 3 * c.std(ddof=1) / math.sqrt(c.size)
        assert target == pytest.approx(math.exp(-0.3), rel=1e-3)

    @pytest.mark.parametrize("m,q1", [(Sphere2(1.0), [1.0, 2.0]), (Sphere2(2.0), [0.0, 0.0]),
                                      (HyperbolicPlane(1.0), [0.0, 1.0]), (Circle(2.0), [0.5])],
                             ids=["sphere", "sphere_pole", "hyperbolic", "circle"])
    def test_step_length_invariant(self, m, q1):
        g = HyperfiniteGrid(1.0, 40)
        p = walk.sample_manifold_walk(m, q1, g, SeedSpec(3, 1))
        assert p.step_length == pytest.approx(math.sqrt(m.dimension * g.epsilon))
        np.testing.assert_allclose(p.step_lengths(), p.step_length, rtol=1e-9)
        np.testing.assert_allclose(p.points[0], m.as_points(q1))

    def test_endpoints_bit_equal_paths(self):
        g = HyperfiniteGrid(0.3, 33)
        idx = np.arange(50)
        m = Sphere2(1.0)
        a = walk.manifold_walk_batch(m, [1.0, 0.0], g, 5, idx)[:, -1]
        b = walk.manifold_walk_endpoints(m, [1.0, 0.0], g, 5, idx)
        assert a.tobytes() == b.tobytes()


class TestPathPosition:
    def test_examples(self):
        g = HyperfiniteGrid(1.0, 4)
        p = walk.sample_line_walk(0.0, g, SeedSpec(0, 1))
        assert walk.path_position(p, 0.0)[0] == p.points[0, 0]
        k = 0
        mid = walk.path_position(p, 0.5 * g.epsilon)[0]
        assert mid == pytest.approx(0.5 * (p.points[k, 0] + p.points[k + 1, 0]))
        assert walk.path_position(p, g.times[2])[0] == p.points[2, 0]

    def test_circle_arc_midpoint(self):
        g = HyperfiniteGrid(1.0, 1)
        path = walk.WalkPath(g, Circle(1.0), np.array([[0.0], [0.1]]), 0.1)
        assert walk.path_position(path, 0.5)[0] == pytest.approx(0.05)

    def test_outside(self):
        g = HyperfiniteGrid(1.0, 4)
        p = walk.sample_line_walk(0.0, g, SeedSpec(0, 1))
        with pytest.raises(DomainError):
            walk.path_position(p, 1.5)
