import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperfk import manifold as mf
from hyperfk.errors import DomainError, DomainExitError, NumericalError
from hyperfk.manifold import (Chart, Circle, EuclideanLine, EuclideanSpace, HyperbolicPlane,
                              Sphere2)

NORTH = [0.0, 0.0]
SOUTH = [math.pi, 0.0]


def random_points(m, n, seed=0):
    g = np.random.default_rng(seed)
    if isinstance(m, Sphere2):
        z = g.uniform(-1, 1, n)
        return np.stack([np.arccos(z), g.uniform(0, 2 * math.pi, n)], axis=-1)
    if isinstance(m, Circle):
        return g.uniform(0, 2 * math.pi, (n, 1))
    if isinstance(m, HyperbolicPlane):
        return np.stack([g.uniform(-2, 2, n), np.exp(g.uniform(-1, 1, n))], axis=-1)
    return g.normal(size=(n, m.dimension))


BUILTINS = [EuclideanLine(), EuclideanSpace(3), Circle(1.0), Circle(2.0), Sphere2(1.0),
            Sphere2(2.5), HyperbolicPlane(1.0)]


class TestMetricDensity:
    def test_examples(self):
        assert mf.metric_density(EuclideanLine(), 0.7) == 1.0
        assert mf.metric_density(Sphere2(1.0), [math.pi / 2, 0]) == pytest.approx(1.0, abs=1e-15)
        assert mf.metric_density(Circle(2.0), 1.3) == pytest.approx(2.0)

    @pytest.mark.parametrize("m", BUILTINS, ids=lambda m: m.kind)
    def test_positive(self, m):
        pts = random_points(m, 10_000)
        if isinstance(m, Sphere2):
            pts[:, 0] = np.clip(pts[:, 0], 1e-9, math.pi - 1e-9)
        assert np.all(m.metric_density(pts) > 0)

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            mf.metric_density(HyperbolicPlane(1.0), [0.0, -1.0])
        with pytest.raises(DomainError):
            mf.metric_density(Sphere2(1.0), [4.0, 0.0])


class TestDistance:
    def test_examples(self):
        assert mf.geodesic_distance(EuclideanLine(), 0, 3.5) == 3.5
        assert mf.geodesic_distance(Circle(1.0), 0, math.pi) == pytest.approx(math.pi)
        assert mf.geodesic_distance(Sphere2(1.0), NORTH, SOUTH) == pytest.approx(math.pi)

    def test_circle_wraps(self):
        assert mf.geodesic_distance(Circle(1.0), 0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)

    def test_hyperbolic_vertical(self):
        assert mf.geodesic_distance(HyperbolicPlane(1.0), [0, 1], [0, math.e]) == \
            pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("m", BUILTINS, ids=lambda m: m.kind)
    def test_symmetry_and_triangle(self, m):
        p, q, r = (random_points(m, 300, s) for s in (1, 2, 3))
        dpq, dqp = m.distance(p, q), m.distance(q, p)
        np.testing.assert_allclose(dpq, dqp, rtol=1e-9, atol=1e-12)
        assert np.all(dpq <= m.distance(p, r) + m.distance(r, q) + 1e-9)
        np.testing.assert_allclose(m.distance(p, p), 0, atol=1e-7)

    def test_sphere_pole_ignores_longitude(self):
        s = Sphere2(1.0)
        assert s.distance([0.0, 0.3], [0.0, 2.0]) == pytest.approx(0.0, abs=1e-12)


class TestGeodesicStep:
    def test_examples(self):
        assert mf.geodesic_step(EuclideanLine(), 0.0, 1.0, 0.1)[0] == pytest.approx(0.1)
        end = mf.geodesic_step(Circle(1.0), 0.0, 1.0, 2 * math.pi)
        assert min(end[0], 2 * math.pi - end[0]) == pytest.approx(0.0, abs=1e-12)
        for d in ([1.0, 0.0], [0.0, 1.0], [0.6, 0.8]):
            south = mf.geodesic_step(Sphere2(1.0), NORTH, d, math.pi)
            assert south[0] == pytest.approx(math.pi, abs=1e-7)

    def test_negative_length(self):
        with pytest.raises(DomainError):
            mf.geodesic_step(EuclideanLine(), 0.0, 1.0, -0.1)

    @pytest.mark.parametrize("m", [EuclideanSpace(3), Circle(1.0), Sphere2(1.0),
                                   HyperbolicPlane(1.0)], ids=lambda m: m.kind)
    def test_distance_equals_length(self, m):
        p = random_points(m, 200, 4)
        if isinstance(m, Sphere2):
            p[:, 0] = np.clip(p[:, 0], 0.05, math.pi - 0.05)
        g = np.random.default_rng(5)
        v = g.normal(size=p.shape)
        v = v / m.gnorm(p, v)[:, None]
        lengths = g.uniform(0.01, 1.0, 200)
        q = m.exp(p, v, lengths)
        np.testing.assert_allclose(m.distance(p, q), lengths, rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("m", [Sphere2(1.0), HyperbolicPlane(1.0), EuclideanSpace(2)],
                             ids=lambda m: m.kind)
    def test_two_steps_along_transported_direction(self, m):
        p = random_points(m, 50, 6)
        if isinstance(m, Sphere2):
            p[:, 0] = np.clip(p[:, 0], 0.3, math.pi - 0.3)
        v = np.random.default_rng(7).normal(size=p.shape)
        v = v / m.gnorm(p, v)[:, None]
        mid, w = m.exp_with_velocity(p, v, 0.4)
        end = m.exp(mid, w, 0.5)
        np.testing.assert_allclose(m.distance(p, end), 0.9, atol=1e-6)


class TestCurvatureAndVolume:
    def test_closed_forms(self):
        assert mf.scalar_curvature(EuclideanSpace(3), [1, 2, 3]) == 0
        assert mf.scalar_curvature(Circle(1.0), 0.2) == 0
        assert mf.scalar_curvature(Sphere2(2.0), [1.0, 1.0]) == pytest.approx(0.5)
        assert mf.scalar_curvature(HyperbolicPlane(2.0), [0.0, 1.0]) == pytest.approx(-0.5)

    def test_ball_volume_examples(self):
        assert float(mf.ball_volume(EuclideanLine(), 0.0, 0.25)) == 0.5
        assert float(mf.ball_volume(Circle(1.0), 0.0, math.pi)) == pytest.approx(2 * math.pi)
        assert float(mf.ball_volume(Sphere2(1.0), NORTH, math.pi / 2)) == \
            pytest.approx(2 * math.pi)

    def test_clamped_flag(self):
        v = mf.ball_volume(Circle(1.0), 0.0, 10.0)
        assert v.clamped and float(v) == pytest.approx(2 * math.pi)
        assert not mf.ball_volume(Circle(1.0), 0.0, 1.0).clamped


class TestChart:
    def sphere_chart(self):
        return Chart(2, "round_sphere", ((0.2, math.pi - 0.2), (-3.0, 3.0)), {"radius": 1.0})

    def test_round_sphere_curvature(self):
        # finite-difference curvature of the catalogued round metric
        R = mf.scalar_curvature(self.sphere_chart(), [1.0, 0.3])
        assert R == pytest.approx(2.0, rel=1e-5)

    def test_half_plane_curvature(self):
        c = Chart(2, "half_plane", ((-2.0, 2.0), (0.3, 3.0)), {"pseudo_radius": 1.0})
        assert mf.scalar_curvature(c, [0.1, 1.2]) == pytest.approx(-2.0, rel=1e-5)

    def test_cap_area_against_closed_form(self):
        area = float(self.sphere_chart().ball_volume([math.pi / 2, 0.0], 0.5))
        assert area == pytest.approx(2 * math.pi * (1 - math.cos(0.5)), rel=1e-6)

    def test_euclidean_chart_matches_builtin(self):
        c = Chart(2, "euclidean", ((-5.0, 5.0), (-5.0, 5.0)))
        e = EuclideanSpace(2)
        p, q = np.array([0.3, -0.2]), np.array([1.1, 0.4])
        assert mf.metric_density(c, p) == pytest.approx(mf.metric_density(e, p), abs=1e-6)
        assert mf.geodesic_distance(c, p, q) == pytest.approx(mf.geodesic_distance(e, p, q),
                                                              abs=1e-6)
        d = np.array([0.6, 0.8])
        np.testing.assert_allclose(mf.geodesic_step(c, p, d, 0.7),
                                   mf.geodesic_step(e, p, d, 0.7), atol=1e-6)
        assert mf.scalar_curvature(c, p) == pytest.approx(0.0, abs=1e-6)
        assert float(mf.ball_volume(c, p, 0.5)) == pytest.approx(float(mf.ball_volume(e, p, 0.5)),
                                                                 abs=1e-6)

    def test_chart_distance_on_sphere(self):
        c = self.sphere_chart()
        p, q = [1.0, 0.0], [1.4, 0.5]
        assert mf.geodesic_distance(c, p, q) == pytest.approx(
            mf.geodesic_distance(Sphere2(1.0), p, q), abs=1e-6)

    def test_domain_exit(self):
        c = Chart(2, "euclidean", ((-1.0, 1.0), (-1.0, 1.0)))
        with pytest.raises(DomainExitError) as info:
            mf.geodesic_step(c, [0.0, 0.0], [1.0, 0.0], 3.0)
        assert info.value.boundary_point is not None

    def test_curvature_near_boundary(self):
        c = Chart(2, "euclidean", ((-1.0, 1.0), (-1.0, 1.0)))
        with pytest.raises(NumericalError):
            mf.scalar_curvature(c, [1.0 - 1e-6, 0.0])

    def test_bad_metric_name(self):
        with pytest.raises(DomainError):
            Chart(2, "no_such_metric", ((0, 1), (0, 1)))


class TestFromSpec:
    @pytest.mark.parametrize("spec,kind", [("line", "line"), ("circle:2", "circle"),
                                           ('{"kind": "sphere2", "radius": 3}', "sphere2"),
                                           ("hyperbolic:1", "hyperbolic"),
                                           ("euclidean:3", "euclidean")])
    def test_round_trip(self, spec, kind):
        m = mf.from_spec(spec)
        assert m.kind == kind
        assert mf.from_spec(m.to_dict()) == m

    def test_unknown(self):
        with pytest.raises(DomainError):
            mf.from_spec("torus")

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-50, 50))
    def test_circle_angles_reduced(self, a):
        p = Circle(1.0).as_points(a)
        assert 0 <= p[0] < 2 * math.pi
