import json
import math

import numpy as np
import pytest
from scipy import integrate

from hyperfk import loeb, oracle
from hyperfk.errors import AccuracyError, ConfigurationError, DomainError, TruncationError
from hyperfk.oracle import CylinderSpec, GridChart
from hyperfk.potential import Potential
from hyperfk.walk import HyperfiniteGrid

INF = math.inf


class TestClosedForms:
    def test_free_value(self):
        assert oracle.free_line_kernel(0, 0, 1) == pytest.approx(0.3989423, abs=5e-8)

    def test_free_symmetry_and_mass(self):
        g = np.random.default_rng(0)
        a, b = g.normal(size=50), g.normal(size=50)
        np.testing.assert_array_equal(oracle.free_line_kernel(a, b, 0.7),
                                      oracle.free_line_kernel(b, a, 0.7))
        mass, _ = integrate.quad(lambda y: oracle.free_line_kernel(0, y, 1), -INF, INF,
                                 epsabs=1e-13)
        assert abs(mass - 1) < 1e-10

    def test_free_bad_time(self):
        with pytest.raises(DomainError):
            oracle.free_line_kernel(0, 0, 0.0)

    def test_circle_limits(self):
        assert oracle.circle_kernel(0.0, 2.0, 400.0, 1.5) == pytest.approx(1 / (2 * math.pi * 1.5),
                                                                          rel=1e-12)
        assert oracle.circle_kernel(1.0, 1.0, 0.2) == pytest.approx(
            oracle.free_line_kernel(0, 0, 0.2), abs=1e-12)

    def test_circle_semigroup(self):
        th = 2 * math.pi * np.arange(512) / 512
        w = 2 * math.pi / 512
        for x in (0.0, 1.0, 3.0):
            lhs = oracle.circle_kernel(x, 2.0, 0.8)
            rhs = np.sum(oracle.circle_kernel(x, th, 0.3) * oracle.circle_kernel(th, 2.0, 0.5)) * w
            assert abs(lhs - rhs) < 1e-10

    def test_sphere_equilibrium(self):
        assert oracle.sphere_kernel(1.0, 400.0, 2.0) == pytest.approx(1 / (16 * math.pi), rel=1e-12)

    def test_sphere_normalization(self):
        c, w = np.polynomial.legendre.leggauss(80)
        for t in (0.1, 0.5, 2.0):
            mass = 2 * math.pi * np.sum(w * oracle.sphere_kernel(np.arccos(c), t))
            assert abs(mass - 1) < 1e-9

    def test_sphere_positive(self):
        g = np.random.default_rng(1)
        gam = g.uniform(0, math.pi, 1000)
        t = g.uniform(0.05, 3.0, 1000)
        vals = np.array([oracle.sphere_kernel(a, b) for a, b in zip(gam, t)])
        assert np.all(vals >= 0)

    def test_sphere_truncation(self):
        with pytest.raises(TruncationError):
            oracle.sphere_kernel(0.0, 0.001, 1.0, l_max=50)
        assert oracle.sphere_kernel_tail_bound(0.3, 1.0, 50) < 1e-10


class TestGridPropagators:
    def test_free_center_entry(self):
        chart = GridChart.interval(-6, 6, 1201)
        P = oracle.grid_trotter_kernel(chart, Potential.zero(), 1.0, 16)
        assert P.at(0.0, 0.0) == pytest.approx(oracle.free_line_kernel(0, 0, 1), rel=5e-3)

    def test_constant_commutes(self):
        chart = GridChart.interval(-5, 5, 401)
        a = oracle.grid_trotter_kernel(chart, Potential.zero(), 0.5, 8).matrix
        b = oracle.grid_trotter_kernel(chart, Potential.constant(0.7), 0.5, 8).matrix
        np.testing.assert_allclose(b, a * math.exp(-0.35), rtol=1e-13, atol=1e-15 * a.max())

    def test_resolution_check(self):
        with pytest.raises(ConfigurationError):
            oracle.grid_trotter_kernel(GridChart.interval(-6, 6, 201), Potential.harmonic(), 1.0,
                                       512)

    def test_spectral_harmonic(self):
        chart = GridChart.interval(-8, 8, 1601)
        P = oracle.spectral_kernel(chart, Potential.harmonic(1.0), 1.0)
        ref = (2 * math.pi * math.sinh(1.0)) ** -0.5
        assert P.at(0.0, 0.0) == pytest.approx(ref, rel=2e-3)

    def test_trotter_halving(self):
        chart = GridChart.interval(-6, 6, 801)
        V = Potential.harmonic(1.0)
        ref = oracle.spectral_kernel(chart, V, 1.0).matrix
        devs = [np.max(np.abs(p.matrix - ref))
                for p in oracle.trotter_sequence(chart, V, 1.0, [8, 16, 32])]
        for a, b in zip(devs, devs[1:]):
            assert 0.35 <= b / a <= 0.65
        order = -np.polyfit(np.log([8, 16, 32]), np.log(devs), 1)[0]
        assert order >= 0.8

    @pytest.mark.slow
    def test_trotter_m1024_close_to_spectral(self):
        chart = GridChart.interval(-4, 4, 2049)
        V = Potential.harmonic(1.0)
        s = oracle.spectral_kernel(chart, V, 1.0).at(0.0, 0.0)
        p = oracle.grid_trotter_kernel(chart, V, 1.0, 1024).at(0.0, 0.0)
        assert p == pytest.approx(s, rel=5e-3)

    def test_row_integrals(self):
        circ = oracle.spectral_kernel(GridChart.circle(256, 1.0), Potential.zero(), 0.7)
        np.testing.assert_allclose(circ.row_integrals(), 1.0, atol=1e-8)
        line = oracle.spectral_kernel(GridChart.interval(-10, 10, 801), Potential.zero(), 1.0)
        interior = np.abs(line.nodes) < 3
        np.testing.assert_allclose(line.row_integrals()[interior], 1.0, atol=1e-6)

    def test_circle_chart_matches_wrapped_gaussian(self):
        P = oracle.spectral_kernel(GridChart.circle(512, 1.0), Potential.zero(), 0.5)
        assert P.at(0.0, 1.0) == pytest.approx(oracle.circle_kernel(0.0, 1.0, 0.5), rel=1e-3)

    def test_small_grid_rejected(self):
        with pytest.raises(ConfigurationError):
            GridChart.interval(0, 1, 10)

    def test_csv_export(self, tmp_path):
        P = oracle.spectral_kernel(GridChart.circle(64, 1.0), Potential.zero(), 0.5)
        path = tmp_path / "k.csv"
        P.write_csv(path)
        first, *rows = path.read_text().splitlines()
        header = json.loads(first[2:])
        assert header["t"] == 0.5 and "chart" in header
        assert len(rows) >= 64


def cyl(times, sets, q1=0.0, q2=0.0, t=1.0):
    return oracle.cylinder_measure(CylinderSpec(q1, q2, t, tuple(times), tuple(sets)))


class TestCylinder:
    def test_whole_line(self):
        assert cyl([0.5], [[(-50, 50)]]) == pytest.approx(0.398942, abs=1e-6)

    def test_half_line(self):
        assert cyl([0.5], [[(0, INF)]]) == pytest.approx(0.199471, abs=1e-6)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_all_real_collapses(self, k):
        times = [(i + 1) / (k + 1) for i in range(k)]
        v = cyl(times, [[(-INF, INF)]] * k, 0.2, -0.3)
        assert v == pytest.approx(oracle.free_line_kernel(0.2, -0.3, 1.0), abs=1e-9)

    def test_monotone(self):
        small = cyl([0.3, 0.6], [[(-0.5, 0.5)], [(-1, 1)]])
        large = cyl([0.3, 0.6], [[(-0.7, 0.5)], [(-1, 1.2)]])
        assert large >= small

    def test_union_is_additive(self):
        a = cyl([0.5], [[(-1, 0)]])
        b = cyl([0.5], [[(0.5, 2)]])
        assert cyl([0.5], [[(-1, 0), (0.5, 2)]]) == pytest.approx(a + b, abs=1e-10)

    def test_two_times_against_walks(self):
        p_quad = cyl([1 / 3, 2 / 3], [[(-1, 1)], [(-1, 1)]]) / oracle.free_line_kernel(0, 0, 1)
        # pinned-walk Monte Carlo at lattice times 1/3 and 2/3
        grid = HyperfiniteGrid(1.0, 3 * 2048)
        est = loeb.sample_pinned_cylinder(0.0, 0.0, grid, [(1 / 3, [(-1, 1)]), (2 / 3, [(-1, 1)])],
                                          100_000, seed=4)
        assert abs(est.value - p_quad) <= max(3 * est.std_error, 0.02 * p_quad)

    def test_spec_validation(self):
        with pytest.raises(DomainError):
            CylinderSpec(0, 0, 1, (0.6, 0.4), ([(0, 1)], [(0, 1)]))
        with pytest.raises(DomainError):
            CylinderSpec(0, 0, 1, (1.2,), ([(0, 1)],))

    def test_too_many_times(self):
        with pytest.raises((DomainError, ConfigurationError)):
            cyl([0.1, 0.2, 0.3, 0.4, 0.5], [[(-1, 1)]] * 5)

    def test_accuracy_budget(self):
        spec = CylinderSpec(0, 0, 1, (0.25, 0.5, 0.75), ([(-1, 1)],) * 3)
        with pytest.raises(AccuracyError):
            oracle.cylinder_measure(spec, tol=1e-15, order=2, max_panels=2)
