"""Special-function layer: values, asymptotics, and defining-integral checks."""

import numpy as np
import pytest
from scipy import special

from pointnls import oracle, specfun
from pointnls.errors import DomainError


def test_kappa_constant():
    expected = -2.0 * (np.log(2.0) - specfun.EULER_GAMMA + 0.25j * np.pi)
    assert specfun.KAPPA == pytest.approx(expected)


class TestVolterraI:
    def test_positive_and_decreasing_small(self):
        # I decreases from its 1/(t log^2 t) singularity until its minimum
        # near t ~ 0.3, then grows toward e^t.
        ts = np.geomspace(1e-10, 0.2, 40)
        vals = np.array([specfun.volterra_I(t) for t in ts])
        assert np.all(vals > 0.0)
        assert np.all(np.diff(vals) < 0.0)

    def test_convexity_random_triples(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            a, b, c = np.sort(rng.uniform(1e-3, 10.0, size=3))
            if c - a < 1e-6:
                continue
            ia, ib, ic = (specfun.volterra_I(x) for x in (a, b, c))
            chord = ia + (ic - ia) * (b - a) / (c - a)
            assert ib <= chord * (1.0 + 1e-12)

    def test_asymptotic_sandwich(self):
        for t in np.geomspace(1e-10, 1e-4, 20):
            ratio = specfun.volterra_I(t) * t * np.log(1.0 / t) ** 2
            assert 0.8 <= ratio <= 1.2

    def test_large_argument_exponential(self):
        for t in (20.0, 30.0):
            assert abs(specfun.volterra_I(t) / np.exp(t) - 1.0) < 0.01

    def test_defining_integral_half(self):
        assert specfun.volterra_I(0.5) == pytest.approx(
            oracle.quad_defining_I(0.5), rel=1e-8)

    def test_zero_rejected(self):
        with pytest.raises(DomainError):
            specfun.volterra_I(0.0)
        with pytest.raises(DomainError):
            specfun.volterra_I(-1.0)


class TestVolterraN:
    def test_zero(self):
        assert specfun.volterra_N(0.0) == 0.0

    def test_log_asymptotic(self):
        assert specfun.volterra_N(1e-8) == pytest.approx(
            1.0 / np.log(1e8), rel=0.15)

    def test_strictly_increasing(self):
        ts = np.concatenate(([0.0], np.geomspace(1e-12, 4.0, 60)))
        vals = np.array([specfun.volterra_N(t) for t in ts])
        assert np.all(np.diff(vals) > 0.0)

    def test_defining_integral_one(self):
        assert specfun.volterra_N(1.0) == pytest.approx(
            oracle.quad_defining_N(1.0), rel=1e-7)

    def test_derivative_consistency(self):
        # (N(t+h) - N(t)) / h ~= I(t + h/2) on [0.1, 2].
        h = 1e-5
        for t in (0.1, 0.5, 1.0, 2.0):
            diff = (specfun.volterra_N(t + h) - specfun.volterra_N(t)) / h
            assert diff == pytest.approx(specfun.volterra_I(t + 0.5 * h),
                                         rel=1e-6)


class TestVolterraP:
    def test_bounded_by_tN(self):
        for t in np.geomspace(1e-8, 2.0, 20):
            p = specfun.volterra_P(t)
            assert 0.0 < p < t * specfun.volterra_N(t)

    def test_defining_integral(self):
        for t in (1e-4, 0.5):
            assert specfun.volterra_P(t) == pytest.approx(
                oracle.quad_defining_P(t), rel=1e-7)


class TestMacdonaldK0:
    def test_integral_representation(self):
        assert specfun.macdonald_K0(1.0) == pytest.approx(
            oracle.quad_k0(1.0), rel=1e-10)

    def test_small_argument_log(self):
        x = 1e-6
        expected = -np.log(0.5 * x) - specfun.EULER_GAMMA
        assert abs(specfun.macdonald_K0(x) - expected) < 1e-4

    def test_large_argument_decay(self):
        assert specfun.macdonald_K0(50.0) < 1e-20

    def test_positive_decreasing(self):
        xs = np.geomspace(1e-4, 10.0, 30)
        vals = np.array([specfun.macdonald_K0(x) for x in xs])
        assert np.all(vals > 0.0)
        assert np.all(np.diff(vals) < 0.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            specfun.macdonald_K0(0.0)


class TestSici:
    def test_small_argument_limit(self):
        si, _ = specfun.sici(1e-12)
        assert si == pytest.approx(-0.5 * np.pi, abs=1e-10)

    def test_defining_integrals(self):
        si_o, ci_o = oracle.quad_sici(1.0)
        si_m, ci_m = specfun.sici(1.0)
        assert si_m == pytest.approx(si_o, abs=1e-10)
        assert ci_m == pytest.approx(ci_o, abs=1e-10)

    def test_decay(self):
        si, ci = specfun.sici(100.0)
        assert abs(si) < 0.02 and abs(ci) < 0.02


class TestQSeries:
    def test_lambda_zero(self):
        for t in (0.0, 0.5, 3.0):
            assert specfun.q_series(0.0, t) == -0.5j * np.pi ** 2

    def test_time_zero(self):
        assert specfun.q_series(1.0, 0.0) == -0.5j * np.pi ** 2

    def test_branch_continuity(self):
        # The series branch hands over to the closed form at x = 12.
        below = specfun.q_series(1.0, 11.999)
        above = specfun.q_series(1.0, 12.001)
        assert abs(above - below) < 1e-2

    def test_closed_form_consistency(self):
        # Series branch against Ci/Si directly: Q = pi*(Cin + i*si).
        for x in (0.3, 2.0, 8.0, 15.0):
            si_v, ci_v = special.sici(x)
            expected = np.pi * ((specfun.EULER_GAMMA + np.log(x) - ci_v)
                                + 1j * (si_v - 0.5 * np.pi))
            assert specfun.q_series(1.0, x) == pytest.approx(expected,
                                                             rel=1e-10)

    def test_real_part_even_in_x(self):
        # Real part comes from an even series in lam*t.
        assert specfun.q_series(2.0, 0.7).real == pytest.approx(
            specfun.q_series(0.7, 2.0).real, rel=1e-12)

    def test_momentum_integral_identity(self):
        # -pi e^{i lam t}(gamma + log lam + log t) + e^{i lam t} Q(lam;t)
        # equals the 2D momentum integral of e^{-ip^2 t}/(p^2+lam).
        lam, t = 1.0, 2.0
        phase = np.exp(1j * lam * t)
        lhs = phase * (-np.pi * (specfun.EULER_GAMMA + np.log(lam)
                                 + np.log(t)) + specfun.q_series(lam, t))
        rhs = oracle.momentum_free_decay(lam, t)
        assert lhs == pytest.approx(rhs, abs=1e-6)

    def test_vectorized_matches_scalar(self):
        ts = np.array([0.0, 0.1, 1.0, 14.0])
        vec = specfun.q_series_vec(1.3, ts)
        for i, t in enumerate(ts):
            assert vec[i] == specfun.q_series(1.3, t)

    def test_domain(self):
        with pytest.raises(DomainError):
            specfun.q_series(-1.0, 1.0)
        with pytest.raises(DomainError):
            specfun.q_series(1.0, -1.0)
