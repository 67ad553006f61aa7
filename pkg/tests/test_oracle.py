"""The oracle layer itself: defining-integral quadratures and Picard oracle."""

import numpy as np
import pytest

from pointnls import charge, field, ops, oracle, specfun
from pointnls.errors import DomainError


class TestDefiningQuadratures:
    def test_I_matches_asymptotics_small(self):
        for t in (1e-8, 1e-5):
            ratio = oracle.quad_defining_I(t) * t * np.log(1.0 / t) ** 2
            assert 0.8 <= ratio <= 1.2

    def test_I_large_argument(self):
        assert oracle.quad_defining_I(30.0) == pytest.approx(np.exp(30.0),
                                                             rel=0.01)

    def test_N_is_integral_of_I(self):
        # Cross-consistency of the two independent quadratures.
        from scipy import integrate
        t = 0.5
        inner = integrate.quad(oracle.quad_defining_I, 1e-6, t,
                               epsabs=0.0, epsrel=1e-9, limit=200)[0]
        missing = oracle.quad_defining_N(1e-6)
        assert oracle.quad_defining_N(t) == pytest.approx(inner + missing,
                                                          rel=1e-4)

    def test_k0_small_and_large(self):
        assert oracle.quad_k0(1e-3) == pytest.approx(
            -np.log(5e-4) - specfun.EULER_GAMMA, abs=1e-4)
        assert oracle.quad_k0(10.0) < 2e-5

    def test_sici_domain(self):
        with pytest.raises(DomainError):
            oracle.quad_sici(0.0)


class TestGaussianOracle:
    def test_t_zero_value(self):
        # (U0(0) phi)(0) = a/(2b) under the radial convention.
        assert oracle.gaussian_free_evolution(1.0, 1.0, 0.0) == \
            pytest.approx(0.5, rel=1e-12)

    def test_modulus_decay(self):
        a, b = 1.0, 0.7
        for t in (0.5, 2.0, 5.0):
            v = oracle.gaussian_free_evolution(a, b, t)
            assert abs(v) == pytest.approx(
                abs(a) / (2.0 * np.hypot(b, t)), rel=1e-12)

    def test_matches_field_layer(self):
        datum = field.InitialDatum(
            lam=1.0, q0=0.0, regular=field.GaussianProfile(1.3 - 0.2j, 0.9))
        for t in (0.0, 0.7, 3.0):
            assert field.free_regular_at_center(datum, t) == pytest.approx(
                oracle.gaussian_free_evolution(1.3 - 0.2j, 0.9, t), rel=1e-10)


class TestPicardLinear:
    def test_zero_forcing(self):
        grid = ops.TimeGrid.geometric(0.25, 64)
        f = ops.SampledSignal(grid, np.zeros(64, dtype=complex))
        q, iters = oracle.picard_linear(f, 4.0 * np.pi + specfun.KAPPA,
                                        ops.kernel_table(0.25))
        assert np.all(q.values == 0.0)

    def test_fixed_point_residual(self):
        datum = field.InitialDatum(lam=1.0, q0=1.0,
                                   regular=field.GaussianProfile(1.0, 1.0))
        grid = ops.TimeGrid.geometric(0.25, 256)
        table = ops.kernel_table(0.25)
        f = charge.build_forcing(datum, grid, table)
        coeff = 4.0 * np.pi + specfun.KAPPA
        q, iters = oracle.picard_linear(f, coeff, table, tol=1e-12)
        # Residual of the affine fixed-point identity q = f - coeff * I q.
        iq = ops.apply_I(q, table=table)
        resid = np.max(np.abs(f.values - coeff * iq.values - q.values))
        assert resid < 1e-10
        assert iters > 0


class TestVerifySuites:
    def test_registry_complete(self):
        assert set(oracle.VERIFY_SUITES) == {"kernels", "operators",
                                             "charge", "conservation"}

    def test_report_line_format(self):
        rep = oracle.OracleReport("demo", 1.0, 1.0 + 1e-9, budget=10)
        line = rep.line(1e-6)
        assert line.startswith("PASS") and "demo" in line
        assert oracle.OracleReport("demo", 1.0, 1.1).line(1e-6).startswith(
            "FAIL")

    def test_operators_suite_passes(self):
        for report, tol in oracle.VERIFY_SUITES["operators"]():
            assert report.line(tol).startswith("PASS"), report.line(tol)
