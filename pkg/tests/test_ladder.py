"""Dilation, rung, residual, and certificate tests.

Grid estimates are lower bounds by construction, so every certificate
comparison against an analytic budget is exact, not tolerance-tuned.
"""

import math

import numpy as np
import pytest

from scaleladder.ladder import (
    DomainError,
    LadderSpec,
    certify_linearization,
    certify_rungs,
    compose_ladder,
    dilate,
    dilate_inverse,
    estimate_lipschitz,
    estimate_second_derivative_sup,
    linear_bundle,
    psi,
    psi_curve_rows,
    psi_domain,
    psi_prime,
    rung,
    tanh_bundle,
    tanh_psi_closed_form,
)


class TestBundles:
    def test_tanh_constants_match_grid_maximization(self, tanh1):
        # sup |(f^-1)'| over tanh((-1,1)) is cosh(1)^2; 1% inflation on top
        assert tanh1.m1 == pytest.approx(1.01 * math.cosh(1.0) ** 2, rel=1e-4)
        assert tanh1.m1 >= 1.0
        assert tanh1.m2 > 0
        assert tanh1.c1 == pytest.approx(3 * tanh1.m1 * tanh1.m2, abs=0)
        assert tanh1.c2 == pytest.approx(tanh1.m2 * (tanh1.m1**2 + tanh1.m1), abs=0)

    def test_inverse_round_trip(self, tanh1, sinh1, linear2):
        for bundle in (tanh1, sinh1, linear2):
            xs = np.linspace(-0.99, 0.99, 501) * bundle.radius
            np.testing.assert_allclose(bundle.f_inv(bundle.f(xs)), xs, atol=1e-10)

    def test_f_of_zero_is_zero(self, tanh1, sinh1, linear2):
        for bundle in (tanh1, sinh1, linear2):
            assert float(bundle.f(0.0)) == pytest.approx(0.0, abs=1e-15)

    def test_derivative_bounds_hold_on_grids(self, tanh1):
        xs = np.linspace(-1, 1, 2001)
        assert np.max(np.abs(tanh1.df(xs))) <= tanh1.m1
        assert np.max(np.abs(tanh1.d2f(xs))) <= tanh1.m2
        ys = np.tanh(xs)
        assert np.max(np.abs(tanh1.df_inv(ys))) <= tanh1.m1
        assert np.max(np.abs(tanh1.d2f_inv(ys))) <= tanh1.m2


class TestLadderSpec:
    def test_geometric(self):
        spec = LadderSpec.geometric(2.0, 5)
        assert spec.d == 5
        assert spec.scales[0] == pytest.approx(2.0**-5)
        assert spec.scales[-1] == 1.0

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            LadderSpec((0.5, 0.25, 1.0))

    def test_rejects_top_scale_not_one(self):
        with pytest.raises(ValueError):
            LadderSpec((0.25, 0.5))


class TestDilation:
    def test_identity_scale(self, tanh1):
        assert dilate(tanh1, 1.0, 0.3) == pytest.approx(math.tanh(0.3), abs=1e-15)

    def test_tanh_example(self, tanh1):
        assert dilate(tanh1, 0.5, 1.0) == pytest.approx(math.tanh(0.5) / 0.5, abs=1e-12)
        assert dilate(tanh1, 0.5, 1.0) == pytest.approx(0.924234, abs=1e-6)

    def test_linear_is_scale_invariant(self, linear2):
        for gamma in (0.125, 0.5, 1.0):
            xs = np.linspace(-0.9, 0.9, 11)
            np.testing.assert_allclose(dilate(linear2, gamma, xs), 2.0 * xs, atol=1e-14)

    def test_out_of_domain_raises(self, tanh1):
        with pytest.raises(DomainError):
            dilate(tanh1, 1.0, 1.5)

    def test_inverse_round_trip(self, tanh1):
        xs = np.linspace(-0.9, 0.9, 101)
        np.testing.assert_allclose(
            dilate_inverse(tanh1, 0.25, dilate(tanh1, 0.25, xs)), xs, atol=1e-10
        )
        assert dilate_inverse(tanh1, 0.25, dilate(tanh1, 0.25, 0.3)) == pytest.approx(0.3, abs=1e-10)

    def test_inverse_at_identity_scale(self, tanh1):
        assert dilate_inverse(tanh1, 1.0, 0.5) == pytest.approx(math.atanh(0.5), abs=1e-12)

    def test_linear_inverse(self, linear2):
        assert dilate_inverse(linear2, 0.5, 0.8) == pytest.approx(0.4, abs=1e-14)


class TestRung:
    def test_equal_scales_identity(self, tanh1):
        xs = np.linspace(-0.8, 0.8, 9)
        np.testing.assert_allclose(rung(tanh1, 0.5, 0.5, xs), xs, atol=1e-10)

    def test_chase_composition(self, tanh1):
        x = math.tanh(0.5) / 0.5  # = f_[1/2](1)
        assert rung(tanh1, 0.5, 1.0, x) == pytest.approx(math.tanh(1.0), abs=1e-12)

    def test_linear_rung_is_identity(self, linear2):
        xs = np.linspace(-1.5, 1.5, 11)
        np.testing.assert_allclose(rung(linear2, 0.25, 1.0, xs), xs, atol=1e-13)

    def test_rejects_decreasing_scales(self, tanh1):
        with pytest.raises(ValueError):
            rung(tanh1, 1.0, 0.5, 0.1)


class TestPsi:
    def test_linear_residual_vanishes(self, linear2):
        lo, hi = psi_domain(linear2, 0.5)
        xs = np.linspace(lo, hi, 101)
        np.testing.assert_allclose(psi(linear2, 0.5, 1.0, xs), 0.0, atol=1e-13)

    def test_equal_scales_zero(self, tanh1):
        assert psi(tanh1, 0.5, 0.5, 0.4) == pytest.approx(0.0, abs=1e-10)

    def test_closed_form_point(self):
        # x=1 needs atanh(0.5)/0.5 ~ 1.0986 inside the bundle's radius
        bundle = tanh_bundle(1.2)
        assert psi(bundle, 0.5, 1.0, 1.0) == pytest.approx(-0.2, abs=1e-12)

    def test_closed_form_values(self):
        assert tanh_psi_closed_form(0.5, 0.0) == 0.0
        assert tanh_psi_closed_form(0.5, 1.0) == pytest.approx(-0.2, abs=1e-15)
        assert tanh_psi_closed_form(1.0, 2.0) == pytest.approx(-1.6, abs=1e-15)

    def test_closed_form_equivalence_all_levels(self, tanh1):
        spec = LadderSpec.geometric(2.0, 5)
        for k in range(1, 6):
            g_prev, g_next = spec.scales[k - 1], spec.scales[k]
            lo, hi = psi_domain(tanh1, g_prev)
            xs = np.linspace(lo, hi, 1000)
            np.testing.assert_allclose(
                psi(tanh1, g_prev, g_next, xs), tanh_psi_closed_form(g_prev, xs), atol=1e-10
            )

    def test_psi_prime_matches_finite_differences(self, tanh1):
        lo, hi = psi_domain(tanh1, 0.25)
        xs = np.linspace(lo * 0.9, hi * 0.9, 51)
        h = 1e-6
        numeric = (psi(tanh1, 0.25, 0.5, xs + h) - psi(tanh1, 0.25, 0.5, xs - h)) / (2 * h)
        np.testing.assert_allclose(psi_prime(tanh1, 0.25, 0.5, xs), numeric, atol=1e-8)


class TestCompose:
    def test_single_level(self, tanh1):
        spec = LadderSpec((0.5, 1.0))
        assert compose_ladder(tanh1, spec, 0.4) == pytest.approx(math.tanh(0.4), abs=1e-12)

    def test_five_levels_tanh(self, tanh1):
        spec = LadderSpec.geometric(2.0, 5)
        assert compose_ladder(tanh1, spec, 0.7) == pytest.approx(math.tanh(0.7), abs=1e-9)
        assert compose_ladder(tanh1, spec, 0.7) == pytest.approx(0.604368, abs=1e-6)

    def test_telescoping_grid(self, tanh1, sinh1, linear2):
        spec = LadderSpec.geometric(2.0, 5)
        for bundle in (tanh1, sinh1, linear2):
            xs = np.linspace(-0.999, 0.999, 200) * bundle.radius
            vals = np.array([compose_ladder(bundle, spec, float(x)) for x in xs])
            np.testing.assert_allclose(vals, bundle.f(xs), atol=1e-9)


class TestEstimators:
    def test_linear_slope(self):
        assert estimate_lipschitz(lambda x: 3.0 * x, -1, 1, 100) == pytest.approx(3.0, abs=1e-9)

    def test_quadratic_approaches_sup_from_below(self):
        est = estimate_lipschitz(lambda x: x**2, 0.0, 1.0, 1001)
        assert est == pytest.approx(2.0 - 1e-3, abs=1e-9)
        assert est <= 2.0

    def test_constant_is_zero(self):
        assert estimate_lipschitz(lambda x: np.full_like(np.asarray(x, dtype=float), 5.0), 0, 1, 50) == 0.0

    def test_second_difference_on_quadratic(self):
        est = estimate_second_derivative_sup(lambda x: 0.5 * 7.0 * x**2, -1, 1, 1000)
        assert est == pytest.approx(7.0, rel=1e-6)

    def test_rejects_degenerate_grids(self):
        with pytest.raises(ValueError):
            estimate_lipschitz(lambda x: x, 1.0, 0.0, 10)
        with pytest.raises(ValueError):
            estimate_lipschitz(lambda x: x, 0.0, 1.0, 1)


class TestCertificates:
    def test_tanh_rungs_all_pass(self, tanh1):
        certs = certify_rungs(tanh1, LadderSpec.geometric(2.0, 5), grid_n=2000)
        assert len(certs) == 5
        for cert in certs:
            assert cert.lip_est <= cert.lip_bound
            assert cert.smooth_est <= cert.smooth_bound
            assert cert.passed

    def test_linear_rungs_are_trivial(self, linear2):
        certs = certify_rungs(linear2, LadderSpec.geometric(2.0, 3), grid_n=500)
        for cert in certs:
            assert cert.lip_est == pytest.approx(0.0, abs=1e-12)
            assert cert.lip_bound == 0.0
            assert cert.passed

    def test_vanishing_gap_shrinks_both_sides(self, tanh1):
        gap = 1e-6
        certs = certify_rungs(tanh1, LadderSpec((0.5, 0.5 + gap, 1.0)), grid_n=500)
        first = certs[0]
        assert first.lip_bound == pytest.approx(tanh1.c1 * tanh1.radius * gap, rel=1e-12)
        assert first.lip_est <= first.lip_bound
        assert first.lip_est < 1e-4

    def test_linearization_certificates(self, tanh1):
        for gamma in (2.0**-5, 2.0**-3):
            cert = certify_linearization(tanh1, gamma, grid_n=2000)
            assert cert.lip_est <= cert.bound
            assert cert.bound == pytest.approx(gamma * tanh1.m2 * tanh1.radius, abs=0)
            assert cert.passed

    def test_linear_linearization_zero(self, linear2):
        cert = certify_linearization(linear2, 0.5, grid_n=500)
        assert cert.lip_est == 0.0
        assert cert.bound == 0.0
        assert cert.passed


class TestPsiCurves:
    def test_rows_shape_and_zero_at_origin(self, tanh1):
        rows = psi_curve_rows(tanh1, LadderSpec.geometric(2.0, 5), points=101)
        assert len(rows) == 5 * 101
        levels = {k for k, _, _ in rows}
        assert levels == {1, 2, 3, 4, 5}
        # residual vanishes at the origin: interpolate nearest-x row per level
        for k in range(1, 6):
            pts = [(x, v) for kk, x, v in rows if kk == k]
            x0, v0 = min(pts, key=lambda t: abs(t[0]))
            assert abs(v0) < 5e-2  # coarse grid, fine check happens in closed-form test

    def test_larger_coarse_scale_gives_larger_residual(self, tanh1):
        # at fixed x > 0 the magnitude grows with the coarser scale
        x = 0.5
        values = [abs(tanh_psi_closed_form(g, x)) for g in (0.0625, 0.125, 0.25, 0.5)]
        assert values == sorted(values)
