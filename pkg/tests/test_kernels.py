"""Walk-kernel, Green-function, and constant tests.

Frozen numeric anchors were produced by independent oracles before being
fixed here: Monte-Carlo escape estimates for gamma_d, mpmath high-precision
quadrature for green0/green1 and the phi sums, and direct summation for the
uniformization kernels.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from votertime import kernels
from votertime.kernels import (
    DivergentIntegralError,
    QuadratureSpec,
    c_const,
    gamma_d,
    green0,
    green1,
    h_scale,
    laplacian_residual_v,
    p1_kernel,
    p1_torus,
    p_kernel,
    p_torus_kernel,
    phi_resolvent,
    resolvent_residual_phi,
    sum_phi_sq,
    v_potential,
)


class TestP1Kernel:
    def test_t_zero_is_kronecker(self):
        assert p1_kernel(0, 0.0) == 1.0
        assert p1_kernel(3, 0.0) == 0.0

    def test_normalization(self):
        for t in (0.5, 2.0, 37.0):
            total = sum(p1_kernel(k, t) for k in range(-200, 201))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_known_value_modified_bessel(self):
        # e^{-2t} I_k(2t) by scipy's Bessel evaluation, independent route
        from scipy.special import ive

        for k, t in ((0, 1.0), (2, 3.0), (7, 0.5)):
            assert p1_kernel(k, t) == pytest.approx(float(ive(k, 2 * t)), rel=1e-12)

    @given(st.integers(-30, 30), st.floats(0.01, 50.0))
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_range(self, k, t):
        v = p1_kernel(k, t)
        assert 0.0 <= v <= 1.0
        assert v == p1_kernel(-k, t)

    def test_product_kernel(self):
        t = 1.7
        assert p_kernel((2, -1, 0), t) == pytest.approx(
            p1_kernel(2, t) * p1_kernel(1, t) * p1_kernel(0, t), rel=1e-14
        )

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            p1_kernel(0, -1.0)


class TestTorusKernel:
    def test_wrap_is_image_sum(self):
        L, t = 5, 2.0
        for k in range(L):
            img = sum(p1_kernel(k + m * L, t) for m in range(-40, 41))
            assert p1_torus(k, t, L) == pytest.approx(img, rel=1e-12)

    def test_torus_normalization(self):
        L, t = 7, 3.0
        total = sum(p_torus_kernel((i, j), t, L) for i in range(L) for j in range(L))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_uniform_limit(self):
        # long times mix to the uniform distribution on the torus
        L = 5
        assert p1_torus(2, 500.0, L) == pytest.approx(1.0 / L, abs=1e-12)


class TestGreenFunctions:
    def test_divergent_below_d3(self):
        for d in (1, 2):
            with pytest.raises(DivergentIntegralError):
                green0(d)

    def test_frozen_anchors(self):
        # independent mpmath quadrature of int_0^inf (e^{-2s} I_0(2s))^d ds
        assert green0(3) == pytest.approx(0.252731009858663003, rel=1e-10)
        assert green0(4) == pytest.approx(0.154933390231060214, rel=1e-10)
        assert green0(5) == pytest.approx(0.115630812484023118, rel=1e-10)

    def test_gamma_identity_exact(self):
        for d in (3, 4, 5, 6):
            assert green0(d) * 2 * d * gamma_d(d) == pytest.approx(1.0, abs=1e-14)

    def test_gamma_anchors(self):
        assert gamma_d(3) == pytest.approx(0.6595, abs=5e-5)
        assert gamma_d(4) == pytest.approx(0.8068, abs=5e-5)
        assert gamma_d(5) == pytest.approx(0.8648, abs=5e-5)

    def test_green1_needs_d5(self):
        with pytest.raises(ValueError):
            green1(4)
        assert green1(5) == pytest.approx(0.0193494144038235, rel=1e-9)


class TestConstants:
    def test_c3_c4_anchors(self):
        assert c_const(3, 0.5) == pytest.approx(0.3441, abs=5e-5)
        assert c_const(4, 0.5) == pytest.approx(0.1430, abs=5e-5)

    def test_closed_forms(self):
        p = 0.3
        assert c_const(3, p) == pytest.approx(
            math.sqrt(4 * p * (1 - p) * gamma_d(3) / math.pi**1.5), rel=1e-12
        )
        assert c_const(4, p) == pytest.approx(
            math.sqrt(gamma_d(4) * p * (1 - p) / math.pi**2), rel=1e-12
        )
        assert c_const(5, p) == pytest.approx(
            math.sqrt(4 * 5 * p * (1 - p) * gamma_d(5) * green1(5)), rel=1e-12
        )

    @given(st.sampled_from([3, 4, 5, 6]), st.floats(0.0, 1.0))
    @settings(max_examples=40, deadline=None)
    def test_degenerate_density(self, d, p):
        v = c_const(d, p)
        assert v >= 0.0
        if p in (0.0, 1.0):
            assert v == 0.0

    def test_bad_density(self):
        with pytest.raises(ValueError):
            c_const(3, 1.5)


class TestHScale:
    def test_forms(self):
        t = 9.0
        assert h_scale(2, t) == pytest.approx(t / math.sqrt(math.log(t)))
        assert h_scale(3, t) == pytest.approx(t**0.75)
        assert h_scale(4, t) == pytest.approx(math.sqrt(t * math.log(t)))
        assert h_scale(5, t) == pytest.approx(math.sqrt(t))
        assert h_scale(9, t) == pytest.approx(math.sqrt(t))

    def test_log_domain(self):
        for d in (2, 4):
            with pytest.raises(ValueError):
                h_scale(d, 1.0)


class TestPotentials:
    def test_v_is_kernel_integral(self):
        from scipy.integrate import quad

        t, x = 2.0, (1, 0, 1)
        direct = quad(lambda s: p_kernel(x, s), 0, t, limit=200)[0]
        assert v_potential(t, x) == pytest.approx(direct, rel=1e-8)

    def test_laplacian_residual_small(self):
        # sum_{y~x} v(t,y) - 2d v(t,x) = p_t(O,x) - 1_{x=O}
        for x in ((0, 0, 0), (1, 0, 0), (1, 1, 0)):
            assert abs(laplacian_residual_v(1.0, x)) < 1e-8

    def test_resolvent_residual_small(self):
        for x in ((0, 0, 0, 0), (1, 0, 0, 0), (1, 1, 0, 0)):
            assert abs(resolvent_residual_phi(100.0, x)) < 1e-8

    def test_phi_positive_decaying(self):
        a = phi_resolvent(50.0, (0, 0, 0, 0))
        b = phi_resolvent(50.0, (3, 0, 0, 0))
        assert a > b > 0

    def test_sum_phi_sq_d5_matches_green1(self):
        assert sum_phi_sq(1e6, 5) == pytest.approx(green1(5), rel=0.01)

    def test_sum_phi_sq_d4_monotone_trend(self):
        target = 1.0 / (16 * math.pi**2)
        ratios = [sum_phi_sq(10.0**k, 4) / math.log(10.0**k) / target for k in (3, 4, 5, 6)]
        assert all(a > b for a, b in zip(ratios, ratios[1:]))
        assert all(r > 1.0 for r in ratios)


class TestQuadratureSpec:
    def test_defaults(self):
        spec = QuadratureSpec()
        assert spec.abs_tol == 1e-10
        assert spec.rel_tol == 1e-8
        assert spec.max_time_cut == 1e3

    def test_frozen(self):
        spec = QuadratureSpec()
        with pytest.raises(Exception):
            spec.abs_tol = 1.0
