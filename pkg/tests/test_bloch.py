import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spin_snr_synth import (
    BallEscapeError,
    BlochState,
    DomainError,
    EQUILIBRIUM,
    ExperimentTiming,
    PhysicalityError,
    RelaxationPair,
    integrate,
    normalize_params,
    radial_speed,
    radial_speed_dtheta,
    relax,
    relax_inverse,
    rotate,
    total_snr,
)
from conftest import disk_states, rate_pairs


class TestRelaxationPair:
    def test_unit_cancellation(self):
        p = normalize_params(1.0, 1.0, 1.0 / (2.0 * math.pi))
        assert p.gamma_t2 == pytest.approx(1.0, abs=1e-15)
        assert p.gamma_t1 == pytest.approx(1.0, abs=1e-15)

    def test_physical_form_of_reference_rates(self):
        p = normalize_params(2.0 * math.pi, 2.0 * math.pi / 1.8, 1.0)
        assert p.gamma_t2 == pytest.approx(1.8, abs=1e-14)
        assert p.gamma_t1 == pytest.approx(1.0, abs=1e-14)

    def test_t2_above_twice_t1_rejected(self):
        with pytest.raises(PhysicalityError):
            normalize_params(1.0, 3.0, 1.0)

    def test_override_accepts_unphysical(self):
        p = normalize_params(1.0, 3.0, 1.0, allow_unphysical=True)
        assert 2.0 * p.gamma_t2 < p.gamma_t1

    @pytest.mark.parametrize("t1,t2,td", [(0.0, 1, 1), (1, -2, 1), (1, 1, 0.0)])
    def test_nonpositive_inputs_rejected(self, t1, t2, td):
        with pytest.raises(DomainError):
            normalize_params(t1, t2, td)

    def test_direct_construction_validates(self):
        with pytest.raises(DomainError):
            RelaxationPair(-1.0, 1.0)
        with pytest.raises(PhysicalityError):
            RelaxationPair(0.4, 1.0)
        assert RelaxationPair(0.4, 1.0, allow_unphysical=True).gamma_t2 == 0.4


class TestBlochState:
    def test_outside_disk_rejected(self):
        with pytest.raises(DomainError):
            BlochState(0.9, 0.9)

    @given(disk_states())
    def test_polar_view_exact(self, s):
        assert s.r * math.cos(s.theta) == pytest.approx(s.y, abs=1e-15)
        assert s.r * math.sin(s.theta) == pytest.approx(s.z, abs=1e-15)


class TestRelax:
    def test_equilibrium_is_fixed_point(self, params_b):
        out = relax(EQUILIBRIUM, 5.0, params_b)
        assert (out.y, out.z) == (0.0, 1.0)

    def test_closed_form_example(self, params_b):
        out = relax(BlochState(0.6, 0.3), 1.0, params_b)
        assert out.y == pytest.approx(0.6 * math.exp(-1.8), abs=1e-15)
        assert out.z == pytest.approx(1.0 - 0.7 * math.exp(-1.0), abs=1e-15)
        # frozen values, cross-checked against RK4 in TestIntegrate
        assert out.y == pytest.approx(0.09917933293295192, abs=1e-15)
        assert out.z == pytest.approx(0.7424843911799903, abs=1e-15)

    @given(disk_states(), st.floats(0.0, 3.0), st.floats(0.0, 3.0), rate_pairs())
    @settings(max_examples=200)
    def test_semigroup(self, s, a, b, p):
        one = relax(relax(s, a, p), b, p)
        two = relax(s, a + b, p)
        assert math.hypot(one.y - two.y, one.z - two.z) <= 1e-12

    @given(disk_states(), rate_pairs())
    def test_zero_time_is_identity(self, s, p):
        out = relax(s, 0.0, p)
        assert (out.y, out.z) == (s.y, s.z)

    def test_negative_time_rejected(self, params_b):
        with pytest.raises(DomainError):
            relax(EQUILIBRIUM, -1.0, params_b)


class TestRelaxInverse:
    def test_equilibrium(self, params_b):
        out = relax_inverse(EQUILIBRIUM, 1.0, params_b)
        assert (out.y, out.z) == (0.0, 1.0)

    def test_inverts_relax_example(self, params_b):
        fwd = relax(BlochState(0.6, 0.3), 1.0, params_b)
        back = relax_inverse(fwd, 1.0, params_b)
        assert back.y == pytest.approx(0.6, abs=1e-12)
        assert back.z == pytest.approx(0.3, abs=1e-12)

    @given(disk_states(r_max=0.9), st.floats(0.0, 2.0), rate_pairs())
    @settings(max_examples=150)
    def test_roundtrip(self, s, tau, p):
        try:
            pre = relax_inverse(s, tau, p)
        except BallEscapeError:
            return
        out = relax(pre, tau, p)
        assert math.hypot(out.y - s.y, out.z - s.z) <= 1e-12

    def test_preimage_escaping_ball_rejected(self, params_b):
        # y would become 0.9*e^(2*1.8) > 1
        with pytest.raises(BallEscapeError):
            relax_inverse(BlochState(0.9, 0.1), 2.0, params_b)


class TestRotate:
    def test_quarter_flip(self):
        out = rotate(EQUILIBRIUM, math.pi / 2.0)
        assert out.y == pytest.approx(1.0, abs=1e-15)
        assert out.z == pytest.approx(0.0, abs=1e-15)

    def test_identity(self):
        out = rotate(EQUILIBRIUM, 0.0)
        assert (out.y, out.z) == (0.0, 1.0)

    @given(disk_states(), st.floats(-7.0, 7.0), st.floats(-7.0, 7.0))
    @settings(max_examples=300)
    def test_radius_preserved_and_additive(self, s, a, b):
        ra = rotate(s, a)
        assert abs(ra.y**2 + ra.z**2 - (s.y**2 + s.z**2)) <= 1e-14
        one = rotate(ra, b)
        two = rotate(s, a + b)
        assert math.hypot(one.y - two.y, one.z - two.z) <= 1e-12


class TestIntegrate:
    def test_free_evolution_matches_closed_form(self, params_b):
        s = BlochState(0.6, 0.3)
        exact = relax(s, 1.0, params_b)
        out = integrate(s, lambda t: 0.0, 1.0, params_b, step=1e-4)
        assert math.hypot(out.y - exact.y, out.z - exact.z) <= 1e-10

    def test_free_evolution_batch(self, params_b):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            r = 0.99 * math.sqrt(rng.uniform())
            th = rng.uniform(-math.pi, math.pi)
            s = BlochState(r * math.cos(th), r * math.sin(th))
            tau = rng.uniform(0.0, 2.0)
            exact = relax(s, tau, params_b)
            out = integrate(s, lambda t: 0.0, tau, params_b, step=1e-3)
            assert math.hypot(out.y - exact.y, out.z - exact.z) <= 1e-10

    @pytest.mark.parametrize("amp", [1e2, 1e3, 1e4])
    def test_bang_limit_approaches_rotation(self, params_b, amp):
        # constant u = A over phi/A tends to rotate(s, -phi) as A grows
        s = BlochState(0.3, 0.5)
        phi = 1.1
        out = integrate(s, lambda t: amp, phi / amp, params_b, step=min(1e-4, 0.01 / amp))
        tgt = rotate(s, -phi)
        assert math.hypot(out.y - tgt.y, out.z - tgt.z) <= 3.0 / amp

    def test_bang_limit_error_scales_inversely(self, params_b):
        s = BlochState(0.3, 0.5)
        phi = 1.1
        errs = []
        for amp in (1e2, 1e3, 1e4):
            out = integrate(s, lambda t: amp, phi / amp, params_b, step=0.01 / amp)
            tgt = rotate(s, -phi)
            errs.append(math.hypot(out.y - tgt.y, out.z - tgt.z))
        assert errs[0] > errs[1] > errs[2]
        assert 5.0 < errs[0] / errs[1] < 20.0

    def test_invalid_arguments(self, params_b):
        with pytest.raises(DomainError):
            integrate(EQUILIBRIUM, lambda t: 0.0, -1.0, params_b)
        with pytest.raises(DomainError):
            integrate(EQUILIBRIUM, lambda t: 0.0, 1.0, params_b, step=0.0)


class TestRadialSpeed:
    def test_equilibrium(self, params_b):
        assert radial_speed(EQUILIBRIUM, params_b) == 0.0

    def test_pure_transverse_decays_at_big_gamma(self, params_b):
        assert radial_speed(BlochState(1.0, 0.0), params_b) == pytest.approx(-1.8, abs=1e-15)

    def test_lower_axis_point(self, params_b):
        assert radial_speed(BlochState(0.0, -0.5), params_b) == pytest.approx(-1.5, abs=1e-14)

    def test_origin_undefined(self, params_b):
        with pytest.raises(DomainError):
            radial_speed(BlochState(0.0, 0.0), params_b)

    @given(disk_states(r_max=0.98), rate_pairs())
    @settings(max_examples=100, deadline=None)
    def test_matches_radius_derivative_along_trajectory(self, s, p):
        if s.r < 0.2:
            return
        h = 1e-4
        s1 = integrate(s, lambda t: 0.0, h, p, step=1e-5)
        s2 = integrate(s, lambda t: 0.0, 2.0 * h, p, step=1e-5)
        fd = (s2.r - s.r) / (2.0 * h)  # central difference at t = h
        # truncation ~ (h^2/6)*max|r'''|; r''' grows with rates^3 and 1/r^2
        tol = 1e-7 * (1.0 + p.gamma_t2 + p.gamma_t1) ** 3
        assert fd == pytest.approx(radial_speed(s1, p), abs=tol)


class TestRadialSpeedDtheta:
    def test_zero_on_axis(self, params_b):
        assert radial_speed_dtheta(BlochState(0.0, 0.4), params_b) == 0.0
        assert radial_speed_dtheta(BlochState(0.0, -0.4), params_b) == 0.0

    def test_zero_on_magic_plane(self, params_b):
        z0 = -1.0 / (2.0 * 0.8)
        assert radial_speed_dtheta(BlochState(0.3, z0), params_b) == pytest.approx(0.0, abs=1e-15)

    def test_direct_value(self, params_b):
        got = radial_speed_dtheta(BlochState(0.5, 0.5), params_b)
        assert got == pytest.approx(1.2727922061357856, abs=1e-14)

    def test_origin_undefined(self, params_b):
        with pytest.raises(DomainError):
            radial_speed_dtheta(BlochState(0.0, 0.0), params_b)

    @given(disk_states(r_max=0.97), rate_pairs())
    @settings(max_examples=150)
    def test_matches_finite_difference_over_theta(self, s, p):
        r = s.r
        if r < 0.05 or abs(s.y) < 0.05:
            return
        th = s.theta
        h = 1e-5
        plus = BlochState(r * math.cos(th + h), r * math.sin(th + h))
        minus = BlochState(r * math.cos(th - h), r * math.sin(th - h))
        fd = (radial_speed(plus, p) - radial_speed(minus, p)) / (2.0 * h)
        # the analytic form carries |y| where the true derivative carries y
        got = math.copysign(1.0, s.y) * radial_speed_dtheta(s, p)
        assert fd == pytest.approx(got, rel=1e-6, abs=1e-9)


class TestTotalSnr:
    def test_zero_signal(self):
        timing = ExperimentTiming(t_detect=1.0, t_total=50.0, n_cycles=10)
        assert total_snr(0.0, timing) == 0.0

    def test_single_block(self):
        timing = ExperimentTiming(t_detect=2.0, t_total=2.0, n_cycles=1)
        assert total_snr(0.37, timing) == pytest.approx(0.37, abs=1e-15)

    def test_sqrt_scaling(self):
        timing = ExperimentTiming(t_detect=1.0, t_total=100.0, n_cycles=50)
        assert total_snr(0.5, timing) == pytest.approx(5.0, abs=1e-14)

    def test_q_domain(self):
        timing = ExperimentTiming(t_detect=1.0, t_total=10.0, n_cycles=5)
        with pytest.raises(DomainError):
            total_snr(1.0, timing)
        with pytest.raises(DomainError):
            total_snr(-0.1, timing)

    def test_timing_validation(self):
        with pytest.raises(DomainError):
            ExperimentTiming(t_detect=1.0, t_total=3.0, n_cycles=5)
        with pytest.raises(DomainError):
            ExperimentTiming(t_detect=-1.0, t_total=3.0, n_cycles=1)
