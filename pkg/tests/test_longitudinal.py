from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlcasim.longitudinal import (
    IdmParams,
    KraussParams,
    desired_gap,
    idm_accel,
    integrate,
    krauss_safe_speed,
)


# Independent oracles: exact rational arithmetic except for the one square root.
def oracle_idm(a_max, b_comf, v0, T, s0, delta, v, gap, v_lead):
    F = Fraction
    root = F(math.sqrt(a_max * b_comf))
    s_star = F(s0) + F(v) * F(T) + F(v) * (F(v) - F(v_lead)) / (2 * root)
    free = 1 - (F(v) / F(v0)) ** int(delta)
    return float(F(a_max) * (free - (s_star / F(gap)) ** 2))


def oracle_krauss(b, tau, v_lead, gap, v=0.0):
    F = Fraction
    vs = F(v_lead) + (F(gap) - F(v_lead) * F(tau)) / ((F(v) + F(v_lead)) / (2 * F(b)) + F(tau))
    return max(0.0, float(vs))


class TestIdm:
    def test_standstill_free_road(self):
        assert idm_accel(IdmParams(a_max=1.5), 0.0, has_leader=False) == 1.5

    def test_free_flow_equilibrium(self):
        p = IdmParams(v0=30.0)
        assert idm_accel(p, 30.0, has_leader=False) == 0.0

    def test_hand_evaluated_point(self):
        p = IdmParams(a_max=1.5, b_comf=2.0, v0=30.0, T=1.5, s0=2.0, delta=4.0)
        assert desired_gap(p, 20.0, 20.0) == 32.0
        assert idm_accel(p, 20.0, 32.0, 20.0) == pytest.approx(-0.2962962962962963, abs=1e-12)

    def test_infinite_gap_drops_interaction(self):
        p = IdmParams()
        assert idm_accel(p, 10.0, math.inf, 0.0) == idm_accel(p, 10.0, has_leader=False)

    @pytest.mark.parametrize("gap", [0.0, -1.0])
    def test_non_positive_gap_is_domain_error(self, gap):
        with pytest.raises(ValueError):
            idm_accel(IdmParams(), 10.0, gap, 5.0)

    def test_params_must_be_positive(self):
        with pytest.raises(ValueError):
            IdmParams(T=0.0)

    def test_random_points_match_oracle(self):
        rng = random.Random(7)
        worst = 0.0
        for _ in range(1000):
            a_max, b_comf = rng.uniform(0.5, 3.0), rng.uniform(0.5, 4.0)
            v0, T, s0 = rng.uniform(10, 40), rng.uniform(0.5, 2.5), rng.uniform(0.5, 5)
            delta = float(rng.choice([2, 4, 6]))
            v, v_lead, gap = rng.uniform(0, v0), rng.uniform(0, v0), rng.uniform(1, 200)
            p = IdmParams(a_max, b_comf, v0, T, s0, delta)
            worst = max(worst, abs(idm_accel(p, v, gap, v_lead)
                                   - oracle_idm(a_max, b_comf, v0, T, s0, delta, v, gap, v_lead)))
        assert worst <= 1e-9

    def test_equilibrium_gap_gives_zero_acceleration(self):
        rng = random.Random(11)
        for _ in range(200):
            p = IdmParams(a_max=rng.uniform(0.5, 3), b_comf=rng.uniform(0.5, 4),
                          v0=rng.uniform(15, 40), T=rng.uniform(0.5, 2.5), s0=rng.uniform(1, 4))
            ve = rng.uniform(0.5, p.v0 * 0.95)
            # the free-road deficit is part of the closed form, so the zero-accel gap is s*/sqrt(free)
            s_e = desired_gap(p, ve, ve) / math.sqrt(1 - (ve / p.v0) ** p.delta)
            assert abs(idm_accel(p, ve, s_e, ve)) <= 1e-12

    def test_finite_difference_in_gap(self):
        rng = random.Random(3)
        for _ in range(100):
            p = IdmParams(v0=rng.uniform(15, 35))
            v, vl, s = rng.uniform(0, p.v0), rng.uniform(0, p.v0), rng.uniform(5, 150)
            h = 1e-4 * s
            fd = (idm_accel(p, v, s + h, vl) - idm_accel(p, v, s - h, vl)) / (2 * h)
            exact = 2 * p.a_max * desired_gap(p, v, vl) ** 2 / s ** 3
            assert fd == pytest.approx(exact, rel=1e-6)

    @given(st.floats(0, 30), st.floats(0.1, 500), st.floats(0, 40))
    def test_bounded_by_a_max(self, v, gap, vl):
        assert idm_accel(IdmParams(v0=30.0), v, gap, vl) <= 1.5

    def test_nonincreasing_in_speed(self):
        # The unclipped s* turns negative behind a much faster leader, where
        # the closed form is not monotone; below this leader speed ds*/dv >= 0.
        p = IdmParams(v0=30.0)
        vl_max = 2 * p.T * math.sqrt(p.a_max * p.b_comf)
        rng = random.Random(5)
        for _ in range(100):
            gap, vl = rng.uniform(2, 200), rng.uniform(0, vl_max)
            vs = sorted(rng.uniform(0, 30) for _ in range(20))
            acc = [idm_accel(p, v, gap, vl) for v in vs]
            assert all(b <= a + 1e-12 for a, b in zip(acc, acc[1:]))


class TestKrauss:
    def test_stopped_wall(self):
        assert krauss_safe_speed(KraussParams(), 0.0, 0.0) == 0.0

    def test_hand_evaluated_point(self):
        got = krauss_safe_speed(KraussParams(b=4.0, tau=1.0), 10.0, 30.0)
        assert got == pytest.approx(10 + 20 / 2.25, abs=1e-12)
        assert got == pytest.approx(18.888888888888889, abs=1e-12)

    def test_own_speed_enters_denominator(self):
        p = KraussParams(b=4.0, tau=1.0)
        assert krauss_safe_speed(p, 10.0, 30.0, v=6.0) == pytest.approx(10 + 20 / 3.0)

    def test_large_gap_exceeds_desired_speeds(self):
        assert krauss_safe_speed(KraussParams(), 20.0, 1000.0) > 60.0

    @given(st.floats(0, 40), st.floats(0, 300), st.floats(0, 40))
    def test_never_negative(self, vl, gap, v):
        assert krauss_safe_speed(KraussParams(), vl, gap, v) >= 0.0

    def test_negative_gap_rejected(self):
        with pytest.raises(ValueError):
            krauss_safe_speed(KraussParams(), 5.0, -0.5)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            KraussParams(tau=0.0)
        with pytest.raises(ValueError):
            KraussParams(sigma=1.5)

    def test_random_points_match_oracle(self):
        rng = random.Random(13)
        worst = 0.0
        for _ in range(1000):
            b, tau = rng.uniform(1, 9), rng.uniform(0.2, 2)
            vl, gap, v = rng.uniform(0, 40), rng.uniform(0, 300), rng.uniform(0, 40)
            p = KraussParams(b=b, tau=tau)
            worst = max(worst, abs(krauss_safe_speed(p, vl, gap, v) - oracle_krauss(b, tau, vl, gap, v)))
            worst = max(worst, abs(krauss_safe_speed(p, vl, gap) - oracle_krauss(b, tau, vl, gap)))
        assert worst <= 1e-9


class TestIntegrate:
    @pytest.mark.parametrize("v,a,dt,expected", [
        (10.0, 0.0, 0.25, (10.0, 2.5)),
        (1.0, -8.0, 0.25, (0.0, 0.125)),
        (0.0, 1.5, 0.25, (0.375, 0.046875)),
    ])
    def test_examples(self, v, a, dt, expected):
        assert integrate(v, a, dt) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("dt", [0.0, -0.1])
    def test_non_positive_dt(self, dt):
        with pytest.raises(ValueError):
            integrate(1.0, 0.0, dt)

    @given(st.floats(0, 60), st.floats(-20, 5), st.floats(0.01, 1.0))
    def test_never_negative(self, v, a, dt):
        nv, dx = integrate(v, a, dt)
        assert nv >= 0.0 and dx >= 0.0
