import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharpembed.analysis import (ELL2, INCONCLUSIVE, NOT_ELL2, Thresholds, absence_check,
                                 beta_Rtilde, fit_decay, oscillatory_sums, report_json,
                                 sharp_constant_for, sum_rule_check, tail_fraction, verdict_of)
from sharpembed.constants import sharp_A
from sharpembed.core import prufer_from_solution
from sharpembed.errors import DomainError
from sharpembed.potentials import sign_type_run, wvn_potential
from sharpembed.solver import integrate


def direct_solution(V, E, theta0, n_max):
    u = np.empty(n_max + 1)
    u[0], u[1] = math.cos(theta0), math.sin(theta0)
    for n in range(1, n_max):
        u[n + 1] = (E - V[n]) * u[n] - u[n - 1]
    return u


class TestVerdict:
    def test_rules(self):
        assert verdict_of(-2.0, 0.01, 0.001) == ELL2
        assert verdict_of(-2.0, 0.01, 0.05) == INCONCLUSIVE
        assert verdict_of(-0.5, 0.01, 0.5) == NOT_ELL2
        assert verdict_of(-1.01, 0.01, 0.001) == INCONCLUSIVE
        assert verdict_of(-1.05, 0.01, 0.001) == ELL2

    @given(st.floats(-5, 2), st.floats(0, 0.5), st.floats(0, 1))
    def test_exclusive(self, beta, se, tail):
        v = verdict_of(beta, se, tail)
        if v == ELL2:
            assert beta < -1 and tail < 0.01
        if v == NOT_ELL2:
            assert beta > -1

    def test_custom_thresholds(self):
        th = Thresholds(tail=0.5)
        assert verdict_of(-2.0, 0.01, 0.2, th) == ELL2


class TestFit:
    def test_wvn_exponent(self):
        # the subordinate WvN exponent is -gamma for Rt; a generic solution stays bounded
        E, gamma = 0.4, 1.5
        k = math.acos(E / 2) / math.pi
        V = wvn_potential(4 * gamma * math.sin(math.pi * k), k, 0.2, -1, 10**5)
        tr = integrate(V, E, 0.3, 10**5)
        rep = fit_decay(tr, 1000, 10**5)
        # early sites violate the step bound, so the auto channel falls back to Rt
        assert rep.channel == "logRtilde2" and rep.verdict == NOT_ELL2
        assert abs(rep.beta) < 2 * gamma

    def test_sign_type_is_ell2(self):
        k = (math.sqrt(5) - 1) / 2
        tr, _V = sign_type_run(2 * math.sin(math.pi * k) * math.pi / 2, k, 0.3, 10, 10**6)
        rep = fit_decay(tr, 1000, 10**6)
        assert rep.verdict == ELL2 and rep.beta == pytest.approx(-2.0, abs=0.05)
        b, se = beta_Rtilde(tr, 1000, 10**6)
        assert b == pytest.approx(0.5 * rep.beta, abs=0.05) and se >= 0

    def test_tail_fraction_oracle(self):
        rng = np.random.default_rng(4)
        n = 2000
        V = rng.uniform(-0.3, 0.3, n + 1) / (1 + np.arange(n + 1))
        u = direct_solution(V, 0.9, 0.5, n)
        tr = integrate(V, 0.9, 0.5, n, stride=1)
        S = np.cumsum(u[1:] ** 2 + u[:-1] ** 2)
        assert tail_fraction(tr, 2000) == pytest.approx((S[1999] - S[199]) / S[1999], rel=1e-10)

    def test_channel_auto_after_large_step(self):
        V = np.zeros(20001)
        V[5] = 5.0
        tr = integrate(V, 0.0, 0.2, 20000)
        assert fit_decay(tr, 100, 20000).channel == "logRtilde2"
        with pytest.raises(DomainError):
            fit_decay(tr, 100, 20000, channel="nope")

    def test_range_errors(self):
        tr = integrate(None, 0.0, 0.2, 10**4)
        with pytest.raises(DomainError):
            fit_decay(tr, 5000, 10**4)
        with pytest.raises(DomainError):
            fit_decay(integrate(None, 0.0, 0.2, 10**4, stride=2000), 100, 10**4)

    def test_free_is_flat(self):
        rep = fit_decay(integrate(None, 0.7, 1.0, 10**5), 100, 10**5)
        assert rep.beta == pytest.approx(0.0, abs=1e-12) and rep.verdict == NOT_ELL2

    def test_report_json(self, tmp_path):
        rep = fit_decay(integrate(None, 0.7, 1.0, 10**4), 100, 10**4)
        text = report_json(rep, tmp_path / "r.json", {"E": 0.7}, {"extra": 1})
        d = json.loads(text)
        assert d["config"] == {"E": 0.7} and d["extra"] == 1 and d["verdict"] == NOT_ELL2
        assert json.loads((tmp_path / "r.json").read_text()) == d


class TestSharpConstant:
    def test_examples(self):
        assert sharp_constant_for(0.0) == (2, 1.0)
        assert sharp_constant_for(1.0)[0] == 3
        q, A = sharp_constant_for(2 * math.cos(math.pi * (math.sqrt(5) - 1) / 2))
        assert q == 0 and A == pytest.approx(2 / math.pi)


class TestAbsence:
    def test_subcritical_grid(self):
        E, a = 1.0, 0.5
        k = 1 / 3
        _tr, V = sign_type_run(a, k, 0.2, 10, 10**5)
        rep = absence_check(V, E, a, theta_grid=6, n_max=10**5)
        assert rep.q == 3 and rep.all_not_ell2 and rep.floor_respected and rep.matched == []
        assert rep.predicted_floor == pytest.approx(-a * sharp_A(3) / math.sin(math.pi * k) - 0.1)

    def test_window(self):
        with pytest.raises(DomainError):
            absence_check(None, 1.95, 0.5, theta_grid=2, n_max=10**4)
        with pytest.raises(DomainError):
            absence_check(None, 0.0, 1.5, theta_grid=2, n_max=10**4)


class TestSumRule:
    def test_examples(self):
        r = sum_rule_check([0.0, 1.0], 1.0)
        assert r.lhs == 7.0 and r.rhs == 8.0 and r.passed
        assert not sum_rule_check([0.0, 0.0, 0.0], 0.5).passed

    def test_domain(self):
        with pytest.raises(DomainError):
            sum_rule_check([2.0], 1.0)


class TestOscillatory:
    def test_free_closed_form(self):
        k1, k2 = 0.3 + 1e-3 * math.sqrt(2), 0.61
        E1, E2 = 2 * math.cos(math.pi * k1), 2 * math.cos(math.pi * k2)
        n = 5000
        t1 = integrate(np.zeros(n + 1), E1, 0.4, n)
        t2 = integrate(np.zeros(n + 1), E2, 1.3, n)
        rep = oscillatory_sums(t1, t2, stride=1)
        th1 = prufer_from_solution(math.cos(0.4), math.sin(0.4), k1)[1]
        th2 = prufer_from_solution(math.cos(1.3), math.sin(1.3), k2)[1]
        t = np.arange(1, n + 1)
        a1 = th1 + (t - 1) * k1
        a2 = th2 + (t - 1) * k2
        S1 = np.cumsum(np.cos(4 * np.pi * a1) / (1 + t))
        S2 = np.cumsum(np.sin(2 * np.pi * a1) * np.sin(2 * np.pi * a2) / (1 + t))
        np.testing.assert_allclose(rep.S1, S1, atol=1e-9)
        np.testing.assert_allclose(rep.S2, S2, atol=1e-9)
        assert rep.sup_ratio1 >= rep.ratio1

    def test_wvn_bounded(self):
        E, gamma = 0.4, 1.0
        k = math.acos(E / 2) / math.pi
        n = 10**5
        V = wvn_potential(4 * gamma * math.sin(math.pi * k), k, 0.2, -1, n)
        rep = oscillatory_sums(integrate(V, E, 0.3, n), integrate(V, -0.9, 1.0, n))
        assert rep.ratio1 < 1.0 and rep.ratio2 < 1.0

    def test_csv(self):
        rep = oscillatory_sums(integrate(np.zeros(101), 0.3, 0.4, 100), stride=50)
        lines = rep.to_csv().splitlines()
        assert lines[0] == "n,S1,S2" and lines[1].endswith(",")

    def test_rejected(self):
        t = integrate(np.zeros(101), 0.0, 0.4, 100)
        with pytest.raises(DomainError):
            oscillatory_sums(t)
        a = integrate(np.zeros(101), 0.5, 0.4, 100)
        b = integrate(np.zeros(101), -0.5, 0.4, 100)
        with pytest.raises(DomainError):
            oscillatory_sums(a, b)
        with pytest.raises(DomainError):
            oscillatory_sums(a, integrate(np.zeros(101), 0.5, 1.4, 100))
        with pytest.raises(DomainError):
            oscillatory_sums(integrate(None, 0.5, 0.4, 100, keep_potential=False))
