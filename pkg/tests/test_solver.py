import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sharpembed.core import BoundaryCondition
from sharpembed.errors import DomainError, NumericFailure
from sharpembed.potentials import wvn_potential
from sharpembed.solver import (Trajectory, geometric_samples, integrate, integrate_backward,
                               make_samples, subordinate_solution, true_pair, wronskian)


def direct_solution(V, E, theta0, n_max):
    """Plain recursion without renormalisation; u[n] for n = 0..n_max."""
    u = np.empty(n_max + 1)
    u[0], u[1] = math.cos(theta0), math.sin(theta0)
    for n in range(1, n_max):
        u[n + 1] = (E - V[n]) * u[n] - u[n - 1]
    return u


class TestIntegrate:
    def test_free_bounded(self):
        for E in (-1.5, 0.0, 0.9):
            tr = integrate(None, E, 0.4, 10**5)
            k = math.acos(E / 2) / math.pi
            bound = 2 * math.log(2 / math.sin(math.pi * k))
            assert np.all(np.abs(tr.logRtilde2) <= bound)
            assert np.ptp(tr.logR2) < 1e-10

    def test_matches_plain_recursion(self):
        rng = np.random.default_rng(5)
        n_max = 1000
        V = rng.uniform(-0.5, 0.5, n_max + 1) / (1 + np.arange(n_max + 1)) ** 0.5
        u = direct_solution(V, 0.3, 0.7, n_max)
        tr = integrate(V, 0.3, 0.7, n_max, stride=1)
        s = np.exp(0.5 * tr.logRtilde2)
        np.testing.assert_allclose(s * tr.u[:, 1], u[1:], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(s * tr.u[:, 0], u[:-1], rtol=1e-12, atol=1e-12)
        # ratios agree too
        ok = np.abs(u[10:-1]) > 1e-2 * np.abs(u).max()
        ratio = tr.u[10:, 1] / tr.u[10:, 0]
        np.testing.assert_allclose(ratio[ok], (u[11:] / u[10:-1])[ok], rtol=1e-12, atol=1e-14)

    def test_partial_sums(self):
        rng = np.random.default_rng(6)
        V = rng.uniform(-0.1, 0.1, 301)
        u = direct_solution(V, -0.4, 1.1, 300)
        tr = integrate(V, -0.4, 1.1, 300, stride=1)
        S = np.cumsum(u[1:] ** 2 + u[:-1] ** 2)
        np.testing.assert_allclose(np.exp(tr.log_l2_partial), S, rtol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.05, 0.95))
    def test_channels_agree(self, seed, k):
        rng = np.random.default_rng(seed)
        n = 10_000
        V = rng.uniform(-1, 1, n + 1) * 0.1 / (1 + np.arange(n + 1))
        tr = integrate(V, 2 * math.cos(math.pi * k), rng.uniform(0, math.pi), n, stride=7)
        assert tr.channel_error[0] < 2e-8 and tr.channel_error[1] < 1e-8
        assert tr.angle_bound_violations == 0 and tr.prufer_valid

    def test_large_step_marks_invalid(self):
        V = np.zeros(101)
        V[50] = 3.0
        tr = integrate(V, 0.0, 0.2, 100)
        assert not tr.prufer_valid and tr.large_steps == 1 and tr.first_large_step == 50

    def test_numeric_failure(self):
        # renormalisation absorbs huge but finite values; only non-finite input fails
        tr = integrate(np.full(2001, -1e120), 0.0, 0.2, 2000)
        assert np.all(np.isfinite(tr.logRtilde2))
        V = np.zeros(2001)
        V[1234] = np.nan
        with pytest.raises(NumericFailure, match="1235"):
            integrate(V, 0.0, 0.2, 2000)

    def test_short_potential(self):
        with pytest.raises(DomainError):
            integrate(np.zeros(10), 0.0, 0.2, 100)
        with pytest.raises(DomainError):
            integrate(None, 0.0, 0.2, 1)

    def test_callable_potential(self):
        tr = integrate(lambda n: 0.1 / (1 + n), 0.5, 0.1, 200, stride=1)
        V = 0.1 / (1 + np.arange(201))
        tr2 = integrate(V, 0.5, 0.1, 200, stride=1)
        np.testing.assert_array_equal(tr.logRtilde2, tr2.logRtilde2)

    def test_wronskian(self):
        rng = np.random.default_rng(8)
        n = 10**5
        V = rng.uniform(-1, 1, n + 1) * 0.5 / (1 + np.arange(n + 1))
        W = wronskian(integrate(V, 0.7, 0.4, n), integrate(V, 0.7, 1.9, n))
        assert np.max(np.abs(W / W[0] - 1)) < 1e-10
        # at site 1 the Wronskian is u(1) w(0) - u(0) w(1) = sin(0.4 - 1.9)
        assert W[0] == pytest.approx(math.sin(0.4 - 1.9), rel=1e-12)

    def test_time_reversal(self):
        rng = np.random.default_rng(9)
        n = 10**4
        V = rng.uniform(-1, 1, n + 1) * 0.3 / (1 + np.arange(n + 1))
        fwd = integrate(V, -0.3, 0.9, n)
        back = integrate_backward(V, -0.3, n, true_pair(fwd))
        assert back.boundary.theta0 == pytest.approx(0.9, abs=1e-9)
        assert back.logRtilde2[0] == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(back.logRtilde2, fwd.logRtilde2, atol=1e-9)
        np.testing.assert_allclose(back.log_l2_partial, fwd.log_l2_partial, atol=1e-9)


class TestSubordinate:
    def test_wvn_rate(self):
        E = -0.5
        k = math.acos(E / 2) / math.pi
        gamma = 2.0
        c = 4 * gamma * math.sin(math.pi * k)
        V = wvn_potential(c, k, 0.3, -1, 4 * 10**5)
        sub = subordinate_solution(V, E, 10**5)
        slope = np.polyfit(np.log(sub.n[sub.n >= 1000]), sub.logRtilde2[sub.n >= 1000], 1)[0] / 2
        assert slope == pytest.approx(-gamma, rel=0.05)
        # forward from the same boundary agrees until rounding noise is amplified
        fwd = integrate(V, E, sub.boundary, 100, stride=1)
        m = sub.n <= 100
        np.testing.assert_allclose(fwd.logRtilde2[sub.n[m] - 1], sub.logRtilde2[m], atol=1e-6)


class TestSamplesAndIO:
    def test_geometric(self):
        s = geometric_samples(10**6)
        assert s[0] == 1 and s[-1] == 10**6 and np.all(np.diff(s) > 0)
        big = s[s > 100]
        assert np.all(big[1:] / big[:-1] < 1.06)
        assert make_samples(10, 3).tolist() == [1, 4, 7, 10]

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        V = rng.uniform(-0.1, 0.1, 5001)
        tr = integrate(V, 0.2, 0.3, 5000)
        path = tmp_path / "t.csv"
        text = tr.to_csv(path, config={"x": 1})
        assert text.splitlines()[1].startswith("# config:")
        back = Trajectory.from_csv(path)
        for name in ("n", "V", "u", "logR2", "theta", "logRtilde2", "log_l2_partial"):
            np.testing.assert_array_equal(getattr(back, name), getattr(tr, name))
        assert back.boundary == tr.boundary and back.E == tr.E

    def test_npz_matches_csv(self, tmp_path):
        tr = integrate(None, 0.2, 0.3, 1000)
        tr.to_npz(tmp_path / "t.npz")
        a = Trajectory.from_npz(tmp_path / "t.npz")
        b = Trajectory.from_csv(tr.to_csv())
        for name in ("n", "V", "u", "logR2", "theta", "logRtilde2", "log_l2_partial"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_boundary_from_float(self):
        tr = integrate(None, 0.0, 4.0, 10)
        assert isinstance(tr.boundary, BoundaryCondition)
        assert tr.boundary.theta0 == pytest.approx(4.0 - math.pi)
