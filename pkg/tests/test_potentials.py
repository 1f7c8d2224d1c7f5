import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sharpembed import constants as C
from sharpembed.core import PruferState, prufer_step
from sharpembed.errors import (ConstructionImpossibleError, DegeneratePeriodError, DomainError,
                               PhaseLockLostError, PhaseSetterSingularError, SegmentTooShortError)
from sharpembed.potentials import (PotentialSpec, envelope_constant, even_q_build, even_q_period,
                                   even_q_permutation, even_q_phase_setter, glue_multi,
                                   potential_csv, realize, sign_type_run, sign_type_spec,
                                   twocase_segment, wvn_potential, wvn_value)
from sharpembed.solver import integrate


def slope(tr, n_min=1000):
    m = tr.n >= n_min
    return np.polyfit(np.log(tr.n[m]), tr.logR2[m], 1)[0]


class TestWvN:
    def test_examples(self):
        assert wvn_value(0.0, 0.3, 0.2, -1, 5) == 0.0
        assert wvn_value(1.0, 0.5, 0.0, 0, 10) == pytest.approx(0.0, abs=1e-15)
        assert wvn_value(2.0, 0.25, 0.0, -1, 1) == pytest.approx(2.0 * math.sin(math.pi / 2) / 2)

    @given(st.floats(-5, 5), st.floats(0.01, 0.99), st.floats(0, 6.3), st.integers(-3, 3),
           st.integers(1, 10**6))
    def test_envelope(self, c, k, phi, b, dn):
        n = b + dn
        assert abs(wvn_value(c, k, phi, b, n)) <= abs(c) / (n - b) + 1e-15

    def test_domain(self):
        with pytest.raises(DomainError):
            wvn_value(1.0, 0.3, 0.0, 5, 5)

    def test_array_matches_scalar(self):
        V = wvn_potential(1.3, 0.31, 0.4, -1, 100)
        assert V[0] == 0.0
        assert all(V[n] == wvn_value(1.3, 0.31, 0.4, -1, n) for n in range(1, 101))


class TestSignType:
    def test_zero_sign_gives_zero(self):
        # theta = 0 at n_start: sin(2 pi theta) = 0 so V(n_start) = 0
        _tr, V = sign_type_run(0.5, 0.5, 0.0, 4, 1, with_trajectory=True)
        assert V[4] == 0.0

    def test_sign_alignment(self):
        k = 0.3
        tr, V = sign_type_run(0.4, k, 0.17, 5, 2000)
        th = 0.17
        st0 = PruferState(5, 0.0, th)
        for n in range(5, 2005):
            s2 = math.sin(2 * math.pi * st0.theta)
            assert V[n] == pytest.approx(0.4 * np.sign(s2) / (1 + n), abs=0)
            st0 = prufer_step(st0, V[n], k)

    def test_golden_rate(self):
        k = (math.sqrt(5) - 1) / 2
        a = math.pi * math.sin(math.pi * k)
        tr, _ = sign_type_run(a, k, 0.1, 10, 10**5)
        assert slope(tr) == pytest.approx(-2.0, abs=0.1)

    def test_odd_q3_rate(self):
        k = 1 / 3
        a = 1.5 * math.sin(math.pi * k) / C.sharp_B(3)
        tr, _ = sign_type_run(a, k, 0.05, 12, 10**5)
        assert slope(tr) <= -1.4

    def test_step_admissibility(self):
        with pytest.raises(DomainError):
            sign_type_run(2.0, 0.5, 0.1, 1, 10)

    def test_boundary_reproduces_angle(self):
        tr, V = sign_type_run(0.3, 0.4, 0.77, 50, 10)
        free = integrate(None, tr.E, tr.boundary, 50, stride=1)
        assert (free.theta[-1] - 0.77) % 1.0 == pytest.approx(0.0, abs=1e-9) or \
            (free.theta[-1] - 0.77) % 1.0 == pytest.approx(1.0, abs=1e-9)


class TestEvenQPieces:
    def test_permutation_examples(self):
        assert even_q_permutation(1, 2) == ([0], [1])
        assert even_q_permutation(1, 4) == ([0, 1], [2, 3])
        assert even_q_permutation(3, 4) == ([0, 3], [2, 1])

    @given(st.integers(1, 60).flatmap(
        lambda h: st.tuples(st.integers(1, 2 * h - 1).filter(lambda p: math.gcd(p, 2 * h) == 1),
                            st.just(2 * h))))
    def test_permutation_congruences(self, pq):
        p, q = pq
        plus, minus = even_q_permutation(p, q)
        assert sorted(plus + minus) == list(range(q))
        for j, x in enumerate(plus):
            assert (x * p - j) % q == 0
        for j, x in enumerate(minus):
            assert (x * p - q // 2 - j) % q == 0

    @pytest.mark.parametrize("pq", [(2, 4), (1, 3), (0, 2)])
    def test_permutation_domain(self, pq):
        with pytest.raises(DomainError):
            even_q_permutation(*pq)

    def test_setter_free_case(self):
        assert even_q_phase_setter(0.3, 0.3 + 0.25, 0.25) == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=200)
    @given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    def test_setter_round_trip(self, th, target, k):
        try:
            V = even_q_phase_setter(th, target, k)
        except PhaseSetterSingularError:
            return
        s = prufer_step(PruferState(0, 0.0, th), V, k, check=False) if abs(V / math.sin(math.pi * k)) < 0.5 \
            else None
        from sharpembed import _kernels as K
        _L, base, f, _d = K.advance(0.0, 0.0, th, V, k, math.sin(math.pi * k))
        d = (f - target) % 1.0
        assert min(d, 1 - d) < 1e-12
        if s is not None:
            d = (s.theta - target) % 1.0
            assert min(d, 1 - d) < 1e-12

    def test_setter_q2_target(self):
        V = even_q_phase_setter(0.6, 0.25, 0.5)
        from sharpembed import _kernels as K
        _L, _b, f, _d = K.advance(0.0, 0.0, 0.6, V, 0.5, 1.0)
        assert f % 1.0 == pytest.approx(0.25, abs=1e-12)

    def test_setter_singular(self):
        with pytest.raises(PhaseSetterSingularError):
            even_q_phase_setter(1.0, 0.25, 0.5)

    def test_period_exact_phase(self):
        for p, q in ((1, 2), (1, 4), (3, 8), (5, 6)):
            blk = even_q_period(1.7, p, q, 10**4, 0.5 / q)
            assert min(abs(c) for c in blk.a_coeffs) == pytest.approx(1.7, abs=1e-12)
            assert abs(blk.residual) <= 1e-12 * 1.7 / (1 + 10**4)

    def test_period_q2(self):
        blk = even_q_period(2.0, 1, 2, 1000, 0.25)
        assert blk.a_coeffs == pytest.approx((2.0, -2.0))
        assert blk.residual == pytest.approx(0.0, abs=1e-18)

    def test_period_residual_off_center(self):
        q = 6
        blk = even_q_period(1.3, 1, q, 5000, 0.5 / q + 0.002)
        assert abs(blk.residual) <= 1e-12 * 1.3 / 5001
        coeffs = np.array(blk.a_coeffs)
        assert np.sum(coeffs > 0) == q // 2

    def test_period_errors(self):
        with pytest.raises(PhaseLockLostError):
            even_q_period(1.0, 1, 4, 1000, 0.125 + 0.04)
        with pytest.raises(DegeneratePeriodError):
            even_q_period(1.0, 1, 2, 1000, 0.25 + 0.2, delta=0.3)


@pytest.fixture(scope="module")
def q2():
    return even_q_build(2.0, 1, 2, n_max=10**6)


class TestEvenQBuild:
    def test_invariants(self, q2):
        assert q2.phase_error.max() < q2.delta
        assert q2.sign_misalignments == 0 and q2.angle_bound_violations == 0
        assert np.max(np.abs(q2.residual) * (1 + q2.n0 + 2 * np.arange(len(q2.residual)))) <= 1e-12 * 2.0
        assert q2.n0 >= 200

    def test_rate(self, q2):
        assert slope(q2.trajectory) == pytest.approx(-2.0, abs=0.1)

    def test_limsup(self, q2):
        n = np.arange(10**4, 10**6 + 1)
        m = np.max(np.abs(n * q2.V[n]))
        assert 2.0 - q2.delta_tilde <= m <= 2.0 + q2.delta_tilde

    def test_setter_site(self, q2):
        assert np.all(q2.V[: q2.n0 - 1] == 0.0) and q2.V[q2.n0 - 1] == q2.setter

    def test_q4(self):
        a = 1.5 / C.sharp_A(4)
        r = even_q_build(a, 1, 4, n_max=2 * 10**5)
        assert slope(r.trajectory) == pytest.approx(-a * C.sharp_A(4) / math.sin(math.pi / 4), abs=0.15)
        assert r.sign_misalignments == 0

    def test_blocks(self):
        r = even_q_build(1.2, 3, 8, N_periods=50)
        blk = r.block(10)
        assert blk.n_abs == r.n0 + 80 and len(blk.a_coeffs) == 8
        assert sorted(np.sign(blk.a_coeffs)) == [-1] * 4 + [1] * 4

    def test_singular_setter_shifts_n0(self):
        # boundary chosen so that theta(n0 - 1) is an integer at the default n0
        k = 0.5
        n0 = 200
        from sharpembed.potentials import boundary_for_angle
        bc = boundary_for_angle(1.0, n0 - 1, k)
        r = even_q_build(1.5, 1, 2, n0=n0, N_periods=10, boundary=bc)
        assert r.n0 > n0


class TestSpecs:
    def test_json_round_trip_and_realize(self, tmp_path):
        specs = [
            PotentialSpec("Zero"),
            PotentialSpec("WignerVonNeumann", {"c": 1.5, "k": 0.3, "phi": 0.2, "b": -1}),
            sign_type_spec(0.5, 0.37, 0.2, 5),
            even_q_build(1.5, 1, 4, n_max=3000, boundary=0.4).spec,
            glue_multi([(1.0, 0.3)], n_start=200, n_max=3000).spec,
        ]
        for spec in specs:
            back = PotentialSpec.from_json(spec.to_json())
            assert back == spec
            np.testing.assert_array_equal(realize(back, 3000), realize(spec, 3000))

    def test_feedback_reproducible(self):
        r = even_q_build(1.5, 1, 4, n_max=3000, boundary=0.4)
        np.testing.assert_array_equal(realize(r.spec, 3000), r.V[:3001])
        _tr, V = sign_type_run(0.5, 0.37, 0.2, 5, 2996)
        np.testing.assert_array_equal(realize(sign_type_spec(0.5, 0.37, 0.2, 5), 3000), V[:3001])

    def test_unknown_variant(self):
        with pytest.raises(DomainError):
            PotentialSpec("Nope")

    def test_csv(self, tmp_path):
        V = wvn_potential(1.0, 0.3, 0.0, -1, 10)
        text = potential_csv(V, tmp_path / "v.csv", {"a": 1})
        lines = text.splitlines()
        assert lines[0].startswith("# config:") and lines[1] == "n,V" and len(lines) == 12
        assert float(lines[2].split(",")[1]) == V[1]

    def test_envelope(self):
        V = wvn_potential(2.0, 0.3, 0.1, -1, 10**4)
        assert envelope_constant(V) <= 2.0


class TestTwocase:
    def test_default_contract(self):
        seg = twocase_segment(1.0, [-0.6, 0.3], 3000, 3150, -1, 0.4)
        assert seg.gamma == pytest.approx(400 / (4 * 0.75))
        assert seg.log_contraction <= seg.log_target
        assert all(v <= math.log(10) for v in seg.avoid_log_norm.values())

    def test_rate_matches_exponent(self):
        # M = 4 gamma sin^2(pi k): contraction over a factor-2 segment is about 2^-gamma
        E, gamma = -0.6, 3.0
        k = math.acos(E / 2) / math.pi
        M = 4 * gamma * math.sin(math.pi * k) ** 2
        seg = twocase_segment(E, [], 2000, 4000, -1, 1.0, M=M)
        assert seg.log_contraction / math.log(4001 / 2001) == pytest.approx(-gamma, abs=0.3)

    def test_errors(self):
        with pytest.raises(ConstructionImpossibleError):
            twocase_segment(0.0, [], 3000, 4000, -1, 0.1)
        with pytest.raises(ConstructionImpossibleError):
            twocase_segment(1.0, [-1.0], 3000, 4000, -1, 0.1)
        with pytest.raises(DomainError):
            twocase_segment(1.0, [], 100, 200, -1, 0.1)
        with pytest.raises(SegmentTooShortError):
            twocase_segment(1.0, [], 3000, 3010, -1, 0.1, C=1e-6)


class TestGlue:
    def test_single_target(self):
        g = glue_multi([(0.7, 0.2)], n_start=500, n_max=10**5)
        tr = integrate(g.V, 0.7, 0.2, 10**5)
        assert slope(tr, 5000) < -2.5
        assert g.monotone and g.contraction_ok
        assert all(s.E == 0.7 for s in g.segments)

    def test_resonance_rejected(self):
        with pytest.raises(DomainError):
            glue_multi([(1.0, 0.3), (-1.0, 0.2)])
        with pytest.raises(DomainError):
            glue_multi([(0.0, 0.3)])

    def test_growth_bound(self):
        h = lambda n: math.log(10 + n)  # noqa: E731
        g = glue_multi([(1.0, 0.3), (-0.6, 1.1), (0.3, 2.0)], h=h, gamma=2.0, n_max=50_000)
        assert g.h_bound <= 1.0
        n = np.arange(1, 50_001)
        assert np.all(np.abs(g.V[1:]) * (1 + n) <= np.log(10 + n) + 1e-12)
        assert set(g.activation) == {0, 1, 2}
        for seg in g.segments:
            assert seg.log_contraction <= seg.log_target

    def test_checkpoints_monotone(self):
        g = glue_multi([(1.0, 0.3), (-0.6, 1.1)], n_max=2 * 10**5)
        rows = g.checkpoint_table()
        for j in (0, 1):
            served = [r[f"logRt_{j}"] for r in rows if r["served"] == j]
            assert all(b < a for a, b in zip(served, served[1:]))
