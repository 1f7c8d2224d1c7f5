"""End-to-end acceptance checks, shared by the test-suite and ``sharpembed verify``.

Each check returns a ``CheckResult``; timings exclude one-off JIT warm-up.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import constants as C
from .analysis import (ELL2, NOT_ELL2, absence_check, beta_Rtilde, fit_decay, sum_rule_check)
from .core import BoundaryCondition, k_of_energy
from .potentials import (envelope_constant, even_q_build, glue_multi, sign_type_run,
                         wvn_potential)
from .solver import integrate, subordinate_solution, wronskian

N_MAX = 10**6
N_FIT = 1000


@dataclass
class CheckResult:
    number: int
    title: str
    passed: bool
    seconds: float
    limit: float | None = None
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lim = f" (limit {self.limit:g} s)" if self.limit else ""
        info = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{status}] criterion {self.number}: {self.title} [{self.seconds:.2f} s{lim}] {info}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def warm_up() -> None:
    """Compile every kernel once so that timings measure the computation."""
    rng = np.random.default_rng(0)
    V = rng.uniform(-1, 1, 64) * 0.01
    integrate(V, 0.3, 0.2, 50)
    subordinate_solution(np.zeros(500), 0.3, 100)
    sign_type_run(0.5, 0.3, 0.1, 10, 50)
    even_q_build(2.0, 1, 2, n_max=500)
    glue_multi([(1.0, 0.3)], n_start=100, n_max=400, grid=8)
    C.phase_extremum(3, n_grid=100)


def check_constants() -> CheckResult:
    worst_A = worst_B = 0.0
    minB = math.inf
    maxA = 0.0
    worst_lim = -math.inf
    bad_lim = []
    with _Timer() as t:
        qs = [0] + list(range(2, 501))
        for q in qs:
            A = C.sharp_A(q)
            brute = C.phase_average_irrational() if q == 0 else C.phase_extremum(q, "max")[0]
            worst_A = max(worst_A, abs(A - brute))
            maxA = max(maxA, A)
            if q:
                excess = abs(A - 2 / math.pi) - 1.1 / q**2
                worst_lim = max(worst_lim, excess)
                if excess > 0:
                    bad_lim.append(q)
            if q % 2:
                B = C.sharp_B(q)
                worst_B = max(worst_B, abs(B - C.phase_extremum(q, "min")[0]))
                minB = min(minB, B)
    ok = worst_A <= 1e-8 and worst_B <= 1e-8 and minB > 0.5 and maxA <= 1.0 and worst_lim <= 0
    return CheckResult(1, "sharp constants vs brute force, q in {0} U [2,500]", ok and t.seconds < 10,
                       t.seconds, 10, {"max|A-brute|": worst_A, "max|B-brute|": worst_B,
                                       "min B": minB, "max A": maxA,
                                       "max(|A-2/pi|-1.1/q^2)": worst_lim,
                                       "q violating 1.1/q^2": bad_lim})


def check_prufer_oracle(seed: int = 2024, runs: int = 100, steps: int = 10_000) -> CheckResult:
    rng = np.random.default_rng(seed)
    err_r = err_t = 0.0
    viol = 0
    with _Timer() as t:
        for _ in range(runs):
            k = rng.uniform(0.05, 0.95)
            n = np.arange(steps + 1)
            V = rng.uniform(-1.0, 1.0, steps + 1) * 0.1 / (1.0 + n)
            tr = integrate(V, 2 * math.cos(math.pi * k), rng.uniform(0, math.pi), steps, stride=1)
            err_r = max(err_r, 0.5 * tr.channel_error[0])
            err_t = max(err_t, tr.channel_error[1])
            viol += tr.angle_bound_violations + tr.large_steps
    ok = err_r <= 1e-8 and err_t <= 1e-8 and viol == 0
    return CheckResult(2, "Pruefer channel vs direct recursion", ok and t.seconds < 5, t.seconds, 5,
                       {"max rel err R": err_r, "max err theta": err_t, "angle-bound violations": viol})


def check_sign_type(n_max: int = N_MAX) -> CheckResult:
    k = (math.sqrt(5) - 1) / 2
    a = math.pi * math.sin(math.pi * k)
    with _Timer() as t:
        tr, _V = sign_type_run(a, k, 0.1, 10, n_max)
        rep = fit_decay(tr, N_FIT, n_max)
    ok = abs(rep.beta + 2) <= 0.1 and rep.verdict == ELL2
    return CheckResult(3, "sign-type decay at golden-mean k", ok and t.seconds < 30, t.seconds, 30,
                       {"beta": rep.beta, "stderr": rep.stderr, "tail": rep.tail_fraction,
                        "verdict": rep.verdict})


def check_even_q(n_max: int = N_MAX) -> CheckResult:
    with _Timer() as t:
        r2 = even_q_build(2.0, 1, 2, n_max=n_max)
        rep2 = fit_decay(r2.trajectory, N_FIT, n_max)
        lock = float(r2.phase_error.max())
        A4 = C.sharp_A(4)
        a4 = 1.5 / A4
        r4 = even_q_build(a4, 1, 4, n_max=n_max)
        rep4 = fit_decay(r4.trajectory, N_FIT, n_max)
        pred4 = -a4 * A4 / math.sin(math.pi / 4)
    ok = (lock <= 1 / 16 and abs(rep2.beta + 2) <= 0.1 and rep2.verdict == ELL2
          and abs(rep4.beta - pred4) <= 0.15 and rep4.verdict == ELL2)
    return CheckResult(4, "even-q construction, q=2 and q=4", ok and t.seconds < 60, t.seconds, 60,
                       {"q2 lock": lock, "q2 beta": rep2.beta, "q2 verdict": rep2.verdict,
                        "q4 beta": rep4.beta, "q4 predicted": pred4, "q4 verdict": rep4.verdict})


def check_absence(n_max: int = N_MAX) -> CheckResult:
    a, E = 0.5, 0.0
    with _Timer() as t:
        Vs, _ = sign_type_run(a, 0.5, 0.1, 1, n_max, with_trajectory=False)
        Ve = even_q_build(a, 1, 2, n_max=n_max, with_trajectory=False).V
        reps = [absence_check(V, E, a, 64, n_max, N_FIT) for V in (Vs, Ve)]
    worst = min(r.worst_beta for r in reps)
    ok = all(r.all_not_ell2 for r in reps) and worst >= -0.9
    return CheckResult(5, "absence below threshold, 64 boundary angles", ok and t.seconds < 60,
                       t.seconds, 60, {"sign-type all not_ell2": reps[0].all_not_ell2,
                                       "even-q all not_ell2": reps[1].all_not_ell2,
                                       "worst beta": worst})


def check_subordinate(n_max: int = N_MAX, E: float = 1.0, target: float = 3.0) -> CheckResult:
    k = k_of_energy(E)
    c = 4 * target * math.sin(math.pi * k)
    with _Timer() as t:
        V = wvn_potential(c, k, 0.7, -1, 4 * n_max)
        sub = subordinate_solution(V, E, n_max)
        b_sub, _ = beta_Rtilde(sub, N_FIT, n_max)
        orth = integrate(V, E, BoundaryCondition.from_any(sub.boundary.theta0 + math.pi / 2), n_max)
        b_orth, _ = beta_Rtilde(orth, N_FIT, n_max)
    ok = abs(b_sub + target) <= 0.15 and abs(b_orth - target) <= 0.15
    return CheckResult(6, "WvN subordinate and orthogonal exponents", ok, t.seconds, None,
                       {"beta subordinate": b_sub, "beta orthogonal": b_orth,
                        "boundary": sub.boundary.theta0})


_GLUE_CACHE: dict = {}


def glued_pair(n_max: int = N_MAX):
    key = n_max
    if key not in _GLUE_CACHE:
        g = glue_multi([(1.0, 0.3), (-0.6, 1.1)], n_max=n_max)
        reps = [fit_decay(integrate(g.V, E, th, n_max), N_FIT, n_max) for E, th in g.targets]
        _GLUE_CACHE[key] = (g, reps)
    return _GLUE_CACHE[key]


def check_glue(n_max: int = N_MAX, n_stream: int = 200_000) -> CheckResult:
    with _Timer() as t:
        g, reps = glued_pair(n_max)
        env_ok = envelope_constant(g.V, -1.0, 1) <= g.envelope * (1 + 1e-12)
        seg_ok = all(s.log_contraction <= s.log_target for s in g.segments)
        s = glue_multi([(1.0, 0.3), (-0.6, 1.1), (0.3, 2.0)], h=lambda n: math.log(10 + n),
                       gamma=2.0, n_max=n_stream)
        seg3_ok = all(x.log_contraction <= x.log_target for x in s.segments) and s.contraction_ok
    ok = (all(r.verdict == ELL2 and r.tail_fraction < 0.01 for r in reps) and env_ok and seg_ok
          and g.monotone and s.h_bound <= 1.0 and seg3_ok and s.monotone)
    return CheckResult(7, "two glued embedded eigenvalues; streamed bound compliance", ok, t.seconds,
                       None, {"betas": [round(r.beta, 4) for r in reps],
                              "verdicts": [r.verdict for r in reps],
                              "tails": [float(f"{r.tail_fraction:.3g}") for r in reps],
                              "envelope C": g.envelope, "segments": len(g.segments),
                              "streamed max|V|(1+n)/h": s.h_bound,
                              "streamed contraction ok": seg3_ok})


def check_sum_rule(n_max: int = N_MAX) -> CheckResult:
    with _Timer() as t:
        g, reps = glued_pair(n_max)
        found = [E for (E, _), r in zip(g.targets, reps) if r.verdict == ELL2]
        n = np.arange(n_max // 10, n_max + 1)
        a = float(np.max(np.abs(g.V[n]) * (1 + n)))
        sr = sum_rule_check(found, a)
    return CheckResult(8, "sum rule on the glued construction", sr.passed and len(found) == 2,
                       t.seconds, None, {"energies": found, "measured a": a, "lhs": sr.lhs,
                                         "rhs": sr.rhs})


def sweep_a(E: float = 0.0, a_values=None, n_max: int = N_MAX):
    """Verdicts of the even-q construction along a grid of couplings."""
    if a_values is None:
        a_values = np.round(np.arange(0.5, 2.0 + 1e-9, 0.1), 10)
    rows = []
    for a in a_values:
        r = even_q_build(float(a), 1, 2, n_max=n_max)
        rep = fit_decay(r.trajectory, N_FIT, n_max)
        rows.append((float(a), rep.beta, rep.stderr, rep.tail_fraction, rep.verdict))
    return rows


def check_transition(n_max: int = N_MAX) -> CheckResult:
    with _Timer() as t:
        rows = sweep_a(n_max=n_max)
    verdicts = [r[4] for r in rows]
    a = [r[0] for r in rows]
    last_not = max((x for x, v in zip(a, verdicts) if v == NOT_ELL2), default=None)
    first_ell = min((x for x, v in zip(a, verdicts) if v == ELL2), default=None)
    monotone = (last_not is not None and first_ell is not None and last_not < first_ell
                and all(v != ELL2 for x, v in zip(a, verdicts) if x < first_ell)
                and all(v == ELL2 for x, v in zip(a, verdicts) if x >= first_ell)
                and all(v == NOT_ELL2 for x, v in zip(a, verdicts) if x <= last_not))
    ok = monotone and 0.9 <= last_not and first_ell <= 1.3
    return CheckResult(9, "verdict flip in a at E=0 inside [0.9, 1.3]", ok, t.seconds, None,
                       {"last not_ell2": last_not, "first ell2": first_ell,
                        "verdicts": "".join({"ell2": "+", "not_ell2": "-"}.get(v, "?")
                                            for v in verdicts)})


def check_identities(seed: int = 7) -> CheckResult:
    rng = np.random.default_rng(seed)
    with _Timer() as t:
        worst_s = 0.0
        for _ in range(10_000):
            a, x = rng.uniform(-10, 10, 2)
            n = int(rng.integers(1, 101))
            direct = math.fsum(math.sin(a + j * x) for j in range(n))
            worst_s = max(worst_s, abs(C.sine_sum(a, x, n) - direct))
        worst_q = max(abs(C.even_q_identity(q) - C.sharp_A(q)) for q in range(2, 501, 2))
        steps = 100_000
        nn = np.arange(steps + 1)
        V = rng.uniform(-1, 1, steps + 1) * 0.5 / (1.0 + nn)
        E = 0.7
        u = integrate(V, E, 0.4, steps, stride=97)
        w = integrate(V, E, 1.9, steps, stride=97)
        W = wronskian(u, w)
        worst_w = float(np.max(np.abs(W / W[0] - 1.0)))
    ok = worst_s <= 1e-10 and worst_q <= 1e-12 and worst_w <= 1e-10
    return CheckResult(10, "sine-sum, even-q identity, Wronskian", ok, t.seconds, None,
                       {"max sine-sum err": worst_s, "max even-q identity err": worst_q,
                        "max rel Wronskian drift": worst_w})


CHECKS = {
    1: check_constants,
    2: check_prufer_oracle,
    3: check_sign_type,
    4: check_even_q,
    5: check_absence,
    6: check_subordinate,
    7: check_glue,
    8: check_sum_rule,
    9: check_transition,
    10: check_identities,
}


def run_all(numbers=None, echo=print) -> list[CheckResult]:
    warm_up()
    out = []
    for i in numbers or sorted(CHECKS):
        res = CHECKS[i]()
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
