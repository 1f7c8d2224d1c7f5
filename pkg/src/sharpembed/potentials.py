"""Potential constructions.

Families:

* Wigner-von Neumann profiles ``c sin(2 pi k n + phi) / (n - b)``;
* sign-type feedback potentials ``a sgn(sin 2 pi theta(n)) / (1 + n)``;
* the even-denominator almost sign-type construction, built period by period
  with one numerator re-solved so the first-order phase drift cancels;
* WvN segments tuned to a target energy (``twocase_segment``) and a gluing
  driver that serves several targets round-robin (``glue_multi``).

Feedback constructions are realised together with the Pruefer trajectory
they are coupled to, and are reproducible from their ``PotentialSpec``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels as K
from . import __version__
from .core import (BoundaryCondition, Rational, classify_k, energy_of_k, k_of_energy,
                   prufer_from_solution, solution_from_prufer, state_from_boundary)
from .errors import (ConstructionFailedError, ConstructionImpossibleError, DegeneratePeriodError,
                     DomainError, PhaseLockLostError, PhaseSetterSingularError,
                     SegmentTooShortError, StepTooLargeError)
from .solver import Trajectory, integrate

VARIANTS = ("Zero", "WignerVonNeumann", "SignType", "EvenQ", "MultiSegment")


@dataclass
class PotentialSpec:
    """Declarative description of a potential; ``realize`` regenerates it."""

    variant: str
    params: dict = field(default_factory=dict)
    support: int = 1
    boundary: float = 0.0
    seed: int = 0
    version: str = __version__
    envelope: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown potential variant {self.variant!r}")

    def to_json(self, path=None, config: dict | None = None) -> str:
        d = asdict(self)
        if config is not None:
            d["config"] = config
        text = json.dumps(d, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "PotentialSpec":
        s = str(text_or_path)
        if not s.lstrip().startswith("{"):
            with open(s) as fh:
                s = fh.read()
        d = json.loads(s)
        d.pop("config", None)
        return cls(**d)


def realize(spec: PotentialSpec, n_max: int) -> np.ndarray:
    """Site-indexed values V[0..n_max] for a spec."""
    V = np.zeros(n_max + 1)
    p = spec.params
    if spec.variant == "Zero":
        pass
    elif spec.variant == "WignerVonNeumann":
        lo = max(spec.support, int(math.floor(p["b"])) + 1)
        K.wvn_fill(V, float(p["c"]), float(p["k"]), float(p["phi"]), float(p["b"]), lo, n_max + 1)
    elif spec.variant == "SignType":
        n_start = int(p.get("n_start", spec.support))
        N = max(0, n_max + 1 - n_start)
        res, _ = sign_type_run(p["a"], p["k"], p["theta_start"], n_start, N, with_trajectory=False)
        V[: len(res)] = res[: n_max + 1]
    elif spec.variant == "EvenQ":
        res = even_q_build(p["a"], p["p"], p["q"], n0=p.get("n0"), n_max=n_max,
                           boundary=spec.boundary, delta=p.get("delta"), with_trajectory=False)
        m = min(len(res.V), n_max + 1)
        V[:m] = res.V[:m]
    elif spec.variant == "MultiSegment":
        for seg in p["segments"]:
            n0, n1 = int(seg["n0"]), int(seg["n1"])
            if n0 + 1 > n_max:
                break
            K.wvn_fill(V, float(seg["amp"]), float(seg["k"]), float(seg["phi"]), float(seg["b"]),
                       n0 + 1, min(n1, n_max + 1))
    return V


def potential_csv(V: np.ndarray, path=None, config: dict | None = None, start: int = 1) -> str:
    lines = []
    if config is not None:
        lines.append("# config: " + json.dumps(config, sort_keys=True))
    lines.append("n,V")
    lines.extend(f"{n},{V[n]:.17g}" for n in range(start, len(V)))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


def envelope_constant(V: np.ndarray, b: float = -1.0, start: int = 1) -> float:
    """max_n |V(n)| (n - b) over the sites n >= start."""
    n = np.arange(start, len(V))
    if n.size == 0:
        return 0.0
    return float(np.max(np.abs(V[start:]) * (n - b)))


# ---------------------------------------------------------------- WvN

def wvn_value(c: float, k: float, phi: float, b: float, n: int) -> float:
    """c sin(2 pi k n + phi) / (n - b)."""
    if not n > b:
        raise DomainError(f"wvn_value needs n > b, got n={n}, b={b}")
    return K.wvn_at(float(c), float(k), float(phi), float(b), float(n))


def wvn_potential(c: float, k: float, phi: float, b: float, n_max: int, support: int = 1) -> np.ndarray:
    return realize(PotentialSpec("WignerVonNeumann", {"c": c, "k": k, "phi": phi, "b": b},
                                 support=support), n_max)


# ---------------------------------------------------------------- sign type

def boundary_for_angle(theta_start: float, n_start: int, k: float) -> BoundaryCondition:
    """Boundary angle whose free evolution has Pruefer angle theta_start at n_start."""
    theta1 = theta_start - (n_start - 1) * k
    u0, u1 = solution_from_prufer(1.0, theta1, k)
    return BoundaryCondition.from_any(math.atan2(u1, u0))


def _free_state(boundary: BoundaryCondition, k: float, n: int):
    st = state_from_boundary(boundary, k)
    base = 2.0 * math.floor(st.theta / 2.0)
    return K.free_prufer(st.logR2, base, st.theta - base, k, math.sin(math.pi * k), n - 1)


def sign_type_run(a: float, k: float, theta_start: float, n_start: int, N: int,
                  with_trajectory: bool = True, stride=None):
    """Co-evolve V(n) = a sgn(sin 2 pi theta(n)) / (1 + n) on n_start <= n < n_start + N.

    The potential vanishes below n_start; the boundary condition is the one
    whose free evolution reaches angle ``theta_start`` at n_start.  Returns
    ``(trajectory, V)`` (``trajectory`` is None when not requested).
    """
    if not a > 0 or N < 1 or n_start < 1:
        raise DomainError("sign_type_run needs a > 0, N >= 1, n_start >= 1")
    sin_pk = math.sin(math.pi * k)
    if a / sin_pk / (1.0 + n_start) >= 0.5:
        raise StepTooLargeError(n_start, a / sin_pk / (1.0 + n_start))
    boundary = boundary_for_angle(theta_start, n_start, k)
    logR2, base, f = _free_state(boundary, k, n_start)
    n_end = n_start + N
    V = np.zeros(n_end + 1)
    status, site, logR2, base, f, viol, misses = K.sign_type_kernel(
        float(a), float(k), logR2, base, f, int(n_start), int(n_end), V)
    if status:
        raise StepTooLargeError(site, a / sin_pk / (1.0 + site))
    if viol or misses:
        from .errors import InvariantViolation
        raise InvariantViolation(f"sign-type run: {viol} angle-bound violations, "
                                 f"{misses} one-step identity misses")
    if not with_trajectory:
        return V, None
    tr = integrate(V, energy_of_k(k), boundary, n_end, stride=stride)
    tr.meta.update({"construction": "SignType", "a": a, "n_start": n_start,
                    "theta_start": theta_start, "theta_end": base + f})
    return tr, V


def sign_type_spec(a: float, k: float, theta_start: float, n_start: int) -> PotentialSpec:
    return PotentialSpec("SignType", {"a": a, "k": k, "theta_start": theta_start, "n_start": n_start},
                         support=n_start, boundary=boundary_for_angle(theta_start, n_start, k).theta0,
                         envelope=a)


# ---------------------------------------------------------------- even q

@dataclass(frozen=True)
class PeriodBlock:
    m: int
    n_abs: int
    theta_in: float
    a_coeffs: tuple
    theta_out: float
    residual: float
    dlogR2: float


def even_q_phase_setter(theta_current: float, theta_target: float, k: float,
                        margin: float = 1e-3) -> float:
    """Single potential value that steers theta(n+1) onto theta_target (mod 1)."""
    s1 = math.sin(math.pi * theta_current)
    s2 = math.sin(math.pi * (theta_target - k))
    if abs(s1) < margin or abs(s2) < margin:
        raise PhaseSetterSingularError(
            f"phase setter too close to a pole: |sin pi theta| = {abs(s1):.2e}, "
            f"|sin pi(target - k)| = {abs(s2):.2e}")
    c1 = math.cos(math.pi * theta_current) / s1
    c2 = math.cos(math.pi * (theta_target - k)) / s2
    return math.sin(math.pi * k) * (c1 - c2)


def even_q_permutation(p: int, q: int) -> tuple[list[int], list[int]]:
    """Site offsets carrying the positive and negative numerators in one period."""
    if q < 2 or q % 2 or not (1 <= p < q) or math.gcd(p, q) != 1:
        raise DomainError(f"need even q >= 2 and 1 <= p < q coprime, got p={p}, q={q}")
    inv = pow(p, -1, q)
    half = q // 2
    plus = [((j - 1) * inv) % q for j in range(1, half + 1)]
    minus = [((half + j - 1) * inv) % q for j in range(1, half + 1)]
    return plus, minus


def _frac_dist(x: float, target: float) -> float:
    d = (x - target) % 1.0
    return min(d, 1.0 - d)


def even_q_period(a: float, p: int, q: int, n_abs: int, theta_in: float,
                  delta: float | None = None, m: int = 0, logR2: float = 0.0) -> PeriodBlock:
    """Build one period of q sites starting at n_abs from the actual incoming angle."""
    plus, minus = even_q_permutation(p, q)
    k = p / q
    sin_pk = math.sin(math.pi * k)
    delta = 1.0 / (8 * q) if delta is None else delta
    if a / sin_pk / (1.0 + n_abs) >= 0.5:
        raise StepTooLargeError(n_abs, a / sin_pk / (1.0 + n_abs))
    if _frac_dist(theta_in, 0.5 / q) >= delta:
        raise PhaseLockLostError(m, theta_in, delta)
    pp = np.array(plus, dtype=np.float64)
    pm = np.array(minus, dtype=np.float64)
    am = K.period_numerator(float(theta_in), float(a), k, pp, pm)
    if not am > 0 or abs(am - a) > 0.5 * a:
        raise DegeneratePeriodError(f"period {m}: solved numerator {am!r} for a = {a!r}")
    coeffs = np.zeros(q)
    coeffs[plus] = a
    coeffs[minus[:-1]] = -a
    coeffs[minus[-1]] = -am
    V = coeffs / (1.0 + n_abs)
    j = np.arange(q)
    residual = float(np.sum(np.sin(np.pi * (theta_in + j * k)) ** 2 * V))
    base = 2.0 * math.floor(theta_in / 2.0)
    f = theta_in - base
    L = logR2
    for v in V:
        L, base, f, _d = K.advance(L, base, f, float(v), k, sin_pk)
    return PeriodBlock(m, n_abs, float(theta_in), tuple(coeffs.tolist()), base + f, residual, L - logR2)


@dataclass
class EvenQResult:
    spec: PotentialSpec
    V: np.ndarray
    trajectory: Trajectory | None
    n0: int
    delta: float
    theta_in: np.ndarray
    theta_out: np.ndarray
    a_minus: np.ndarray
    residual: np.ndarray
    setter: float
    angle_bound_violations: int
    sign_misalignments: int

    @property
    def delta_tilde(self) -> float:
        a = self.spec.params["a"]
        return float(np.max(np.abs(self.a_minus - a))) if self.a_minus.size else 0.0

    @property
    def phase_error(self) -> np.ndarray:
        """Distance of frac(theta(n0 + m q)) from 1/(2q) for every period."""
        t = 0.5 / self.spec.params["q"]
        d = np.mod(self.theta_in - t, 1.0)
        return np.minimum(d, 1.0 - d)

    def block(self, m: int) -> PeriodBlock:
        q = self.spec.params["q"]
        n_abs = self.n0 + m * q
        coeffs = self.V[n_abs:n_abs + q] * (1.0 + n_abs)
        return PeriodBlock(m, n_abs, float(self.theta_in[m]), tuple(coeffs.tolist()),
                           float(self.theta_out[m]), float(self.residual[m]), float("nan"))


def default_n0(a: float, p: int, q: int) -> int:
    return max(100 * q, int(math.ceil(8 * a / math.sin(math.pi * p / q))))


def even_q_build(a: float, p: int, q: int, n0: int | None = None, N_periods: int | None = None,
                 boundary=0.0, delta: float | None = None, n_max: int | None = None,
                 with_trajectory: bool = True, stride=None, max_shift: int | None = None) -> EvenQResult:
    """Chain almost sign-type periods after a one-site phase setter at n0 - 1.

    Either ``N_periods`` or ``n_max`` fixes the length.  When the setter is
    singular at the requested n0, n0 is moved up one site at a time.
    """
    if not a > 0:
        raise DomainError("a must be positive")
    even_q_permutation(p, q)
    k = p / q
    sin_pk = math.sin(math.pi * k)
    delta = 1.0 / (8 * q) if delta is None else float(delta)
    n0_req = default_n0(a, p, q) if n0 is None else int(n0)
    if a / sin_pk / (1.0 + n0_req) >= 0.5:
        raise StepTooLargeError(n0_req, a / sin_pk / (1.0 + n0_req))
    if not isinstance(boundary, BoundaryCondition):
        boundary = BoundaryCondition.from_any(boundary)
    target = 0.5 / q
    max_shift = 2 * q + 2 if max_shift is None else max_shift
    for shift in range(max_shift + 1):
        n0 = n0_req + shift
        logR2, base, f = _free_state(boundary, k, n0 - 1)
        try:
            vset = even_q_phase_setter(f, target, k)
        except PhaseSetterSingularError:
            continue
        break
    else:
        raise PhaseSetterSingularError(f"no admissible phase-setter site in [{n0_req}, {n0_req + max_shift}]")
    logR2, base, f, _d = K.advance(logR2, base, f, vset, k, sin_pk)
    if _frac_dist(f, target) > 1e-9:
        raise ConstructionFailedError(f"phase setter missed: theta(n0) = {f!r}")
    if N_periods is None:
        if n_max is None:
            raise DomainError("give N_periods or n_max")
        N_periods = max(0, (int(n_max) - n0) // q)
    n_end = n0 + N_periods * q
    V = np.zeros(max(n_end, n_max or 0) + 1)
    V[n0 - 1] = vset
    pp = np.array(even_q_permutation(p, q)[0], dtype=np.float64)
    pm = np.array(even_q_permutation(p, q)[1], dtype=np.float64)
    th_in, th_out, a_minus, resid = (np.zeros(N_periods) for _ in range(4))
    status, where, logR2, base, f, viol, badsign, done = K.even_q_kernel(
        float(a), k, int(q), pp.astype(np.int64), pm.astype(np.int64), int(n0), int(N_periods),
        delta, logR2, base, f, V, th_in, th_out, a_minus, resid)
    if status == 1:
        raise PhaseLockLostError(int(where), float(f), delta)
    if status == 2:
        raise DegeneratePeriodError(f"period {where}: solved numerator out of range")
    if status == 3:
        raise StepTooLargeError(int(where), a / sin_pk / (1.0 + where))
    spec = PotentialSpec("EvenQ", {"a": a, "p": p, "q": q, "n0": n0, "delta": delta,
                                   "N_periods": N_periods},
                         support=n0 - 1, boundary=boundary.theta0, envelope=None)
    res = EvenQResult(spec, V, None, n0, delta, th_in, th_out, a_minus, resid, vset,
                      int(viol), int(badsign))
    spec.envelope = envelope_constant(V, -1.0, n0)
    if with_trajectory:
        n_traj = max(n_end, 2) if n_max is None else int(n_max)
        tr = integrate(V, energy_of_k(k), boundary, n_traj, stride=stride)
        tr.meta.update({"construction": "EvenQ", "a": a, "p": p, "q": q, "n0": n0})
        res.trajectory = tr
    return res


# ---------------------------------------------------------------- segments and gluing

@dataclass
class Segment:
    E: float
    k: float
    n0: int
    n1: int
    b: float
    theta0: float
    M: float
    amp: float
    phi: float
    log_contraction: float  # log(Rt(n1) / Rt(n0)) for the served solution
    log_target: float  # log of C ((n1-b)/(n0-b))^(-gamma)
    avoid_log_norm: dict = field(default_factory=dict)

    @property
    def gamma(self) -> float:
        return self.M / (4.0 * math.sin(math.pi * self.k) ** 2)

    def fill(self, V: np.ndarray) -> None:
        K.wvn_fill(V, self.amp, self.k, self.phi, self.b, self.n0 + 1, min(self.n1, len(V)))

    def as_dict(self) -> dict:
        return {"E": self.E, "k": self.k, "n0": self.n0, "n1": self.n1, "b": self.b,
                "theta0": self.theta0, "M": self.M, "amp": self.amp, "phi": self.phi}


def gate_constant(M: float, k: float) -> int:
    """Smallest n0 - b keeping |V / sin(pi k)| <= 1/4 on a WvN segment of coupling M."""
    return int(math.ceil(4.0 * M / math.sin(math.pi * k) ** 2))


def _check_pair_resonance(energies) -> None:
    for i, e1 in enumerate(energies):
        for e2 in energies[i:]:
            if abs(e1 + e2) < 1e-12:
                raise DomainError(f"0 lies in A + A: energies {e1} and {e2}")
    for i, e1 in enumerate(energies):
        for e2 in energies[i + 1:]:
            if abs(e1 - e2) < 1e-12:
                raise DomainError(f"repeated target energy {e1}")


def twocase_segment(E: float, avoid, n0: int, n1: int, b: float, theta0: float,
                    M: float = 400.0, C: float = 10.0, K_gate: int | None = None,
                    grid: int = 720) -> Segment:
    """Tune the phase of a WvN segment on (n0, n1) so the given solution decays.

    The solution is the one with pair (u(n0-1), u(n0)) = (cos theta0, sin theta0).
    The phase is chosen by a grid scan followed by golden-section refinement
    of Rt(n1)/Rt(n0).  Raises SegmentTooShortError when the contraction misses
    C ((n1-b)/(n0-b))^(-gamma), gamma = M / (4 sin^2 pi k).
    """
    if abs(E) < 1e-12:
        raise ConstructionImpossibleError("E = 0 cannot be served by a WvN segment")
    avoid = [float(x) for x in (avoid or [])]
    for Et in avoid:
        if abs(Et - E) < 1e-12 or abs(Et + E) < 1e-12:
            raise ConstructionImpossibleError(f"resonance clash between {E} and avoided {Et}")
    k = k_of_energy(E)
    sin_pk = math.sin(math.pi * k)
    K_gate = gate_constant(M, k) if K_gate is None else K_gate
    if not (n1 > n0 > b) or n0 - b < K_gate:
        raise DomainError(f"segment ({n0}, {n1}) with b={b} violates n1 > n0 > b and n0 - b >= {K_gate}")
    amp = M / sin_pk
    x0, y0 = math.cos(theta0), math.sin(theta0)
    phis = np.linspace(0.0, 2.0 * math.pi, grid, endpoint=False)
    vals = np.empty(grid)
    K.segment_scan(float(E), amp, k, float(b), int(n0), int(n1), x0, y0, phis, vals)
    i = int(np.argmin(vals))
    h = phis[1] - phis[0]

    def obj(phi):
        return K.segment_eval(float(E), amp, k, float(phi), float(b), int(n0), int(n1), x0, y0)[0]

    a_, c_ = phis[i] - h, phis[i] + h
    fa, fb, fc = obj(a_), obj(phis[i]), obj(c_)
    if fb < fa and fb < fc:
        res = minimize_scalar(obj, bracket=(a_, phis[i], c_), method="golden",
                              options={"xtol": 1e-12})
    else:
        res = minimize_scalar(obj, bounds=(a_, c_), method="bounded", options={"xatol": 1e-12})
    phi = float(res.x) % (2.0 * math.pi)
    log_c = 0.5 * obj(phi)
    gamma = M / (4.0 * sin_pk ** 2)
    log_t = math.log(C) - gamma * math.log((n1 - b) / (n0 - b))
    seg = Segment(float(E), k, int(n0), int(n1), float(b), float(theta0), float(M), amp, phi,
                  log_c, log_t)
    if log_c > log_t:
        raise SegmentTooShortError(
            f"contraction exp({log_c:.3f}) exceeds target exp({log_t:.3f}) on ({n0}, {n1})")
    for Et in avoid:
        ln = 0.5 * K.segment_transfer_norm(float(Et), amp, k, phi, float(b), int(n0), int(n1))
        seg.avoid_log_norm[Et] = ln
        if ln > math.log(C):
            raise ConstructionFailedError(
                f"avoided energy {Et}: transfer norm exp({ln:.3f}) exceeds C = {C} on ({n0}, {n1})")
    return seg


@dataclass
class GlueResult:
    spec: PotentialSpec
    V: np.ndarray
    segments: list
    checkpoints: list  # rows: (segment index, target index, n, log Rt of every target)
    activation: dict
    envelope: float
    h_bound: float | None
    gamma: float
    monotone: bool
    contraction_ok: bool
    targets: list

    def checkpoint_table(self) -> list[dict]:
        out = []
        for seg_i, j, n, logs in self.checkpoints:
            row = {"segment": seg_i, "served": j, "n": n}
            row.update({f"logRt_{i}": v for i, v in enumerate(logs)})
            out.append(row)
        return out


def glue_multi(targets, h: Callable[[float], float] | float | None = None, n_start: int = 1000,
               n_max: int = 10**6, gamma: float = 3.0, b: float = -1.0, C: float = 10.0,
               factor: float = 2.0, max_doublings: int = 12, segment_cap: int = 10_000,
               grid: int = 720) -> GlueResult:
    """Glue tuned WvN segments so every target (E_j, theta_j) gets a decaying solution.

    Each target j is served with coupling M_j = 4 gamma sin^2(pi k_j), so its
    solution decays like n^(-gamma) while served.  A segment starting at n0
    has length n0 and doubles until the served contraction is at most
    1/(factor * G), where G is the largest growth that any other active target
    sees on the segment or that the served target accumulated since its last
    checkpoint.  With a growth bound h the target j only becomes active once
    h(n0) >= M_j / sin(pi k_j), so |V(n)| (1 + n) <= h(n) when b = -1.
    """
    targets = [(float(E), float(t)) for E, t in targets]
    if not targets:
        raise DomainError("no targets")
    energies = [E for E, _ in targets]
    _check_pair_resonance(energies)
    if callable(h):
        hfun = h
    elif h is None:
        hfun = None
    else:
        hc = float(h)
        hfun = lambda n: hc  # noqa: E731
    ks = [k_of_energy(E) for E in energies]
    Ms = [4.0 * gamma * math.sin(math.pi * k) ** 2 for k in ks]
    amps = [M / math.sin(math.pi * k) for M, k in zip(Ms, ks)]
    nt = len(targets)
    # every target is a forward solution; keep the unit pair and log Rt at the current site
    pairs = []
    logs = []
    for (E, th), k in zip(targets, ks):
        bc = BoundaryCondition.from_any(th)
        L, Lmax, x, y = K.segment_eval(E, 0.0, k, 0.0, b, 1, int(n_start), *bc.pair())
        pairs.append((x, y))
        logs.append(0.5 * L)
    last_ckpt = [None] * nt
    active = [False] * nt
    activation = {}
    V = np.zeros(n_max + 1)
    segments: list[Segment] = []
    checkpoints = []
    monotone = True
    contraction_ok = True
    rr = 0
    n = int(n_start)

    def advance_all(seg_amp, seg_k, seg_phi, n0, n1, skip=None):
        out = []
        for i in range(nt):
            if i == skip:
                out.append(None)
                continue
            out.append(K.segment_eval(energies[i], seg_amp, seg_k, seg_phi, b, n0, n1, *pairs[i]))
        return out

    while n < n_max:
        if len(segments) >= segment_cap:
            raise ConstructionFailedError(f"segment cap {segment_cap} reached at n = {n}")
        for j in range(nt):
            if not active[j] and (hfun is None or hfun(n) >= amps[j]):
                active[j] = True
                activation[j] = n
        act = [j for j in range(nt) if active[j]]
        if not act:
            n1 = min(2 * n, n_max)
            res = advance_all(0.0, 0.5, 0.0, n, n1)
            for i in range(nt):
                L, _m, x, y = res[i]
                pairs[i] = (x, y)
                logs[i] += 0.5 * L
            n = n1
            continue
        j = act[rr % len(act)]
        rr += 1
        others = [i for i in act if i != j]
        theta0 = math.atan2(pairs[j][1], pairs[j][0])
        length = n
        g_self = 0.0 if last_ckpt[j] is None else max(0.0, logs[j] - last_ckpt[j])
        for _d in range(max_doublings + 1):
            n1 = min(n + length, n_max)
            try:
                seg = twocase_segment(energies[j], [energies[i] for i in others], n, n1, b, theta0,
                                      M=Ms[j], C=C, grid=grid)
            except SegmentTooShortError:
                if n1 == n_max:
                    raise ConstructionFailedError(f"final segment ({n}, {n1}) too short")
                length *= 2
                continue
            res = advance_all(seg.amp, seg.k, seg.phi, n, n1)
            g_others = max([0.5 * res[i][1] for i in others], default=0.0)
            G = max(g_others, g_self)
            if seg.log_contraction <= -math.log(factor) - G or n1 == n_max:
                break
            length *= 2
        else:
            raise ConstructionFailedError(
                f"no segment length up to {length} sites at n = {n} meets the contraction rule")
        ok = seg.log_contraction <= -math.log(factor) - G
        contraction_ok &= ok or n1 == n_max
        seg.fill(V)
        segments.append(seg)
        for i in range(nt):
            L, _m, x, y = res[i]
            pairs[i] = (x, y)
            logs[i] += 0.5 * L
        if last_ckpt[j] is not None and logs[j] > last_ckpt[j] and n1 != n_max:
            monotone = False
        last_ckpt[j] = logs[j]
        checkpoints.append((len(segments) - 1, j, int(n1), list(logs)))
        n = n1
    env = envelope_constant(V, b, 1)
    h_bound = None
    if hfun is not None:
        nn = np.arange(1, n_max + 1)
        hv = np.array([hfun(float(x)) for x in nn]) if not isinstance(h, (int, float)) else np.full(n_max, float(h))
        h_bound = float(np.max(np.abs(V[1:]) * (nn - b) / hv))
    spec = PotentialSpec("MultiSegment", {
        "targets": [list(t) for t in targets], "gamma": gamma, "b": b, "n_start": n_start,
        "segments": [s.as_dict() for s in segments]}, support=n_start, envelope=env)
    return GlueResult(spec, V, segments, checkpoints, activation, env, h_bound, gamma,
                      monotone, contraction_ok, targets)
