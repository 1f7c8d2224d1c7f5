"""Energies, quasi-momentum arithmetic and the exact Pruefer step.

A solution of ``u(n+1) + u(n-1) + V(n) u(n) = E u(n)`` is described at site n
by the pair ``(u(n-1), u(n))``.  With ``E = 2 cos(pi k)`` the sheared vector

    Y = (u(n-1), (u(n) - cos(pi k) u(n-1)) / sin(pi k))

is written ``Y = R (sin(pi theta - pi k), cos(pi theta - pi k))``, so that
``u(n) = R sin(pi theta)``.  Angles are in half-turn units: the physical angle
is ``pi * theta`` and a free step adds exactly ``k`` to ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from . import _kernels as K
from .errors import DomainError, InvariantViolation, StepTooLargeError

DEFAULT_Q_MAX = 1000
DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class Rational:
    """k = p/q in lowest terms with q >= 2."""

    p: int
    q: int

    @property
    def parity(self) -> str:
        return "even" if self.q % 2 == 0 else "odd"

    @property
    def value(self) -> float:
        return self.p / self.q


@dataclass(frozen=True)
class Irrational:
    """No fraction with denominator up to ``q_max`` lies within ``tol``."""

    q_max: int
    tol: float


@dataclass(frozen=True)
class Energy:
    E: float
    k: float
    cls: Rational | Irrational

    @classmethod
    def from_E(cls, E: float, q_max: int = DEFAULT_Q_MAX, tol: float = DEFAULT_TOL) -> "Energy":
        k = k_of_energy(E)
        return cls(float(E), k, classify_k(k, q_max, tol))

    @classmethod
    def from_k(cls, k: float, q_max: int = DEFAULT_Q_MAX, tol: float = DEFAULT_TOL) -> "Energy":
        _check_k(k)
        return cls(energy_of_k(k), float(k), classify_k(k, q_max, tol))


@dataclass(frozen=True)
class BoundaryCondition:
    """Half-line boundary angle: (u(0), u(1)) = (cos theta0, sin theta0)."""

    theta0: float

    def __post_init__(self):
        if not (0.0 <= self.theta0 < math.pi) or not math.isfinite(self.theta0):
            raise DomainError(f"boundary angle must lie in [0, pi), got {self.theta0!r}")

    @classmethod
    def from_any(cls, theta0: float) -> "BoundaryCondition":
        """Reduce an arbitrary angle modulo pi (the solution only changes sign)."""
        t = math.fmod(float(theta0), math.pi)
        if t < 0.0:
            t += math.pi
        if t >= math.pi:
            t = 0.0
        return cls(t)

    def pair(self) -> tuple[float, float]:
        return math.cos(self.theta0), math.sin(self.theta0)


@dataclass(frozen=True)
class PruferState:
    n: int
    logR2: float
    theta: float


def _check_k(k: float) -> None:
    if not (0.0 < k < 1.0):
        raise DomainError(f"quasi-momentum must lie in (0, 1), got {k!r}")


def k_of_energy(E: float) -> float:
    """Quasi-momentum k in (0, 1) with E = 2 cos(pi k)."""
    if not (-2.0 < E < 2.0):
        raise DomainError(f"energy must lie in (-2, 2), got {E!r}")
    return math.acos(E / 2.0) / math.pi


def energy_of_k(k: float) -> float:
    _check_k(k)
    if k == 0.5:
        return 0.0
    return 2.0 * math.cos(math.pi * k)


def _simplest_between(lo: Fraction, hi: Fraction) -> Fraction:
    """Fraction with the smallest denominator in [lo, hi] (0 <= lo <= hi)."""
    fl = math.floor(lo)
    if fl == lo:
        return Fraction(fl)
    if fl + 1 <= hi:
        return Fraction(fl + 1)
    return fl + 1 / _simplest_between(1 / (hi - fl), 1 / (lo - fl))


def classify_k(k: float, q_max: int = DEFAULT_Q_MAX, tol: float = DEFAULT_TOL) -> Rational | Irrational:
    """Arithmetic type of k relative to (q_max, tol).

    The smallest denominator in [k - tol, k + tol] is found by walking the
    continued fraction of the interval endpoints.
    """
    _check_k(k)
    if q_max < 2 or not tol > 0:
        raise DomainError("classify_k needs q_max >= 2 and tol > 0")
    kf = Fraction(k)
    tf = Fraction(tol)
    r = _simplest_between(max(kf - tf, Fraction(0)), kf + tf)
    if r.denominator < 2 or r.denominator > q_max:
        return Irrational(q_max, tol)
    return Rational(r.numerator, r.denominator)


def prufer_from_solution(u_prev: float, u_cur: float, k: float) -> tuple[float, float]:
    """Return (R, theta) with theta in [0, 2).

    The angle is reduced modulo 2 rather than 1 so the sign of the solution is
    kept; theta modulo 1 is the projective part.
    """
    _check_k(k)
    if u_prev == 0.0 and u_cur == 0.0:
        raise DomainError("the zero vector has no Pruefer angle")
    s, c = math.sin(math.pi * k), math.cos(math.pi * k)
    y0 = u_prev
    y1 = (u_cur - c * u_prev) / s
    theta = K.wrap2(math.atan2(y0, y1) / math.pi + k)
    return math.hypot(y0, y1), theta


def solution_from_prufer(R: float, theta: float, k: float) -> tuple[float, float]:
    if not R > 0:
        raise DomainError("R must be positive")
    _check_k(k)
    u_prev = R * math.sin(math.pi * (theta - k))
    y1 = R * math.cos(math.pi * (theta - k))
    u_cur = math.sin(math.pi * k) * y1 + math.cos(math.pi * k) * u_prev
    return u_prev, u_cur


def step_ratio(V_n: float, k: float) -> float:
    return V_n / math.sin(math.pi * k)


def prufer_step(state: PruferState, V_n: float, k: float, check: bool = True) -> PruferState:
    """Advance one site with the potential value V(n) at n = state.n.

    The angle is updated by rotating (sin pi theta, cos pi theta) and taking
    atan2, and the branch closest to theta + k is kept.
    """
    _check_k(k)
    sin_pk = math.sin(math.pi * k)
    w = V_n / sin_pk
    if abs(w) >= 0.5:
        raise StepTooLargeError(state.n, w)
    base = 2.0 * math.floor(state.theta / 2.0)
    f = state.theta - base
    logR2, base, f, delta = K.advance(state.logR2, base, f, float(V_n), k, sin_pk)
    if check and not K.angle_bound_ok(delta, w):
        raise InvariantViolation(
            f"angle step {delta:.3e} exceeds |V/sin(pi k)| = {abs(w):.3e} at n={state.n}")
    return PruferState(state.n + 1, logR2, base + f)


def state_from_boundary(boundary: BoundaryCondition, k: float) -> PruferState:
    """Pruefer state at site 1 for the pair (u(0), u(1))."""
    R, theta = prufer_from_solution(*boundary.pair(), k)
    return PruferState(1, 2.0 * math.log(R), theta)
