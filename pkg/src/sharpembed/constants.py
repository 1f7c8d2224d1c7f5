"""Sharp transition constants A_q, B_q and their brute-force cross-checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

A0 = 2.0 / math.pi


@dataclass(frozen=True)
class SharpConstants:
    q: int
    A: float
    B: float | None = None


def _check_q(q: int) -> None:
    if q == 1:
        raise DomainError("q = 1 is excluded: A_1 and S_1 are undefined")
    if q < 0 or (0 < q < 2) or int(q) != q:
        raise DomainError(f"q must be 0 or an integer >= 2, got {q!r}")


def sharp_A(q: int) -> float:
    """A_q in closed form; q = 0 stands for irrational k."""
    _check_q(q)
    if q == 0:
        return A0
    s = math.sin(math.pi / q)
    if q % 2 == 0:
        return 2.0 / (q * s)
    return 2.0 * math.cos(math.pi / (2 * q)) / (q * s)


def sharp_B(q: int) -> float:
    """B_q for odd q >= 3."""
    if int(q) != q or q < 3 or q % 2 == 0:
        raise DomainError(f"B_q is defined for odd q >= 3, got {q!r}")
    return (1.0 + math.cos(math.pi / q)) / (q * math.sin(math.pi / q))


def sharp_constants(q: int) -> SharpConstants:
    B = sharp_B(q) if q >= 3 and q % 2 == 1 else None
    return SharpConstants(q, sharp_A(q), B)


def phase_average(q: int, phi: float) -> float:
    """(1/q) sum_j |sin(2 pi j / q + phi)|, summed directly."""
    j = np.arange(q)
    return float(np.abs(np.sin(2.0 * np.pi * j / q + phi)).mean())


def _kinks(q: int) -> np.ndarray:
    period = 2.0 * math.pi / q
    base = np.mod(-2.0 * np.pi * np.arange(q) / q, np.pi)
    pts = np.concatenate([base, base + np.pi, base - np.pi])
    pts = pts[(pts > 1e-14) & (pts < period - 1e-14)]
    return np.unique(np.concatenate([[0.0, period], pts]))


def phase_extremum(q: int, mode: str = "max", n_grid: int = 100_000) -> tuple[float, float]:
    """Extremise the phase average over one period [0, 2 pi / q).

    Between consecutive kinks every |sin| has a fixed sign, so the average is
    (S cos phi + C sin phi)/q there; this makes the grid pass O(1) per point.
    The best grid point is then refined by ternary search on the direct sum.
    """
    if int(q) != q or q < 2:
        raise DomainError(f"phase_extremum needs an integer q >= 2, got {q!r}")
    if mode not in ("max", "min"):
        raise DomainError(f"mode must be 'max' or 'min', got {mode!r}")
    sgn = 1.0 if mode == "max" else -1.0
    period = 2.0 * math.pi / q
    grid = np.linspace(0.0, period, n_grid + 1)
    vals = np.empty_like(grid)
    ang = 2.0 * np.pi * np.arange(q) / q
    kinks = _kinks(q)
    for lo, hi in zip(kinks[:-1], kinks[1:]):
        eps = np.sign(np.sin(ang + 0.5 * (lo + hi)))
        S = float(np.sum(eps * np.sin(ang)))
        C = float(np.sum(eps * np.cos(ang)))
        m = (grid >= lo) & (grid <= hi)
        vals[m] = (S * np.cos(grid[m]) + C * np.sin(grid[m])) / q
    i = int(np.argmax(sgn * vals))
    h = period / n_grid
    lo, hi = grid[i] - h, grid[i] + h
    for _ in range(200):
        if hi - lo < 1e-14:
            break
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if sgn * phase_average(q, m1) < sgn * phase_average(q, m2):
            lo = m1
        else:
            hi = m2
    phi = 0.5 * (lo + hi)
    best = phase_average(q, phi)
    if sgn * vals[i] > sgn * best:
        phi, best = grid[i], phase_average(q, grid[i])
    # for odd q the average has the shorter period pi / q
    true_period = period if q % 2 == 0 else 0.5 * period
    phi = phi % true_period
    if true_period - phi < 1e-9:
        phi = 0.0
    return best, phi


def phase_average_irrational() -> float:
    """Mean of |sin| over a full turn, by quadrature (the q = 0 cross-check)."""
    from scipy.integrate import quad

    val, _err = quad(lambda t: abs(math.sin(t)), 0.0, 2.0 * math.pi, points=[math.pi], epsabs=1e-14)
    return val / (2.0 * math.pi)


def sine_sum(a: float, x: float, n: int) -> float:
    """sum_{j=0}^{n-1} sin(a + j x), in closed form when sin(x/2) is not tiny."""
    if n < 1:
        raise DomainError("n must be >= 1")
    s = math.sin(0.5 * x)
    if abs(s) < 1e-4:
        return math.fsum(math.sin(a + j * x) for j in range(n))
    return math.sin(a + 0.5 * (n - 1) * x) * math.sin(0.5 * n * x) / s


def even_q_identity(q: int) -> float:
    """(2/q) sum_{j<q/2} sin(2 pi j / q + pi / q); equals A_q for even q."""
    if q < 2 or q % 2:
        raise DomainError("even_q_identity needs an even q >= 2")
    return 2.0 / q * sine_sum(math.pi / q, 2.0 * math.pi / q, q // 2)


def critical_energy(a: float, q: int, variant: str = "A") -> float:
    """E_q = 2 sqrt(1 - a^2 X^2) with X = A_q, or X = B_q for variant 'B'."""
    if not a > 0:
        raise DomainError("coupling a must be positive")
    X = sharp_A(q) if variant == "A" else sharp_B(q)
    if variant not in ("A", "B"):
        raise DomainError(f"variant must be 'A' or 'B', got {variant!r}")
    if a * X >= 1.0:
        raise DomainError(f"a * {variant}_q = {a * X:.6g} >= 1: there is no forbidden window")
    return 2.0 * math.sqrt(1.0 - (a * X) ** 2)
