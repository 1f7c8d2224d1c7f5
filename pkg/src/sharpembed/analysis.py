"""Decay fits, l^2 verdicts, absence scans, the sum rule and oscillatory sums."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import _kernels as K
from .constants import critical_energy, sharp_A
from .core import BoundaryCondition, Irrational, classify_k, k_of_energy
from .errors import DomainError
from .solver import Trajectory, integrate

ELL2 = "ell2"
NOT_ELL2 = "not_ell2"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Thresholds:
    """Numerical policy for the l^2 verdict."""

    beta_cut: float = -1.0
    sigma_mult: float = 2.0
    tail: float = 0.01
    min_samples: int = 50
    span: float = 10.0


DEFAULT_THRESHOLDS = Thresholds()


@dataclass
class DecayReport:
    beta: float
    stderr: float
    intercept: float
    fit_range: tuple[int, int]
    n_samples: int
    channel: str
    tail_fraction: float
    l2_partial: np.ndarray = field(repr=False)
    verdict: str = INCONCLUSIVE
    thresholds: Thresholds = DEFAULT_THRESHOLDS

    def as_dict(self) -> dict:
        d = asdict(self)
        d["l2_partial_log"] = [float(x) for x in self.l2_partial]
        del d["l2_partial"]
        d["fit_range"] = list(self.fit_range)
        return d


def _channel(traj: Trajectory, channel: str) -> tuple[np.ndarray, str]:
    if channel == "auto":
        channel = "logR2" if traj.prufer_valid else "logRtilde2"
    if channel in ("logR2", "R"):
        return traj.logR2, "logR2"
    if channel in ("logRtilde2", "Rtilde"):
        return traj.logRtilde2, "logRtilde2"
    raise DomainError(f"unknown channel {channel!r}")


def tail_fraction(traj: Trajectory, n_max: int, span: float = 10.0) -> float:
    """(S(n_max) - S(n_max / span)) / S(n_max) with S the l^2 partial sums of Rt^2."""
    hi = int(np.searchsorted(traj.n, n_max, side="right")) - 1
    lo = int(np.searchsorted(traj.n, n_max / span, side="right")) - 1
    if hi < 0 or lo < 0:
        raise DomainError("trajectory does not cover the tail window")
    return float(-np.expm1(traj.log_l2_partial[lo] - traj.log_l2_partial[hi]))


def verdict_of(beta: float, stderr: float, tail: float, th: Thresholds = DEFAULT_THRESHOLDS) -> str:
    if beta + th.sigma_mult * stderr < th.beta_cut and tail < th.tail:
        return ELL2
    if beta - th.sigma_mult * stderr > th.beta_cut:
        return NOT_ELL2
    return INCONCLUSIVE


def fit_decay(traj: Trajectory, n_min: int | None = None, n_max: int | None = None,
              channel: str = "auto", thresholds: Thresholds = DEFAULT_THRESHOLDS) -> DecayReport:
    """Least-squares slope of log R^2 against log n on [n_min, n_max]."""
    n_lo, n_hi = traj.n_range
    n_max = n_hi if n_max is None else int(n_max)
    n_min = max(1, int(n_max / thresholds.span)) if n_min is None else int(n_min)
    if n_max < thresholds.span * n_min:
        raise DomainError(f"fit range [{n_min}, {n_max}] spans less than a factor {thresholds.span}")
    y, name = _channel(traj, channel)
    m = (traj.n >= n_min) & (traj.n <= n_max)
    if m.sum() < thresholds.min_samples:
        raise DomainError(f"only {int(m.sum())} samples in [{n_min}, {n_max}], "
                          f"need {thresholds.min_samples}")
    fit = stats.linregress(np.log(traj.n[m]), y[m])
    tail = tail_fraction(traj, n_max, thresholds.span)
    beta, se = float(fit.slope), float(fit.stderr)
    return DecayReport(beta, se, float(fit.intercept), (n_min, n_max), int(m.sum()), name, tail,
                       traj.log_l2_partial[m].copy(), verdict_of(beta, se, tail, thresholds), thresholds)


def beta_Rtilde(traj: Trajectory, n_min: int, n_max: int) -> tuple[float, float]:
    """Power-law exponent of Rt itself (half the slope of log Rt^2) with its stderr."""
    rep = fit_decay(traj, n_min, n_max, channel="logRtilde2")
    return 0.5 * rep.beta, 0.5 * rep.stderr


def sharp_constant_for(E: float, q_max: int = 1000, tol: float = 1e-12) -> tuple[int, float]:
    """(q, A_q) for the arithmetic type of k(E); q = 0 means irrational."""
    cls = classify_k(k_of_energy(E), q_max, tol)
    q = 0 if isinstance(cls, Irrational) else cls.q
    return q, sharp_A(q)


@dataclass
class AbsenceReport:
    E: float
    a: float
    q: int
    theta_grid: np.ndarray
    betas: np.ndarray
    stderrs: np.ndarray
    verdicts: list
    worst_beta: float
    predicted_floor: float
    all_not_ell2: bool
    floor_respected: bool
    matched: list

    def as_dict(self) -> dict:
        d = asdict(self)
        for key in ("theta_grid", "betas", "stderrs"):
            d[key] = [float(x) for x in d[key]]
        return d


def absence_check(potential, E: float, a: float, theta_grid=64, n_max: int = 10**6,
                  n_min: int = 1000, require_window: bool = True,
                  thresholds: Thresholds = DEFAULT_THRESHOLDS) -> AbsenceReport:
    """Fit every boundary angle of a grid and compare with the absence prediction.

    The floor is -(a A_q / sin pi k) - 0.1, the fastest decay any boundary
    condition can have in the sub-critical window.  Angles that nevertheless
    give an l^2 verdict are listed in ``matched``.
    """
    if isinstance(theta_grid, int):
        theta_grid = np.pi * np.arange(theta_grid) / theta_grid
    theta_grid = np.asarray(theta_grid, dtype=float)
    q, A = sharp_constant_for(E)
    if require_window and a * A < 1.0 and not abs(E) < critical_energy(a, q):
        raise DomainError(f"E = {E} is outside the absence window for a = {a}")
    if require_window and a * A >= 1.0:
        raise DomainError(f"a = {a} is super-critical for q = {q}: there is no absence window")
    k = k_of_energy(E)
    betas, ses, verdicts = [], [], []
    for th in theta_grid:
        tr = integrate(potential, E, BoundaryCondition.from_any(th), n_max, keep_potential=False)
        rep = fit_decay(tr, n_min, n_max, thresholds=thresholds)
        betas.append(rep.beta)
        ses.append(rep.stderr)
        verdicts.append(rep.verdict)
    betas = np.array(betas)
    floor = -a * A / math.sin(math.pi * k) - 0.1
    return AbsenceReport(
        E=float(E), a=float(a), q=q, theta_grid=theta_grid, betas=betas, stderrs=np.array(ses),
        verdicts=verdicts, worst_beta=float(betas.min()), predicted_floor=floor,
        all_not_ell2=all(v == NOT_ELL2 for v in verdicts),
        floor_respected=bool(betas.min() >= floor),
        matched=[float(t) for t, v in zip(theta_grid, verdicts) if v == ELL2])


@dataclass(frozen=True)
class SumRuleReport:
    lhs: float
    rhs: float
    passed: bool


def sum_rule_check(energies, a: float) -> SumRuleReport:
    """Compare sum (4 - E_i^2) with 4 a^2 + 4 min(1, a)."""
    energies = [float(E) for E in energies]
    for E in energies:
        if not -2.0 < E < 2.0:
            raise DomainError(f"energy {E} is outside (-2, 2)")
    lhs = math.fsum(4.0 - E * E for E in energies)
    rhs = 4.0 * a * a + 4.0 * min(1.0, a)
    return SumRuleReport(lhs, rhs, lhs <= rhs)


@dataclass
class OscillatoryReport:
    n: np.ndarray
    S1: np.ndarray
    S2: np.ndarray | None
    ratio1: float
    ratio2: float | None
    sup_ratio1: float
    sup_ratio2: float | None

    def to_csv(self, path=None) -> str:
        lines = ["n,S1,S2"]
        for i, n in enumerate(self.n):
            s2 = "" if self.S2 is None else f"{self.S2[i]:.17g}"
            lines.append(f"{int(n)},{self.S1[i]:.17g},{s2}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
        return text


def _growth_ratios(n: np.ndarray, S: np.ndarray, n_max: int) -> tuple[float, float]:
    r = np.abs(S) / np.maximum(1.0, np.log(n))
    tail = n >= n_max / 10
    return float(r[tail].max()), float(r.max())


def oscillatory_sums(traj1: Trajectory, traj2: Trajectory | None = None, n_max: int | None = None,
                     stride=None) -> OscillatoryReport:
    """Running sums of cos(4 pi theta1)/(1+t) and sin(2 pi theta1) sin(2 pi theta2)/(1+t).

    Angles are re-evolved from the stored potential.  ``ratio`` is
    max |S(n)| / ln n over the last decade [n_max/10, n_max]; ``sup_ratio``
    takes the sup over all n <= n_max.
    """
    from .solver import make_samples, potential_array

    if traj1.potential is None:
        raise DomainError("trajectory does not carry its potential")
    k1 = traj1.k
    if abs(k1 - 0.5) < 1e-12:
        raise DomainError("k = 1/2 makes cos(4 pi theta) non-oscillating")
    has2 = traj2 is not None
    k2 = traj2.k if has2 else 0.5
    if has2:
        if abs(k1 - k2) < 1e-12 or abs(k1 + k2 - 1.0) < 1e-12:
            raise DomainError("oscillatory sums need k1 != k2 and k1 + k2 != 1")
        if traj2.potential is not None and not np.array_equal(
                traj2.potential[: len(traj1.potential)], traj1.potential[: len(traj2.potential)]):
            raise DomainError("the two trajectories use different potentials")
    n_max = traj1.n_range[1] if n_max is None else int(n_max)
    V = potential_array(traj1.potential, n_max)
    samples = make_samples(n_max, stride)
    out1 = np.empty(samples.shape[0])
    out2 = np.empty(samples.shape[0])
    x1, y1 = traj1.boundary.pair()
    x2, y2 = traj2.boundary.pair() if has2 else (1.0, 0.0)
    K.oscillatory_kernel(V, k1, x1, y1, k2, x2, y2, has2, n_max, samples, out1, out2)
    r1, s1 = _growth_ratios(samples, out1, n_max)
    r2 = s2 = None
    if has2:
        r2, s2 = _growth_ratios(samples, out2, n_max)
    return OscillatoryReport(samples, out1, out2 if has2 else None, r1, r2, s1, s2)


def report_json(obj, path=None, config: dict | None = None, extra: dict | None = None) -> str:
    """Serialise a report (dataclass or dict) with the resolved config echoed."""
    d = obj.as_dict() if hasattr(obj, "as_dict") else (asdict(obj) if hasattr(obj, "__dataclass_fields__") else dict(obj))
    if config is not None:
        d["config"] = config
    if extra:
        d.update(extra)
    text = json.dumps(d, indent=2, sort_keys=True, default=_json_default)
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text + "\n")
    return text


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")
