"""Renormalised integration of the three-term recursion with trajectory records.

The step from site n to n+1 reads ``u(n+1) = (E - V(n)) u(n) - u(n-1)``, so
a potential array ``V`` is indexed by site and ``V[0]`` is never used.  The
working pair is renormalised to unit length on every step and the log scale
is accumulated, which keeps runs of 10^6+ sites finite.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels as K
from .core import BoundaryCondition, k_of_energy
from .errors import DomainError, NumericFailure

CSV_COLUMNS = ("n", "V", "u_prev", "u_cur", "logR2", "theta", "logRtilde2", "log_l2_partial")
GEOMETRIC_RATIO = 1.05


@dataclass
class Trajectory:
    """Sampled record of one solution.

    ``u`` holds the unit-normalised pair (u(n-1), u(n)); the true pair is
    ``exp(logRtilde2 / 2) * u``.  ``log_l2_partial[i]`` is the log of
    sum_{m <= n[i]} (u(m-1)^2 + u(m)^2).
    """

    E: float
    k: float
    boundary: BoundaryCondition
    n: np.ndarray
    V: np.ndarray
    u: np.ndarray
    logR2: np.ndarray
    theta: np.ndarray
    logRtilde2: np.ndarray
    log_l2_partial: np.ndarray
    prufer_valid: bool = True
    angle_bound_violations: int = 0
    large_steps: int = 0
    first_large_step: int | None = None
    channel_error: tuple[float, float] = (0.0, 0.0)
    direction: str = "forward"
    meta: dict = field(default_factory=dict)
    potential: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_range(self) -> tuple[int, int]:
        return int(self.n[0]), int(self.n[-1])

    def __len__(self) -> int:
        return len(self.n)

    def header(self) -> dict:
        return {
            "E": self.E,
            "k": self.k,
            "theta0": self.boundary.theta0,
            "direction": self.direction,
            "prufer_valid": self.prufer_valid,
            "angle_bound_violations": self.angle_bound_violations,
            "large_steps": self.large_steps,
            "first_large_step": self.first_large_step,
            "channel_error": list(self.channel_error),
            "meta": self.meta,
        }

    def to_csv(self, path=None, config: dict | None = None) -> str:
        buf = io.StringIO()
        buf.write("# trajectory: " + json.dumps(self.header(), sort_keys=True) + "\n")
        if config is not None:
            buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        cols = [self.n, self.V, self.u[:, 0], self.u[:, 1], self.logR2, self.theta,
                self.logRtilde2, self.log_l2_partial]
        for i in range(len(self.n)):
            buf.write(str(int(cols[0][i])) + "," + ",".join(f"{c[i]:.17g}" for c in cols[1:]) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "Trajectory":
        if "\n" in str(path_or_text):
            text = str(path_or_text)
        else:
            with open(path_or_text) as fh:
                text = fh.read()
        header = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("# trajectory: "):
                header = json.loads(line[len("# trajectory: "):])
            elif line.startswith("#") or not line.strip() or line.startswith("n,"):
                continue
            else:
                rows.append(line)
        data = np.loadtxt(rows, delimiter=",", ndmin=2) if rows else np.empty((0, len(CSV_COLUMNS)))
        return cls._from_columns(header, data)

    @classmethod
    def _from_columns(cls, header: dict, data: np.ndarray) -> "Trajectory":
        fle = header.get("first_large_step")
        return cls(
            E=float(header["E"]),
            k=float(header["k"]),
            boundary=BoundaryCondition(float(header["theta0"])),
            n=data[:, 0].astype(np.int64),
            V=data[:, 1].copy(),
            u=data[:, 2:4].copy(),
            logR2=data[:, 4].copy(),
            theta=data[:, 5].copy(),
            logRtilde2=data[:, 6].copy(),
            log_l2_partial=data[:, 7].copy(),
            prufer_valid=bool(header.get("prufer_valid", True)),
            angle_bound_violations=int(header.get("angle_bound_violations", 0)),
            large_steps=int(header.get("large_steps", 0)),
            first_large_step=None if fle is None else int(fle),
            channel_error=tuple(header.get("channel_error", (0.0, 0.0))),
            direction=header.get("direction", "forward"),
            meta=header.get("meta", {}),
        )

    def to_npz(self, path) -> None:
        data = np.column_stack([self.n, self.V, self.u, self.logR2, self.theta,
                                self.logRtilde2, self.log_l2_partial])
        np.savez(path, data=data, header=np.array(json.dumps(self.header())))

    @classmethod
    def from_npz(cls, path) -> "Trajectory":
        with np.load(path) as z:
            return cls._from_columns(json.loads(str(z["header"])), z["data"])


def geometric_samples(n_max: int, ratio: float = GEOMETRIC_RATIO, n_min: int = 1) -> np.ndarray:
    """Sites n_min, ..., n_max spaced roughly geometrically (always includes both ends)."""
    if n_max < n_min:
        return np.empty(0, dtype=np.int64)
    count = int(math.ceil(math.log(n_max / n_min) / math.log(ratio))) + 1
    s = np.rint(n_min * ratio ** np.arange(count)).astype(np.int64)
    s = np.concatenate([np.arange(n_min, min(n_max, n_min + 20) + 1), s, [n_max]])
    return np.unique(s[(s >= n_min) & (s <= n_max)])


def make_samples(n_max: int, stride=None) -> np.ndarray:
    if stride is None or (isinstance(stride, str) and stride == "geometric"):
        return geometric_samples(n_max)
    if isinstance(stride, (np.ndarray, list, tuple)):
        s = np.unique(np.asarray(stride, dtype=np.int64))
        if s.size and (s[0] < 1 or s[-1] > n_max):
            raise DomainError("sample sites must lie in [1, n_max]")
        return s
    stride = int(stride)
    if stride < 1:
        raise DomainError("stride must be >= 1")
    return np.unique(np.concatenate([np.arange(1, n_max + 1, stride), [n_max]])).astype(np.int64)


def potential_array(potential, n_needed: int) -> np.ndarray:
    """Site-indexed float array covering at least sites 0..n_needed-1."""
    if potential is None:
        return np.zeros(n_needed + 1)
    if hasattr(potential, "values") and callable(potential.values):
        arr = np.asarray(potential.values(n_needed), dtype=np.float64)
    elif callable(potential):
        arr = np.array([0.0] + [float(potential(n)) for n in range(1, n_needed + 1)])
    else:
        arr = np.asarray(potential, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < n_needed:
        raise DomainError(f"potential covers {arr.shape[0]} sites, need {n_needed}")
    return np.ascontiguousarray(arr)


def integrate(potential, E: float, boundary: BoundaryCondition | float, n_max: int,
              stride=None, keep_potential: bool = True) -> Trajectory:
    """Evolve from (u(0), u(1)) = (cos theta0, sin theta0) up to site n_max.

    The direct recursion and the Pruefer channel run side by side; their
    largest disagreement over the samples is stored in ``channel_error``.  A
    step with |V/sin(pi k)| >= 1/2 clears ``prufer_valid`` (the exact
    rotation is still applied, only the branch contract is void).
    """
    if n_max < 2:
        raise DomainError("n_max must be >= 2")
    if not isinstance(boundary, BoundaryCondition):
        boundary = BoundaryCondition.from_any(boundary)
    k = k_of_energy(E)
    V = potential_array(potential, n_max)
    samples = make_samples(n_max, stride)
    m = samples.shape[0]
    out = [np.empty(m) for _ in range(7)]
    u0, u1 = boundary.pair()
    status, site, viol, n_large, first_large, err_r, err_t = K.integrate_forward(
        V, float(E), k, u0, u1, int(n_max), samples, *out)
    if status:
        raise NumericFailure(site, "non-finite solution value")
    oV, ox, oy, ologR2, otheta, oLt, oS = out
    return Trajectory(
        E=float(E), k=k, boundary=boundary, n=samples, V=oV, u=np.column_stack([ox, oy]),
        logR2=ologR2, theta=otheta, logRtilde2=oLt, log_l2_partial=oS,
        prufer_valid=n_large == 0, angle_bound_violations=int(viol), large_steps=int(n_large),
        first_large_step=None if first_large < 0 else int(first_large),
        channel_error=(float(err_r), float(err_t)), direction="forward",
        potential=V if keep_potential else None)


def _prufer_columns(x: np.ndarray, y: np.ndarray, L: np.ndarray, k: float):
    s, c = math.sin(math.pi * k), math.cos(math.pi * k)
    y0 = x
    y1 = (y - c * x) / s
    theta = np.mod(np.arctan2(y0, y1) / np.pi + k, 2.0)
    return L + np.log(y0 * y0 + y1 * y1), theta


def integrate_backward(potential, E: float, n_top: int, pair_top: tuple[float, float],
                       stride=None, keep_potential: bool = True) -> Trajectory:
    """Run the recursion downwards from the pair (u(n_top-1), u(n_top)) to site 1.

    The returned trajectory is in increasing-n order and normalised so the
    boundary pair (u(0), u(1)) has unit length; its boundary angle is read off
    that pair.  Angles are reduced modulo 2 (not unwrapped).
    """
    if n_top < 2:
        raise DomainError("n_top must be >= 2")
    k = k_of_energy(E)
    V = potential_array(potential, n_top)
    samples = make_samples(n_top, stride)
    desc = samples[::-1].copy()
    m = desc.shape[0]
    ox, oy, oL, oSuf = (np.empty(m) for _ in range(4))
    x, y = map(float, pair_top)
    if x == 0.0 and y == 0.0:
        raise DomainError("the starting pair must be non-zero")
    status, site, L1, x1, y1, logtot = K.integrate_backward(
        V, float(E), int(n_top), x, y, desc, ox, oy, oL, oSuf)
    if status:
        raise NumericFailure(site, "non-finite solution value in backward run")
    ox, oy, oL, oSuf = (a[::-1] for a in (ox, oy, oL, oSuf))
    # u(0) = x1, u(1) = y1 in normalised form; rescale so this pair has unit norm
    Lt = oL - L1
    logtot -= L1
    with np.errstate(divide="ignore"):
        rel = np.exp(oSuf - L1 - logtot)
        partial = logtot + np.log1p(-np.minimum(rel, 1.0))
    theta0 = math.atan2(y1, x1) % math.pi
    logR2, theta = _prufer_columns(ox, oy, Lt, k)
    nxt = np.minimum(samples, V.shape[0] - 1)
    return Trajectory(
        E=float(E), k=k, boundary=BoundaryCondition.from_any(theta0), n=samples, V=V[nxt],
        u=np.column_stack([ox, oy]), logR2=logR2, theta=theta, logRtilde2=Lt,
        log_l2_partial=partial, direction="backward",
        meta={"n_top": int(n_top), "pair_top": [x, y]},
        potential=V if keep_potential else None)


def subordinate_solution(potential, E: float, n_max: int, overshoot: float = 4.0,
                         stride=None, pair_top=(1.0, 0.0)) -> Trajectory:
    """Approximate the decaying solution by integrating down from overshoot * n_max.

    Any component along the growing solution shrinks relative to the decaying
    one on the way down, so the boundary angle found at site 1 is the one
    that selects the decaying branch.  Samples beyond n_max are dropped.
    """
    n_top = int(math.ceil(overshoot * n_max))
    tr = integrate_backward(potential, E, n_top, pair_top, stride=make_samples(n_max, stride))
    tr.meta["overshoot"] = overshoot
    return tr


def wronskian(t1: Trajectory, t2: Trajectory) -> np.ndarray:
    """u(n) w(n-1) - u(n-1) w(n) at the common sample sites (true scale)."""
    if not np.array_equal(t1.n, t2.n):
        raise DomainError("trajectories are sampled at different sites")
    scale = np.exp(0.5 * (t1.logRtilde2 + t2.logRtilde2))
    return scale * (t1.u[:, 1] * t2.u[:, 0] - t1.u[:, 0] * t2.u[:, 1])


def true_pair(traj: Trajectory, i: int = -1) -> tuple[float, float]:
    s = math.exp(0.5 * traj.logRtilde2[i])
    return s * traj.u[i, 0], s * traj.u[i, 1]


PotentialLike = np.ndarray | Callable[[int], float] | None
