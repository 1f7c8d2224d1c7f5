"""Wigner-von Neumann potential: subordinate decay vs generic growth.

The subordinate solution is integrated backwards from 4 n_max; forward
integration would amplify rounding errors along the growing solution.
"""

import argparse
import math

import numpy as np

from sharpembed.analysis import beta_Rtilde
from sharpembed.potentials import wvn_potential
from sharpembed.solver import integrate, subordinate_solution


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--E", type=float, default=1.0)
    ap.add_argument("--gamma", type=float, default=3.0)
    ap.add_argument("--n-max", type=int, default=10**6)
    args = ap.parse_args()
    k = math.acos(args.E / 2) / math.pi
    c = 4 * args.gamma * math.sin(math.pi * k)
    V = wvn_potential(c, k, 0.7, -1, 4 * args.n_max)
    sub = subordinate_solution(V, args.E, args.n_max)
    b_sub, _ = beta_Rtilde(sub, 1000, args.n_max)
    th = (sub.boundary.theta0 + math.pi / 2) % math.pi
    b_orth, _ = beta_Rtilde(integrate(V, args.E, th, args.n_max), 1000, args.n_max)
    print(f"c = {c:.6f}, predicted exponent -/+{args.gamma}")
    print(f"subordinate boundary angle {sub.boundary.theta0:.6f}: beta = {b_sub:+.4f}")
    print(f"orthogonal boundary angle  {th:.6f}: beta = {b_orth:+.4f}")
    print(f"l2 norm^2 of the subordinate solution ~ {np.exp(sub.log_l2_partial[-1]):.6g}")


if __name__ == "__main__":
    main()
