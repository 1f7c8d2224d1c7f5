"""Embed one eigenvalue for three arithmetic types of k and compare decay rates.

For each energy the fitted slope of log R^2 is set against the predicted
-a X / sin(pi k), with X the sharp constant of the construction.
"""

import argparse
import math

from sharpembed.analysis import fit_decay
from sharpembed.cli import run_embed


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=10**6)
    args = ap.parse_args()
    golden = 2 * math.cos(math.pi * (math.sqrt(5) - 1) / 2)
    cases = [("k golden (irrational)", golden, 3.0), ("k = 1/2 (q = 2)", 0.0, 3.0),
             ("k = 1/4 (q = 4)", 2 * math.cos(math.pi / 4), 3.0), ("k = 1/3 (q = 3)", 1.0, 3.0)]
    for name, E, a in cases:
        _V, tr, rep, s = run_embed(E, a, 0.0, args.n_max)
        predicted = -a * s["sharp_constant"] / math.sin(math.pi * s["k"])
        print(f"{name:24s} {s['construction']:8s} beta={rep.beta:+.4f} "
              f"predicted={predicted:+.4f} tail={rep.tail_fraction:.2e} verdict={rep.verdict}")
        assert fit_decay(tr, 1000, args.n_max).beta == rep.beta
    print("For odd q the sign-type run settles at the B_q rate, so X = B_q there.")


if __name__ == "__main__":
    main()
