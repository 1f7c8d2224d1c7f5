"""Print A_q and B_q next to brute-force phase extrema and the 2/pi limit."""

import argparse
import math

from sharpembed import constants as C


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q-max", type=int, default=12)
    args = ap.parse_args()
    print(f"{'q':>4} {'A_q':>12} {'brute max':>12} {'B_q':>12} {'brute min':>12} {'q^2|A-2/pi|':>12}")
    for q in range(2, args.q_max + 1):
        A = C.sharp_A(q)
        Ab, _ = C.phase_extremum(q, "max")
        if q % 2:
            B, Bb = f"{C.sharp_B(q):12.9f}", f"{C.phase_extremum(q, 'min')[0]:12.9f}"
        else:
            B = Bb = f"{'':>12}"
        print(f"{q:4d} {A:12.9f} {Ab:12.9f} {B} {Bb} {q * q * abs(A - 2 / math.pi):12.6f}")
    print(f"irrational: A_0 = {C.A0:.12f}, quadrature {C.phase_average_irrational():.12f}")


if __name__ == "__main__":
    main()
