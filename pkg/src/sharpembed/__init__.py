"""Embedded eigenvalues for discrete half-line Schroedinger operators with O(1/n) potentials."""

__version__ = "0.1.0"

from .core import (BoundaryCondition, Energy, Irrational, PruferState, Rational, classify_k,  # noqa: E402
                   energy_of_k, k_of_energy, prufer_from_solution, prufer_step, solution_from_prufer)
from .constants import (critical_energy, phase_extremum, sharp_A, sharp_B, sine_sum)  # noqa: E402
from .solver import Trajectory, integrate, integrate_backward, subordinate_solution, wronskian  # noqa: E402
