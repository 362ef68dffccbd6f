"""Bohmian trajectories for superpositions of harmonic-oscillator eigenstates.

Velocity fields, adaptive integration, integrals of motion of separable
form, and order/chaos diagnostics.
"""

__version__ = "0.1.0"

from .wavefunction import OscillatorSystem, Superposition, Term
from .dynamics import (TrajectorySpec, conserved_series, integrate, velocity_expanded,
                       velocity_generic)
from .integrability import ConservedQuantity, classify, build_integrals
from .chaos import lyapunov, find_nodal_points, confinement_statistic

__all__ = [
    "OscillatorSystem", "Superposition", "Term", "TrajectorySpec", "integrate", "conserved_series",
    "velocity_generic", "velocity_expanded", "ConservedQuantity", "classify",
    "build_integrals", "lyapunov", "find_nodal_points", "confinement_statistic",
]
