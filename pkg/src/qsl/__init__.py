"""Quantum Stuart-Landau oscillator laboratory.

Numerics and exact symbolics for a single damped-pumped bosonic mode with
one-photon gain, one-photon loss and two-photon loss: steady states, Lindblad
time evolution, Wigner phase-space representations, Liouvillian spectra and
the symbolic phase-space equation of motion.
"""

__version__ = "0.1.0"
