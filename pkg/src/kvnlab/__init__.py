"""Numerical laboratory for Koopman-von Neumann classical mechanics on a phase-space grid.

Modules
-------
grid        periodic phase-space lattice, spectral derivatives, windows
states      amplitudes, Liouville distributions, dense state operators
tilde_ops   tilde-variables and the canonical representation
propagator  split-operator KvN evolution and the characteristics oracle
uncertainty standard deviations and Robertson-type bounds
wigner      doubled-phase-space Wigner functions and the star product
scenarios   declarative end-to-end runs
cli         ``kvnlab`` command-line interface
"""
from .grid import PhaseGrid, make_grid
from .propagator import HamiltonianSpec, canonical_transform, characteristics_evolve, kvn_evolve
from .states import Amplitude, LiouvilleDistribution, StateOperator

__all__ = ["PhaseGrid", "make_grid", "HamiltonianSpec", "kvn_evolve", "canonical_transform",
           "characteristics_evolve", "Amplitude", "LiouvilleDistribution", "StateOperator"]
__version__ = "0.1.0"
