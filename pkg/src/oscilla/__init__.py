"""
oscilla - homogenization of a Laplace-Beltrami problem on a thin strip with
an oscillating boundary.

The package computes the cell functions and the homogenized coefficient q0,
solves the full strip problem with P1 finite elements and measures how fast
the corrected homogenized solution approaches it as eps goes to zero.
"""

__version__ = "0.1.0"

from oscilla.profile import BoundaryProfile, EpsilonValue, make_profile, validate
from oscilla.mesh import TriMesh, build_cell_mesh, build_strip_mesh
from oscilla.cell import CellSolution, solve_cell
from oscilla.homogenized import TrigPoly, solve_homogenized
from oscilla.strip import StripMeshParams, solve_thin
from oscilla.convergence import ConvergenceReport, SweepConfig, run_sweep

__all__ = [
    'BoundaryProfile',
    'EpsilonValue',
    'make_profile',
    'validate',
    'TriMesh',
    'build_cell_mesh',
    'build_strip_mesh',
    'CellSolution',
    'solve_cell',
    'TrigPoly',
    'solve_homogenized',
    'StripMeshParams',
    'solve_thin',
    'ConvergenceReport',
    'SweepConfig',
    'run_sweep',
]
