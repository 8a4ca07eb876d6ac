"""Time-ordered exponentials through *-Lanczos tridiagonalization and path sums."""

from ._backend import BACKEND
from .dstar import StarDist, star, star_inverse_smooth
from .grid import Kernel2, TimeGrid, make_grid, sample_kernel, vcompose, volterra_resolvent
from .pathsum import PropagatorColumn, ordered_exp_entry, resolvent11
from .starlan import MatrixFn, Tolerances, TriT, moments, star_lanczos, tri_moments

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Kernel2", "MatrixFn", "PropagatorColumn", "StarDist", "TimeGrid", "Tolerances",
    "TriT", "make_grid", "moments", "ordered_exp_entry", "resolvent11", "sample_kernel", "star",
    "star_inverse_smooth", "star_lanczos", "tri_moments", "vcompose", "volterra_resolvent",
]
