"""Finite time scales, discrete Euler-Lagrange solvers and Noether conserved quantities."""
from .errors import *  # noqa: F401,F403
from .expr import compile_expr, differentiate, evaluate, parse, to_source
from .noether import (
    Generator,
    SymmetryGroup,
    admissibility_check,
    bt_quantity_C,
    conservation_report,
    drift_report,
    extract_generator,
    invariance_check,
    noether_I,
)
from .timescale import (
    GridFunction,
    TimeScale,
    delta_derivative,
    delta_integral,
    dyadic_scale,
    image_scale,
    make_timescale,
    nabla_derivative,
    nabla_integral,
    uniform_scale,
)
from .variational import Lagrangian, SymbolicLagrangian, solve_el, solve_el_nonshifted, solve_el_shifted

__version__ = "0.1.0"
