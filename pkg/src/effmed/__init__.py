"""Scalar wave scattering by many small inhomogeneities and its effective medium."""

from .discrete_solver import assemble_discrete_system, evaluate_field_discrete, solve_discrete
from .effective_solver import assemble_ls_system, born_series, evaluate_field_effective, residual_check, solve_effective
from .errors import EffmedError, NumericalError, ValidationError
from .kernels import ball_newtonian_potential, ball_volume, green
from .medium import Domain, MediumSpec, passivity_check, potential_from_refraction, recipe_i_design, refraction_from_potential
from .placement import ScattererConfig, count_in_region, place_inhomogeneities, riemann_sum
from .wave import WaveContext

__version__ = "0.1.0"
