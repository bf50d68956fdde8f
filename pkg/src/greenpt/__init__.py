"""Bound-state perturbation theory from the pole decomposition of the unperturbed Green function."""

from .errors import GreenPTError
from .models import ModelSpec, build_model
from .operators import EnergyOperator, make_operator
from .oracle import dense_eigs, exact_states
from .pt import (PTProblem, PTReport, degenerate_solve, effective_kernel, energy_fixed_point,
                 make_problem, pt_expand, resolvent_apply, sakurai_solve, wavefunction)
from .rspt import Spectrum, rspt_series
from .unperturbed import BoundState, PoleDecomposition, background_eval, green_u, pole_decomposition, solve_unperturbed

__version__ = "0.1.0"
