"""Superradiant burst simulation for emitter arrays.

Exact master-equation evolution for small arrays, the permutation-symmetric
Dicke ladder, and order-2/order-3 cumulant moment equations for large ones.
"""
from .couplings import (CouplingModel, JumpDecomposition, build_dicke, build_free_space,
                        build_waveguide, emission_rate, emission_rate_eigen, green_tensor,
                        jump_decomposition, projected_green)
from .cumulants import MomentLayout, MomentState, evolve_moments, moment_derivative
from .dicke import evolve_ladder, ladder_rates, peak_time_formula, peak_time_literature
from .errors import CapacityError, DomainError, IntegrationError, ParseError, SupercorrError
from .geometry import EmitterArray, build_lattice, load_custom
from .integrate import IntegratorConfig, Trajectory, integrate_generic
from .liouville import DensityState, evolve_exact, lindblad_derivative
from .moments import MomentSystem, compile_system, cumulant_expand
from .peaks import PeakResult, find_peak, fit_scaling

__version__ = "0.1.0"
