"""Singular cross-diffusion limit of a two-species competition model in 1-D.

Modules: ``model`` (parameters, h, zeros, constant state), ``spectral``
(bifurcation points and index), ``timemap`` and ``levels`` (time map of the
Neumann problem), ``bvp`` (profile reconstruction), ``branch`` (constraint
selection and branch tracing), ``sktfd`` (finite-difference solver for the
full system) and ``cli``.
"""

from .errors import (AssemblyError, BracketError, ConfigError, ContinuationStall, DiscriminantError,
                     DomainError, NegativeDensity, NewtonDivergence, NoRootError, NumericalFailure,
                     QuadratureError, RegimeError, SignError, SKTError, StateError)
from .model import (WEAK_EXAMPLE, STRONG_EXAMPLE, ModelParams, classify_regime, constant_state, discriminant_D, h_value,
                    potential_H, tau_bar, tau_tilde, zeros_of_h)
from .spectral import bifurcation_point, spectral_report
from .timemap import TimeMap, time_map_X, time_map_limit
from .bvp import reconstruct_profile, residual_check
from .branch import classify_singular_limit, select_tau, solve_balance, trace_branch
from .sktfd import SktParams, compare_with_limit, solve_skt

__version__ = "0.1.0"
