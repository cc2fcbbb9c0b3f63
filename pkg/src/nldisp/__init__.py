"""Principal spectral analysis of nonlocal dispersal operators.

Discretizes u_t = int_D kappa(y - x) u(t, y) dy + a(t, x) u on boxes and
torus surrogates of R^N, estimates its growth-rate quantities (top Lyapunov
exponent, monodromy spectrum point, generalized principal eigenvalues), and
verifies the relations between them at desk scale.
"""

from ._accel import HAVE_NUMBA, backend, warmup
from .coefficients import (APField, Mode, SpaceProfile, constant_profile,
                           field_from_config, periodic_approximant,
                           sampled_sup_distance, space_time_average)
from .discretize import (DiscreteOperator, Grid, assemble, box_grid,
                         check_operator, grid_from_config, neumann_form,
                         torus_grid)
from .evolve import (ComparisonReport, NumericalFailure, Propagator, State,
                     bounded_entire_solution, build_supersolution,
                     check_comparison, logistic_steady_state, make_propagator,
                     propagate, propagator_log_norm, trajectory)
from .kernels import (H1Report, Kernel, bump_kernel, eval_kernel,
                      gaussian_kernel, kernel_from_config, load_tabulated_csv,
                      tabulated_kernel, verify_h1)
from .spectral import (FeasibilityCertificate, LyapunovResult, SpectralReport,
                       dichotomy_probe, estimate_lambda_PE,
                       estimate_lambda_PE_prime, lyapunov_top,
                       monodromy_spectrum, principal_eigen_autonomous,
                       theta_dichotomy_check)
from .verify import (Scenario, TheoremReport, build_scenario, run_theorem,
                     sweep, verify_monotone_L4_2, verify_continuity_L3_1)

__version__ = "0.1.0"
