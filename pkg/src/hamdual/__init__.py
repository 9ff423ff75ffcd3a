"""Multiple solutions of Hamiltonian elliptic systems through a dual variational functional.

    -Delta u = H_v(u, v),  -Delta v = H_u(u, v)  in Omega,  u = v = 0 on the boundary

The package discretizes Omega = (0,1)^d with finite differences, minimizes or
minimax-searches the Legendre-Fenchel dual functional over a biorthogonal
sine basis, and recovers and checks the primal solutions.
"""

from .conjugate import (HamiltonianSpec, biconjugate, calibrate_growth, check_H3,
                        conjugate_point, eval_H, grad_H, grad_conjugate, validate)
from .decomposition import SubspaceSpec, build_basis, gap_constants, positivity_constant, project
from .discretization import DiscreteField, LaplacianSolver, Mesh, apply_A, lp_norm
from .functional import (DualPoint, SolutionRecord, energy_identity_gap, eval_I, eval_J,
                         grad_J, pde_residual, recover_primal)
from .minimax import (LinkingConfig, choose_exponents, dual_fountain_search, fountain_search,
                      level_bounds, linking_config, newton_refine, radius_schedule, regime_of,
                      sphere_sample)
from .oracle import brute_force_conjugate, newton_primal, shoot_1d, shoot_hamiltonian
from .pipeline import Solver, Tolerances

__version__ = "0.1.0"
