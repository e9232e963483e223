"""Numerical toolkit for ballistic optimal transport on discrete measures.

Computes and cross-verifies the deterministic and stochastic transport costs
built from a linear initial pairing plus a Lagrangian action: dynamic and
dual dynamic costs, Hamilton-Jacobi(-Bellman) value functions by variational
grid formulas, exact Kantorovich LPs, Wasserstein-space interpolation
certificates, Bolza dual pairs, and optimal maps composed from Hamiltonian
flows.
"""

from .convexity import (Lagrangian, Hamiltonian, ConvexProfile, ConvexFunctionSamples,
                        legendre_transform, dual_lagrangian, hamiltonian,
                        check_assumptions, INF)
from .measures import (DiscreteMeasure, QuantileFunction, measure, dirac, canonical,
                       push_forward, first_moment, quantile, from_samples,
                       to_file, from_file)
from .transport import (CostMatrix, TransportPlan, solve_kantorovich, brenier_W,
                        monotone_coupling_1d, c_transform, InfeasibleTransportError)
from .dynamics import (PhasePoint, FlowTrajectory, GridField, FixedEndResult,
                       fixed_end_cost, dual_fixed_end_cost, ballistic_cost,
                       hamiltonian_flow, hopf_lax_forward, hopf_lax_backward,
                       dual_hopf_lax_backward)
from .interpolation import (ballistic_min, ballistic_max, interpolate_min,
                            interpolate_max, optimal_map_min, optimal_map_max,
                            recover_fixed_end, factorization_check, eulerian_check,
                            fixed_end_transport, dual_fixed_end_transport,
                            default_candidate_grid, InterpolationCertificate)
from .bolza import BolzaInstance, BolzaSolution, BoundaryCost, solve_bolza, \
    hamiltonian_system_check
from .lattice import (Lattice, lattice_covering, control_ladder, hjb_backward,
                      forward_law, mt_cost, ballistic_min_stoch, ballistic_max_stoch,
                      extract_drift, ControlPolicy, LatticeValueField, CFLError)

__version__ = "0.1.0"
