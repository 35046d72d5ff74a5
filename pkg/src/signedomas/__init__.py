"""Consensus on switching signed graphs for open multi-agent systems.

Modules: ``signed_graph`` (incidence matrices, Laplacians, structural
balance), ``spectral`` (Jacobi eigensolver, zero eigenspaces), ``lyapunov``
(certificates and dwell-time checks), ``switched_sim`` (scenarios and the
switched simulation), ``unicycle`` (robot layer) and ``scenario_io``.
"""
from .errors import (DeflationInsufficient, DimensionMismatch, IllegalTransition, InvalidGraph,
                     NegativeEigenvalue, NonMonotoneSchedule, NonpositiveDelta, NotConnected,
                     NotSymmetric, NumericalError, ParseError, ScenarioError, SignedOmasError,
                     SingularEdgeLaplacian, ValidationError)
from .lyapunov import (LyapunovCertificate, certificate_for_mode, min_dwell_time,
                       solve_lyapunov_deflated, solve_lyapunov_tree, transition_gain,
                       verify_schedule)
from .scenario_io import (ScenarioFile, load_paper_scenario, load_scenario, parse_scenario,
                          serialize_scenario)
from .signed_graph import (BalanceResult, SignedGraph, check_structural_balance, edge_laplacian,
                           incidence_matrix, signed_laplacian, spanning_tree)
from .spectral import rank_of, symmetric_eigen, zero_eigenspace
from .switched_sim import Mode, Scenario, classify_outcome, simulate, transition_map
from .unicycle import linearizing_control, run_paper_demo, unicycle_step

__version__ = "0.1.0"
