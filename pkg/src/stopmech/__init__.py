"""Finite-horizon screening with voluntary agent exit.

A numerical laboratory for dynamic principal-agent problems where a
privately informed agent may irreversibly quit: optimal-stopping value
tables by backward induction, incentive-compatibility audits, payment
synthesis from allocation rules, relaxed profit maximization, and Monte
Carlo cross-checks, all driven by JSON scenario files or the library API.
"""

__version__ = "0.1.0"

from .environment import (Environment, TransitionKernel, UtilitySpec,
                          ValidationReport, build_environment, check_fosd,
                          check_full_support, check_lipschitz, kernel_cdf)
from .errors import (AssumptionError, BudgetError, DegenerateError,
                     DerivativeError, MissingMemoryError, NonFiniteError,
                     NotThresholdError, SchemaError, StopmechError,
                     SupportError)
from .icverify import (brute_force_deviation_oracle, gap_matrices,
                       one_shot_check)
from .mechanism import (AllocationRule, Mechanism, PaymentRules, PolyFn,
                        ReportingStrategy, StoppingPolicy, TabularFn,
                        build_mechanism, constant_fn, eval_mechanism)
from .montecarlo import (MCStats, Trajectory, monte_carlo,
                         sample_pl_density, sample_trajectory)
from .optimizer import (AffineFamily, OptimizerConfig, TabularFamily,
                        enforce_participation, monotone_payoff_check,
                        optimize_allocation, optimize_over_eta,
                        relaxed_objective, rp_check)
from .paysynth import (build_lengths, construct_phi_xi, construct_rho,
                       envelope_gamma, potentials, regular_set_membership,
                       revenue_equivalence, synthesize_mechanism,
                       verify_sufficiency)
from .scenario import ScenarioConfig, config_digest, load_scenario, parse_scenario
from .valuesolver import (ValueSolution, check_boundedness,
                          check_single_crossing, continuing_values,
                          extract_threshold, fixed_horizon_tables,
                          mean_first_passage, payoff_representation_check,
                          principal_exante, principal_value_tables,
                          solve_value)

__all__ = [name for name in dir() if not name.startswith("_")]
