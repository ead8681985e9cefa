"""Preconditioned Langevin and random-walk samplers for Gibbs posteriors,
with convergence diagnostics and a finite-state conductance laboratory."""

from .conductance import (DiscreteChain, MixingBoundResult, ProfilePoint,
                          chi2_divergence, chi2_mixing_time, discretize_mala,
                          ergodic_flow, random_reversible_lazy,
                          s_conductance_profile, verify_mixing_bound,
                          worst_warm_start)
from .diagnostics import (DiagnosticsReport, effective_sample_size,
                          ess_reaches, gelman_rubin, iterations_to_threshold,
                          moment_discrepancy, psrf_raw, rhat_trajectory)
from .estimation import (ErmConfig, ErmResult, empirical_gram_precond,
                         empirical_hessian_precond, minimize_empirical_risk)
from .experiments import (QuantileExperimentConfig, QuantileExperimentResult,
                          run_conductance_batch, run_quantile_experiment,
                          run_scaling_study)
from .linalg import SpdOperator
from .rng import chain_stream, derive_seed, purpose_stream
from .samplers import (ChainState, ProposalSpec, Trace, WarmStartSpec,
                       acceptance, autotune_step_coefficient, log_q,
                       mala_step_size, propose, pushforward_target, run_chain,
                       step, trace_from_csv, trace_to_csv, warm_bound,
                       warm_start_sample)
from .targets import (Box, ConditionScan, Dataset, GaussianPrior, GibbsSpec,
                      LossOracle, RescaledPotential, TargetDensity,
                      UniformBoxPrior, check_loss_oracle, condition_a_scan,
                      dataset_from_csv, dataset_to_csv, gaussian_target,
                      get_loss, gibbs_potential, register_loss,
                      rescaled_potential, squared_loss_oracle)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
