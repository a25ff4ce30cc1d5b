//! Finite-horizon dynamic pricing under Poisson demand.
//!
//! The crate provides the pricing environments, demand estimation, exact
//! backward induction over the discretized state space, two model-free
//! tabular learners and the evaluation / benchmark machinery that compares
//! them.

pub mod demand;
pub mod dp;
pub mod env;
pub mod estimation;
pub mod eval;
pub mod experiment;
pub mod policy;
pub mod rl;
pub mod rng;
pub mod space;

pub use demand::{intensity, sales_pmf, sample_demand, DemandModel, DemandSpec, ExpNonlinear};
pub use dp::{
    exact_policy_value, fitted_dp, solve_backward, solve_oracle, true_rates, FittedDp, SolverError,
    ValueFunction,
};
pub use env::{make_env, Action, ConstraintSpec, EnvConfig, EnvError, EnvState, StepOutcome, Typology};
pub use estimation::{
    collect_random_episodes, fit_ols, EstimationError, FeatureSet, RegressionModel,
    SalesObservation,
};
pub use eval::{
    aggregate_runs, monte_carlo_eval, satisfaction_gap, CellSummary, EvalError, EvalReport, RunResult,
};
pub use experiment::{emit_plot_data, run_benchmark, Algorithm, BenchmarkPlan, ExperimentError};
pub use policy::{Policy, PolicyTable, SoftmaxPolicy, UniformPolicy};
pub use rl::{policy_from_q, train_policy_gradient, train_q_learning, QTable, StepSize, TrainSpec};
pub use space::{revenue_to_bin, StateSpace};
