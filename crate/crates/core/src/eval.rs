//! Monte Carlo policy evaluation and run aggregation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{step, ConstraintSpec, EnvConfig, EnvError};
use crate::policy::Policy;
use crate::rng::{label, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env_id: Option<u8>,
    pub constraint: Option<ConstraintSpec>,
    pub n_sims: usize,
    /// Mean total reward per episode, penalties included.
    pub mean_revenue: f64,
    /// Sample standard deviation (`n - 1` denominator, 0 for one simulation).
    pub std_revenue: f64,
    pub standard_error: f64,
    /// Fraction of episodes with `R_tau >= target`; `None` when unconstrained.
    pub satisfaction_rate: Option<f64>,
    /// Cumulative revenue at `tau` before the penalty, one per simulation.
    pub revenue_at_tau_samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("need at least one simulation")]
    NoSimulations,
    #[error("satisfaction gap needs two constrained reports")]
    Unconstrained,
    #[error("reports come from different environments")]
    EnvMismatch,
    #[error("no runs to aggregate")]
    Empty,
    #[error("no successful run for env {env_id} {algorithm} at {episodes} episodes")]
    EmptyCell { env_id: u8, algorithm: String, episodes: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Simulates `n_sims` episodes of `policy`.
///
/// Simulation `i` draws demand from its own substream and policy actions
/// from another, both derived from `seed` and `i`, so the result does not
/// depend on how simulations are scheduled across threads.
pub fn monte_carlo_eval(
    config: &EnvConfig,
    policy: &dyn Policy,
    n_sims: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if n_sims == 0 {
        return Err(EvalError::NoSimulations);
    }
    let tau = config.constraint.map(|c| c.tau);
    let episodes: Vec<(f64, Option<f64>)> = (0..n_sims)
        .into_par_iter()
        .map(|i| {
            let mut demand_rng = stream(seed, &[label("eval-demand"), i as u64]);
            let mut action_rng = stream(seed, &[label("eval-action"), i as u64]);
            let mut state = config.reset();
            let mut total = 0.0;
            let mut at_tau = None;
            while state.t < config.horizon {
                let a = policy.choose(&state, &mut action_rng);
                let outcome = step(config, &state, &config.unflatten_action(a)?, &mut demand_rng)?;
                total += outcome.reward;
                if Some(outcome.next_state.t) == tau {
                    at_tau = Some(outcome.next_state.cumulative_revenue);
                }
                state = outcome.next_state;
            }
            Ok((total, at_tau))
        })
        .collect::<Result<_, EnvError>>()?;

    let totals: Vec<f64> = episodes.iter().map(|e| e.0).collect();
    let (mean, std) = mean_std(&totals);
    let samples: Vec<f64> = episodes.iter().filter_map(|e| e.1).collect();
    let satisfaction_rate = config.constraint.map(|c| {
        samples.iter().filter(|&&r| r >= c.target).count() as f64 / n_sims as f64
    });
    Ok(EvalReport {
        env_id: config.env_id,
        constraint: config.constraint,
        n_sims,
        mean_revenue: mean,
        std_revenue: std,
        standard_error: std / (n_sims as f64).sqrt(),
        satisfaction_rate,
        revenue_at_tau_samples: samples,
    })
}

/// Sample mean and standard deviation (two-pass, `n - 1` denominator).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// `rate_a - rate_b`.
pub fn satisfaction_gap(a: &EvalReport, b: &EvalReport) -> Result<f64, EvalError> {
    if a.env_id != b.env_id || a.constraint != b.constraint {
        return Err(EvalError::EnvMismatch);
    }
    match (a.satisfaction_rate, b.satisfaction_rate) {
        (Some(ra), Some(rb)) => Ok(ra - rb),
        _ => Err(EvalError::Unconstrained),
    }
}

/// One benchmark cell at one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub env_id: u8,
    pub algorithm: String,
    pub episodes: usize,
    pub seed: u64,
    /// `None` when the run failed before evaluation.
    pub report: Option<EvalReport>,
    pub exact_value: Option<f64>,
    pub train_s: f64,
    pub solve_s: f64,
    pub eval_s: f64,
    /// `"ok"` or a failure description.
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub env_id: u8,
    pub algorithm: String,
    pub episodes: usize,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    /// Set when `std` is 0 only because there was a single run.
    pub single_run: bool,
}

/// Mean and sample std of `mean_revenue` per `(env, algorithm, episodes)`,
/// ordered by that key. Failed runs are skipped; a cell left with no
/// successful run is an error.
pub fn aggregate_runs(runs: &[RunResult]) -> Result<Vec<CellSummary>, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cells: BTreeMap<(u8, String, usize), Vec<f64>> = BTreeMap::new();
    for run in runs {
        let values = cells.entry((run.env_id, run.algorithm.clone(), run.episodes)).or_default();
        if let Some(report) = &run.report {
            values.push(report.mean_revenue);
        }
    }
    cells
        .into_iter()
        .map(|((env_id, algorithm, episodes), values)| {
            if values.is_empty() {
                return Err(EvalError::EmptyCell { env_id, algorithm, episodes });
            }
            let (mean, std) = mean_std(&values);
            Ok(CellSummary { env_id, algorithm, episodes, runs: values.len(), mean, std, single_run: values.len() == 1 })
        })
        .collect()
}
