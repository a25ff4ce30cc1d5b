//! Backward induction over the discretized state space.
//!
//! [`solve_backward`] works with any rate function: the true intensities give
//! the oracle benchmark, estimated ones give fitted DP. Within a time slice
//! every state is evaluated independently against the read-only value table
//! of the next epoch.

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{intensity, sales_pmf, sales_pmf_into};
use crate::env::{EnvConfig, EnvError, EnvState};
use crate::estimation::{collect_random_episodes, fit_per_typology, EstimationError, FeatureSet, RegressionModel};
use crate::policy::{Policy, PolicyTable};
use crate::space::{enumerate_states, StateSpace};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("exact evaluation needs a single typology without constraint")]
    Unsupported,
    #[error("fitted DP needs at least one episode")]
    NoEpisodes,
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// `values[t][state]` for `t = 0..=horizon`; the terminal slice is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub space: StateSpace,
    pub values: Vec<Vec<f64>>,
}

impl ValueFunction {
    pub fn value(&self, state: &EnvState) -> f64 {
        self.values[state.t][self.space.index_of(state)]
    }

    /// Value of the initial state.
    pub fn initial(&self, config: &EnvConfig) -> f64 {
        self.value(&config.reset())
    }
}

/// Per-(typology, price, inventory) sales distributions for one epoch.
struct SliceTables {
    /// `pmf[typology][price index][inventory]`
    pmf: Vec<Vec<Vec<Vec<f64>>>>,
}

impl SliceTables {
    fn build<F>(config: &EnvConfig, rate_fn: &F, t: usize) -> Self
    where
        F: Fn(usize, f64, usize) -> f64,
    {
        let pmf = config
            .typologies
            .iter()
            .enumerate()
            .map(|(i, ty)| {
                ty.grid
                    .iter()
                    .map(|&price| {
                        let rate = rate_fn(i, price, t);
                        (0..=ty.initial_inventory)
                            .map(|n| {
                                let mut v = Vec::new();
                                sales_pmf_into(rate, n, &mut v);
                                v
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { pmf }
    }
}

/// One joint sales outcome from a given inventory vector.
#[derive(Clone, Copy)]
struct Successor {
    prob: f64,
    revenue: f64,
    inventory_index: usize,
    bin_shift: usize,
}

/// Optimal values and greedy policy for `config` under `rate_fn`.
///
/// `rate_fn(typology, price, t)` must be non-negative on the price grids.
/// Ties in the maximization go to the lowest joint action index.
pub fn solve_backward<F>(config: &EnvConfig, rate_fn: F) -> (ValueFunction, PolicyTable)
where
    F: Fn(usize, f64, usize) -> f64 + Sync,
{
    let space = enumerate_states(config);
    let horizon = config.horizon;
    let k = config.typologies.len();
    let action_count = config.action_count();
    let inventory_count = space.inventory_count();
    let strides: Vec<usize> = (0..k).map(|i| space.inventory_stride(i)).collect();
    let inventories: Vec<Vec<u32>> = (0..inventory_count).map(|i| space.decode_inventory(i)).collect();
    let joint_actions: Vec<Vec<usize>> = (0..action_count)
        .map(|a| config.unflatten_action(a).expect("index below action count").price_indices)
        .collect();

    let mut values = vec![Vec::new(); horizon + 1];
    values[horizon] = vec![0.0; space.state_count(horizon)];
    let mut actions = vec![Vec::new(); horizon];

    for t in (0..horizon).rev() {
        let tables = SliceTables::build(config, &rate_fn, t);
        let next = &values[t + 1];
        let bins = space.bins_at(t);
        let next_bins = space.bins_at(t + 1);
        let penalty = config.constraint.filter(|c| c.tau == t + 1);
        let grid = space.revenue;

        let slices: Vec<(Vec<f64>, Vec<u32>)> = (0..inventory_count)
            .into_par_iter()
            .map(|inv_idx| {
                let stock = &inventories[inv_idx];
                let mut best_value = vec![f64::NEG_INFINITY; bins];
                let mut best_action = vec![0u32; bins];
                let mut successors: Vec<Successor> = Vec::new();
                let mut sold = vec![0u32; k];
                for (a, prices) in joint_actions.iter().enumerate() {
                    successors.clear();
                    sold.iter_mut().for_each(|s| *s = 0);
                    'outcomes: loop {
                        let mut prob = 1.0;
                        let mut revenue = 0.0;
                        let mut inventory_index = inv_idx;
                        for i in 0..k {
                            let pi = prices[i];
                            prob *= tables.pmf[i][pi][stock[i] as usize][sold[i] as usize];
                            revenue += config.typologies[i].grid[pi] * f64::from(sold[i]);
                            inventory_index -= sold[i] as usize * strides[i];
                        }
                        let bin_shift = grid.map_or(0, |g| g.shift(revenue));
                        successors.push(Successor { prob, revenue, inventory_index, bin_shift });
                        let mut i = k;
                        loop {
                            if i == 0 {
                                break 'outcomes;
                            }
                            i -= 1;
                            sold[i] += 1;
                            if sold[i] <= stock[i] {
                                break;
                            }
                            sold[i] = 0;
                        }
                    }

                    for b in 0..bins {
                        let mut q = 0.0;
                        for s in &successors {
                            let next_bin = if next_bins == 1 {
                                0
                            } else {
                                (b + s.bin_shift).min(next_bins - 1)
                            };
                            let mut reward = s.revenue;
                            if let (Some(c), Some(g)) = (penalty, grid) {
                                reward -= c.penalty(g.value(next_bin));
                            }
                            q += s.prob * (reward + next[s.inventory_index * next_bins + next_bin]);
                        }
                        if q > best_value[b] {
                            best_value[b] = q;
                            best_action[b] = a as u32;
                        }
                    }
                }
                (best_value, best_action)
            })
            .collect();

        let mut v_t = Vec::with_capacity(space.state_count(t));
        let mut a_t = Vec::with_capacity(space.state_count(t));
        for (v, a) in slices {
            v_t.extend(v);
            a_t.extend(a);
        }
        values[t] = v_t;
        actions[t] = a_t;
    }

    (
        ValueFunction { space: space.clone(), values },
        PolicyTable { space, actions },
    )
}

/// True demand intensities of `config` as a rate function.
pub fn true_rates(config: &EnvConfig) -> impl Fn(usize, f64, usize) -> f64 + Sync + '_ {
    move |i, price, t| intensity(&config.typologies[i].demand, price, t)
}

/// Oracle solution under the true intensities.
pub fn solve_oracle(config: &EnvConfig) -> (ValueFunction, PolicyTable) {
    solve_backward(config, true_rates(config))
}

/// Expected total revenue of `policy` from the initial state, computed by
/// forward recursion `W_t(N) = sum_k P(S=k) (p k + W_{t+1}(N-k))`.
///
/// Only for a single typology without constraint; stochastic policies are
/// averaged over their action probabilities.
pub fn exact_policy_value<F>(config: &EnvConfig, policy: &dyn Policy, rate_fn: F) -> Result<f64, SolverError>
where
    F: Fn(usize, f64, usize) -> f64,
{
    if config.typologies.len() != 1 || config.constraint.is_some() {
        return Err(SolverError::Unsupported);
    }
    let ty = &config.typologies[0];
    let n0 = ty.initial_inventory as usize;
    let mut next = vec![0.0; n0 + 1];
    for t in (0..config.horizon).rev() {
        let mut cur = vec![0.0; n0 + 1];
        for (n, slot) in cur.iter_mut().enumerate() {
            let state = EnvState { t, inventories: vec![n as u32], cumulative_revenue: 0.0 };
            for (action, weight) in policy.action_probabilities(&state) {
                let price = ty.grid[action];
                let pmf = sales_pmf(rate_fn(0, price, t), n as u32);
                let value: f64 = pmf
                    .iter()
                    .enumerate()
                    .map(|(sold, p)| p * (price * sold as f64 + next[n - sold]))
                    .sum();
                *slot += weight * value;
            }
        }
        next = cur;
    }
    Ok(next[n0])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTiming {
    pub collect: Duration,
    pub fit: Duration,
    pub solve: Duration,
}

impl FitTiming {
    /// Data collection plus estimation.
    pub fn train(&self) -> Duration {
        self.collect + self.fit
    }
}

#[derive(Clone, Debug)]
pub struct FittedDp {
    pub policy: PolicyTable,
    pub values: ValueFunction,
    pub models: Vec<RegressionModel>,
    pub timing: FitTiming,
}

/// Collect random episodes, fit one demand model per typology, then solve
/// the Bellman recursion under the estimated rates.
pub fn fitted_dp<R: Rng + ?Sized>(config: &EnvConfig, n_episodes: usize, rng: &mut R) -> Result<FittedDp, SolverError> {
    if n_episodes == 0 {
        return Err(SolverError::NoEpisodes);
    }
    let started = Instant::now();
    let data = collect_random_episodes(config, n_episodes, rng)?;
    let collect = started.elapsed();

    let started = Instant::now();
    let models = fit_per_typology(config, &data, FeatureSet::for_config(config))?;
    let fit = started.elapsed();

    let started = Instant::now();
    let (values, policy) = solve_backward(config, |i, price, t| models[i].predict_rate(price, t));
    let solve = started.elapsed();

    Ok(FittedDp { policy, values, models, timing: FitTiming { collect, fit, solve } })
}
