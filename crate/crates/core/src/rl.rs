//! Tabular model-free learners over the flattened joint action space.
//!
//! Both learners see the environment only through [`step`]; states are
//! aliased with the same inventory and revenue-bin layout the DP uses.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{step, EnvConfig, EnvError};
use crate::policy::{argmax, PolicyTable, SoftmaxPolicy};
use crate::rng::{stream, SimRng};
use crate::space::{enumerate_states, StateSpace};

/// Step size per update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSize {
    Constant { rate: f64 },
    /// `max(rate, 1 / n)` where `n` counts updates of the entry.
    Harmonic { rate: f64 },
}

impl StepSize {
    fn at(self, visits: u32) -> f64 {
        match self {
            StepSize::Constant { rate } => rate,
            StepSize::Harmonic { rate } => rate.max(1.0 / f64::from(visits.max(1))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub episodes: usize,
    pub step_size: StepSize,
    /// Exploration for Q-learning, annealed linearly over episodes.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Subtract the running mean return per epoch in policy gradient.
    pub baseline: bool,
    pub seed: u64,
}

impl TrainSpec {
    /// Visit-count step size with a 0.01 floor; a constant 0.1 keeps too
    /// much reward noise in the estimates to separate close actions.
    pub fn q_learning(episodes: usize, seed: u64) -> Self {
        Self {
            episodes,
            step_size: StepSize::Harmonic { rate: 0.01 },
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            baseline: false,
            seed,
        }
    }

    pub fn policy_gradient(episodes: usize, seed: u64) -> Self {
        Self {
            episodes,
            step_size: StepSize::Constant { rate: 0.1 },
            epsilon_start: 0.0,
            epsilon_end: 0.0,
            baseline: true,
            seed,
        }
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            return self.epsilon_start;
        }
        let frac = episode as f64 / (self.episodes - 1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// `values[t][state * action_count + action]` for `t < horizon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub space: StateSpace,
    pub values: Vec<Vec<f64>>,
}

impl QTable {
    pub fn zeros(space: StateSpace) -> Self {
        let values = (0..space.horizon).map(|t| vec![0.0; space.state_count(t) * space.action_count]).collect();
        Self { space, values }
    }

    pub fn row(&self, t: usize, index: usize) -> &[f64] {
        let a = self.space.action_count;
        &self.values[t][index * a..(index + 1) * a]
    }

    fn max_at(&self, t: usize, index: usize) -> f64 {
        if t >= self.space.horizon {
            return 0.0;
        }
        self.row(t, index).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Greedy table, ties to the lowest action index.
pub fn policy_from_q(q: &QTable) -> PolicyTable {
    let actions = (0..q.space.horizon)
        .map(|t| (0..q.space.state_count(t)).map(|i| argmax(q.row(t, i)) as u32).collect())
        .collect();
    PolicyTable { space: q.space.clone(), actions }
}

#[derive(Clone, Debug)]
pub struct QLearningRun {
    pub q: QTable,
    pub policy: PolicyTable,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct PolicyGradientRun {
    pub policy: SoftmaxPolicy,
    pub elapsed: Duration,
}

/// Epsilon-greedy one-step Q-learning with `gamma = 1`.
pub fn train_q_learning(config: &EnvConfig, spec: &TrainSpec) -> Result<QLearningRun, EnvError> {
    let started = Instant::now();
    let space = enumerate_states(config);
    let actions = space.action_count;
    let mut q = QTable::zeros(space.clone());
    let mut visits: Vec<Vec<u32>> = q.values.iter().map(|v| vec![0; v.len()]).collect();
    let mut rng = stream(spec.seed, &[]);

    for episode in 0..spec.episodes {
        let epsilon = spec.epsilon(episode);
        let mut state = config.reset();
        while state.t < config.horizon {
            let t = state.t;
            let index = space.index_of(&state);
            let a = if rng.random::<f64>() < epsilon {
                rng.random_range(0..actions)
            } else {
                argmax(q.row(t, index))
            };
            let outcome = step(config, &state, &config.unflatten_action(a)?, &mut rng)?;
            let next = &outcome.next_state;
            let target = outcome.reward + q.max_at(next.t, space.index_of(next));
            let slot = index * actions + a;
            visits[t][slot] += 1;
            let lr = spec.step_size.at(visits[t][slot]);
            q.values[t][slot] += lr * (target - q.values[t][slot]);
            state = outcome.next_state;
        }
    }

    let policy = policy_from_q(&q);
    Ok(QLearningRun { q, policy, elapsed: started.elapsed() })
}

/// Episodic softmax policy gradient.
///
/// After each episode every visited `(t, state, action)` is updated with the
/// return collected from `t` to the end of the episode, minus the running
/// mean of those returns at epoch `t` when `spec.baseline` is set.
pub fn train_policy_gradient(config: &EnvConfig, spec: &TrainSpec) -> Result<PolicyGradientRun, EnvError> {
    let started = Instant::now();
    let space = enumerate_states(config);
    let mut policy = SoftmaxPolicy::zeros(space.clone());
    let mut rng: SimRng = stream(spec.seed, &[]);
    let mut baseline = vec![0.0; config.horizon];
    let mut trajectory: Vec<(usize, usize, f64)> = Vec::with_capacity(config.horizon);

    for episode in 0..spec.episodes {
        trajectory.clear();
        let mut state = config.reset();
        while state.t < config.horizon {
            let index = space.index_of(&state);
            let a = policy.sample(state.t, index, &mut rng);
            let outcome = step(config, &state, &config.unflatten_action(a)?, &mut rng)?;
            trajectory.push((index, a, outcome.reward));
            state = outcome.next_state;
        }

        let lr = spec.step_size.at(episode as u32 + 1);
        let mut to_go = 0.0;
        for t in (0..trajectory.len()).rev() {
            let (index, a, reward) = trajectory[t];
            to_go += reward;
            let advantage = if spec.baseline { to_go - baseline[t] } else { to_go };
            baseline[t] += (to_go - baseline[t]) / (episode + 1) as f64;
            let probs = policy.probabilities(t, index);
            let prefs = policy.preferences_at_mut(t, index);
            for (b, (pref, p)) in prefs.iter_mut().zip(probs).enumerate() {
                let indicator = if b == a { 1.0 } else { 0.0 };
                *pref += lr * advantage * (indicator - p);
            }
        }
    }

    Ok(PolicyGradientRun { policy, elapsed: started.elapsed() })
}
