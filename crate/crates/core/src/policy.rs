//! Pricing policies over the discretized state space and their file format.

use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::EnvState;
use crate::rng::SimRng;
use crate::space::StateSpace;

/// Maps a simulator state to a joint action index.
pub trait Policy: Sync {
    fn choose(&self, state: &EnvState, rng: &mut SimRng) -> usize;

    /// Non-zero action probabilities at `state`.
    fn action_probabilities(&self, state: &EnvState) -> Vec<(usize, f64)>;
}

/// Deterministic action per `(t, state index)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub space: StateSpace,
    /// `actions[t][state index]` for `t < horizon`.
    pub actions: Vec<Vec<u32>>,
}

impl PolicyTable {
    pub fn action_at(&self, t: usize, index: usize) -> usize {
        self.actions[t][index] as usize
    }

    pub fn lookup(&self, state: &EnvState) -> usize {
        self.action_at(state.t, self.space.index_of(state))
    }

    /// Same action everywhere.
    pub fn constant(space: StateSpace, action: usize) -> Self {
        let actions = (0..space.horizon).map(|t| vec![action as u32; space.state_count(t)]).collect();
        Self { space, actions }
    }
}

impl Policy for PolicyTable {
    fn choose(&self, state: &EnvState, _rng: &mut SimRng) -> usize {
        self.lookup(state)
    }

    fn action_probabilities(&self, state: &EnvState) -> Vec<(usize, f64)> {
        vec![(self.lookup(state), 1.0)]
    }
}

/// Softmax over per-state action preferences, temperature 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    pub space: StateSpace,
    /// `preferences[t][index * action_count + action]`.
    pub preferences: Vec<Vec<f64>>,
}

impl SoftmaxPolicy {
    pub fn zeros(space: StateSpace) -> Self {
        let preferences =
            (0..space.horizon).map(|t| vec![0.0; space.state_count(t) * space.action_count]).collect();
        Self { space, preferences }
    }

    pub fn preferences_at(&self, t: usize, index: usize) -> &[f64] {
        let a = self.space.action_count;
        &self.preferences[t][index * a..(index + 1) * a]
    }

    pub fn preferences_at_mut(&mut self, t: usize, index: usize) -> &mut [f64] {
        let a = self.space.action_count;
        &mut self.preferences[t][index * a..(index + 1) * a]
    }

    pub fn probabilities(&self, t: usize, index: usize) -> Vec<f64> {
        softmax(self.preferences_at(t, index))
    }

    pub fn sample<R: Rng + ?Sized>(&self, t: usize, index: usize, rng: &mut R) -> usize {
        sample_categorical(&self.probabilities(t, index), rng)
    }

    /// Highest-probability action per state, ties to the lowest index.
    pub fn mode_table(&self) -> PolicyTable {
        let actions = (0..self.space.horizon)
            .map(|t| {
                (0..self.space.state_count(t))
                    .map(|i| argmax(self.preferences_at(t, i)) as u32)
                    .collect()
            })
            .collect();
        PolicyTable { space: self.space.clone(), actions }
    }
}

impl Policy for SoftmaxPolicy {
    fn choose(&self, state: &EnvState, rng: &mut SimRng) -> usize {
        self.sample(state.t, self.space.index_of(state), rng)
    }

    fn action_probabilities(&self, state: &EnvState) -> Vec<(usize, f64)> {
        self.probabilities(state.t, self.space.index_of(state))
            .into_iter()
            .enumerate()
            .filter(|(_, p)| *p > 0.0)
            .collect()
    }
}

/// Uniformly random joint action at every state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformPolicy {
    pub action_count: usize,
}

impl Policy for UniformPolicy {
    fn choose(&self, _state: &EnvState, rng: &mut SimRng) -> usize {
        rng.random_range(0..self.action_count)
    }

    fn action_probabilities(&self, _state: &EnvState) -> Vec<(usize, f64)> {
        let p = 1.0 / self.action_count as f64;
        (0..self.action_count).map(|a| (a, p)).collect()
    }
}

pub fn softmax(preferences: &[f64]) -> Vec<f64> {
    let max = preferences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = preferences.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn sample_categorical<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Policy file contents.
///
/// `layout` describes the state indexing: per epoch `t`, state index
/// `inventory_index * bins_at(t) + revenue_bin`, where `inventory_index` is
/// row-major over typologies (typology 0 slowest) and `bins_at(t)` is
/// `layout.revenue.bins` for `t <= tau` and 1 otherwise (1 everywhere when
/// `revenue` is null). Joint actions are flattened the same way over price
/// indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyFile {
    Deterministic {
        layout: StateSpace,
        /// `actions[t][state]`
        actions: Vec<Vec<u32>>,
        /// Optional `values[t][state]` for `t = 0..=horizon`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<Vec<f64>>>,
    },
    Softmax {
        layout: StateSpace,
        /// `probabilities[t][state * action_count + action]`
        probabilities: Vec<Vec<f64>>,
        preferences: Vec<Vec<f64>>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PolicyFile {
    pub fn deterministic(table: &PolicyTable, values: Option<Vec<Vec<f64>>>) -> Self {
        PolicyFile::Deterministic { layout: table.space.clone(), actions: table.actions.clone(), values }
    }

    pub fn softmax(policy: &SoftmaxPolicy) -> Self {
        let probabilities = (0..policy.space.horizon)
            .map(|t| {
                (0..policy.space.state_count(t)).flat_map(|i| policy.probabilities(t, i)).collect()
            })
            .collect();
        PolicyFile::Softmax {
            layout: policy.space.clone(),
            probabilities,
            preferences: policy.preferences.clone(),
        }
    }

    pub fn layout(&self) -> &StateSpace {
        match self {
            PolicyFile::Deterministic { layout, .. } | PolicyFile::Softmax { layout, .. } => layout,
        }
    }

    pub fn into_policy(self) -> Box<dyn Policy + Send> {
        match self {
            PolicyFile::Deterministic { layout, actions, .. } => {
                Box::new(PolicyTable { space: layout, actions })
            }
            PolicyFile::Softmax { layout, preferences, .. } => {
                Box::new(SoftmaxPolicy { space: layout, preferences })
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyFileError> {
        let file = io::BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyFileError> {
        let file = io::BufReader::new(fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}
