//! Finite-horizon pricing environments.
//!
//! A configuration holds one or more typologies (independent inventory and
//! demand pairs) that share an optional cumulative-revenue constraint. The
//! simulator keeps cumulative revenue exact; discretization only happens in
//! the solvers and tabular learners.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{sample_demand, DemandError, DemandModel, DemandSpec, ExpNonlinear};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("unknown environment id {0} (expected 1..=5)")]
    UnknownEnv(u8),
    #[error("cannot step terminal state at t={0}")]
    Terminal(usize),
    #[error("action has {got} price indices, expected {expected}")]
    ActionArity { expected: usize, got: usize },
    #[error("price index {index} out of range for typology {typology} ({size} prices)")]
    PriceIndex { typology: usize, index: usize, size: usize },
    #[error("joint action {index} out of range ({count} actions)")]
    JointIndex { index: usize, count: usize },
    #[error("state does not match configuration: {0}")]
    StateMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Demand(#[from] DemandError),
}

/// Cumulative revenue target checked once, at epoch `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub target: f64,
    pub mu: f64,
    pub tau: usize,
}

impl ConstraintSpec {
    pub fn penalty(&self, revenue_at_tau: f64) -> f64 {
        self.mu * (self.target - revenue_at_tau).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Typology {
    pub demand: DemandSpec,
    /// Strictly ascending candidate prices.
    pub grid: Vec<f64>,
    pub initial_inventory: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigFile", into = "ConfigFile")]
pub struct EnvConfig {
    /// Preset id (1..=5) or `None` for a custom configuration.
    pub env_id: Option<u8>,
    pub horizon: usize,
    pub typologies: Vec<Typology>,
    pub constraint: Option<ConstraintSpec>,
    /// Revenue discretization step used by solvers and tabular learners.
    pub revenue_bin_width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub t: usize,
    pub inventories: Vec<u32>,
    pub cumulative_revenue: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Action {
    pub price_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub demands: Vec<u32>,
    pub sales: Vec<u32>,
    pub revenue: f64,
    pub penalty: f64,
    pub reward: f64,
    pub next_state: EnvState,
    /// `sales == period-start inventory` per typology.
    pub sold_out: Vec<bool>,
}

impl EnvConfig {
    pub fn new(
        horizon: usize,
        typologies: Vec<Typology>,
        constraint: Option<ConstraintSpec>,
        revenue_bin_width: f64,
    ) -> Result<Self, EnvError> {
        let config = Self { env_id: None, horizon, typologies, constraint, revenue_bin_width };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let invalid = |msg: String| Err(EnvError::InvalidConfig(msg));
        if self.horizon == 0 {
            return invalid("horizon must be positive".into());
        }
        if self.typologies.is_empty() {
            return invalid("at least one typology is required".into());
        }
        for (i, ty) in self.typologies.iter().enumerate() {
            ty.demand.validate()?;
            if ty.grid.is_empty() {
                return invalid(format!("typology {i}: empty price grid"));
            }
            if ty.grid.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return invalid(format!("typology {i}: prices must be finite and non-negative"));
            }
            if ty.grid.windows(2).any(|w| w[0] >= w[1]) {
                return invalid(format!("typology {i}: price grid must be strictly ascending"));
            }
            if ty.initial_inventory == 0 {
                return invalid(format!("typology {i}: initial inventory must be at least 1"));
            }
        }
        if let Some(c) = &self.constraint {
            // mu = 0 is accepted so the penalty can be switched off in place
            if !(c.target > 0.0) || !(c.mu >= 0.0) || !c.mu.is_finite() {
                return invalid(format!("constraint needs target > 0 and mu >= 0, got {c:?}"));
            }
            if c.tau == 0 || c.tau > self.horizon {
                return invalid(format!("constraint tau {} outside 1..={}", c.tau, self.horizon));
            }
        }
        if self.constraint.is_some() && !(self.revenue_bin_width > 0.0) {
            return invalid("revenue_bin_width must be positive".into());
        }
        Ok(())
    }

    /// Number of joint actions (product of grid sizes).
    pub fn action_count(&self) -> usize {
        self.typologies.iter().map(|t| t.grid.len()).product()
    }

    pub fn initial_inventories(&self) -> Vec<u32> {
        self.typologies.iter().map(|t| t.initial_inventory).collect()
    }

    /// Upper bound on cumulative revenue: every unit sold at its highest price.
    pub fn max_revenue(&self) -> f64 {
        self.typologies
            .iter()
            .map(|t| f64::from(t.initial_inventory) * t.grid[t.grid.len() - 1])
            .sum()
    }

    /// Row-major index of `action`; typology 0 varies slowest.
    pub fn flatten_action(&self, action: &Action) -> Result<usize, EnvError> {
        if action.price_indices.len() != self.typologies.len() {
            return Err(EnvError::ActionArity {
                expected: self.typologies.len(),
                got: action.price_indices.len(),
            });
        }
        let mut joint = 0;
        for (typology, (&index, ty)) in action.price_indices.iter().zip(&self.typologies).enumerate() {
            if index >= ty.grid.len() {
                return Err(EnvError::PriceIndex { typology, index, size: ty.grid.len() });
            }
            joint = joint * ty.grid.len() + index;
        }
        Ok(joint)
    }

    pub fn unflatten_action(&self, joint: usize) -> Result<Action, EnvError> {
        let count = self.action_count();
        if joint >= count {
            return Err(EnvError::JointIndex { index: joint, count });
        }
        let mut price_indices = vec![0; self.typologies.len()];
        let mut rest = joint;
        for (slot, ty) in price_indices.iter_mut().zip(&self.typologies).rev() {
            *slot = rest % ty.grid.len();
            rest /= ty.grid.len();
        }
        Ok(Action { price_indices })
    }

    /// Prices selected by `action`.
    pub fn prices(&self, action: &Action) -> Vec<f64> {
        action.price_indices.iter().zip(&self.typologies).map(|(&i, ty)| ty.grid[i]).collect()
    }

    pub fn reset(&self) -> EnvState {
        reset(self)
    }
}

pub fn reset(config: &EnvConfig) -> EnvState {
    EnvState { t: 0, inventories: config.initial_inventories(), cumulative_revenue: 0.0 }
}

/// Advances `state` by one period under `action`.
///
/// Demand is drawn for each typology in order from `rng`. When the completed
/// step is the constraint epoch, the shortfall penalty is computed from the
/// cumulative revenue including this step and charged to this step's reward;
/// it never reduces the cumulative revenue itself.
pub fn step<R: Rng + ?Sized>(
    config: &EnvConfig,
    state: &EnvState,
    action: &Action,
    rng: &mut R,
) -> Result<StepOutcome, EnvError> {
    if state.t >= config.horizon {
        return Err(EnvError::Terminal(state.t));
    }
    if state.inventories.len() != config.typologies.len() {
        return Err(EnvError::StateMismatch(format!(
            "{} inventories for {} typologies",
            state.inventories.len(),
            config.typologies.len()
        )));
    }
    config.flatten_action(action)?;

    let k = config.typologies.len();
    let mut demands = Vec::with_capacity(k);
    let mut sales = Vec::with_capacity(k);
    let mut sold_out = Vec::with_capacity(k);
    let mut inventories = Vec::with_capacity(k);
    let mut revenue = 0.0;
    for ((ty, &price_index), &stock) in
        config.typologies.iter().zip(&action.price_indices).zip(&state.inventories)
    {
        let price = ty.grid[price_index];
        let demand = sample_demand(&ty.demand, price, state.t, rng);
        let sold = demand.min(stock);
        revenue += price * f64::from(sold);
        demands.push(demand);
        sales.push(sold);
        sold_out.push(sold == stock);
        inventories.push(stock - sold);
    }

    let next_t = state.t + 1;
    let cumulative_revenue = state.cumulative_revenue + revenue;
    let penalty = match &config.constraint {
        Some(c) if c.tau == next_t => c.penalty(cumulative_revenue),
        _ => 0.0,
    };
    Ok(StepOutcome {
        demands,
        sales,
        revenue,
        penalty,
        reward: revenue - penalty,
        next_state: EnvState { t: next_t, inventories, cumulative_revenue },
        sold_out,
    })
}

fn env1_grid() -> Vec<f64> {
    (5..=20).map(|k| f64::from(k) / 10.0).collect()
}

/// `n` equally spaced points on `[lo, hi]`, endpoints included.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least two points");
    let step = (hi - lo) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    grid[n - 1] = hi;
    grid
}

/// Nonlinear demand curves of environment 5.
pub fn env5_curves() -> ExpNonlinear {
    ExpNonlinear {
        time_level: 1.05,
        time_c2: 0.01,
        time_c1: -0.032,
        time_c0: 0.16,
        price_scale: 4.7,
        price_slope: 0.2,
        price_shift: 2.0,
        price_offset: -1.0,
    }
}

/// Preset environments 1..=5.
pub fn make_env(env_id: u8) -> Result<EnvConfig, EnvError> {
    const T: usize = 10;
    let linear = |alpha, beta| DemandSpec::linear(alpha, beta, T).expect("preset demand is valid");
    let env1_typology = |inventory| Typology {
        demand: linear(2.0, 1.0),
        grid: env1_grid(),
        initial_inventory: inventory,
    };
    let paired_constraint = ConstraintSpec { target: 12.0, mu: 4.0, tau: 7 };

    let (typologies, constraint, width) = match env_id {
        1 => (vec![env1_typology(10)], None, 0.5),
        2 => (vec![env1_typology(6), env1_typology(6)], Some(paired_constraint), 0.5),
        3 => (
            vec![
                Typology {
                    demand: linear(2.5, 1.5),
                    grid: uniform_grid(0.5, 1.6, 16),
                    initial_inventory: 6,
                },
                Typology {
                    demand: linear(3.0, 0.8),
                    grid: uniform_grid(1.0, 3.0, 16),
                    initial_inventory: 6,
                },
            ],
            Some(paired_constraint),
            0.5,
        ),
        4 => (
            vec![env1_typology(10)],
            Some(ConstraintSpec { target: 5.5, mu: 1.0, tau: 5 }),
            0.1,
        ),
        5 => (
            vec![Typology {
                demand: DemandSpec::exp_nonlinear(env5_curves(), T).expect("preset demand is valid"),
                grid: env1_grid(),
                initial_inventory: 10,
            }],
            None,
            0.5,
        ),
        other => return Err(EnvError::UnknownEnv(other)),
    };
    let mut config = EnvConfig::new(T, typologies, constraint, width)?;
    config.env_id = Some(env_id);
    Ok(config)
}

/// On-disk layout of [`EnvConfig`].
#[derive(Clone, Debug, Serialize, Deserialize)]
struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    env_id: Option<u8>,
    horizon: usize,
    typologies: Vec<TypologyFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constraint: Option<ConstraintSpec>,
    revenue_bin_width: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TypologyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exp_nonlinear: Option<ExpNonlinear>,
    grid: Vec<f64>,
    inventory: u32,
}

impl TryFrom<ConfigFile> for EnvConfig {
    type Error = EnvError;

    fn try_from(file: ConfigFile) -> Result<Self, Self::Error> {
        let horizon = file.horizon;
        let typologies = file
            .typologies
            .into_iter()
            .enumerate()
            .map(|(i, ty)| {
                let demand = match (ty.alpha, ty.beta, ty.exp_nonlinear) {
                    (Some(alpha), Some(beta), None) => DemandSpec::linear(alpha, beta, horizon)?,
                    (None, None, Some(curves)) => DemandSpec::exp_nonlinear(curves, horizon)?,
                    _ => {
                        return Err(EnvError::InvalidConfig(format!(
                            "typology {i}: give either alpha and beta, or exp_nonlinear"
                        )))
                    }
                };
                Ok(Typology { demand, grid: ty.grid, initial_inventory: ty.inventory })
            })
            .collect::<Result<Vec<_>, EnvError>>()?;
        let mut config =
            EnvConfig::new(horizon, typologies, file.constraint, file.revenue_bin_width)?;
        config.env_id = file.env_id;
        Ok(config)
    }
}

impl From<EnvConfig> for ConfigFile {
    fn from(config: EnvConfig) -> Self {
        let typologies = config
            .typologies
            .into_iter()
            .map(|ty| {
                let (alpha, beta, exp_nonlinear) = match ty.demand.model {
                    DemandModel::LinearTruncated { alpha, beta } => (Some(alpha), Some(beta), None),
                    DemandModel::ExpNonlinear(c) => (None, None, Some(c)),
                };
                TypologyFile { alpha, beta, exp_nonlinear, grid: ty.grid, inventory: ty.initial_inventory }
            })
            .collect();
        ConfigFile {
            env_id: config.env_id,
            horizon: config.horizon,
            typologies,
            constraint: config.constraint,
            revenue_bin_width: config.revenue_bin_width,
        }
    }
}
