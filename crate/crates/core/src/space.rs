//! Discretized state space shared by the DP solver and the tabular learners.
//!
//! A state at epoch `t` is an inventory vector plus, for constrained
//! configurations with `t <= tau`, a cumulative-revenue bin. Inventory
//! vectors are indexed row-major with typology 0 varying slowest; the
//! revenue bin is the fastest-varying coordinate.

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvState};

/// Absorbs representation error in `r / width` so exact ties round up.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevenueGrid {
    pub width: f64,
    pub max_revenue: f64,
    /// `ceil(max_revenue / width) + 1`
    pub bins: usize,
    pub tau: usize,
}

impl RevenueGrid {
    pub fn bin(&self, revenue: f64) -> usize {
        revenue_to_bin(revenue, self.width, self.max_revenue)
    }

    pub fn value(&self, bin: usize) -> f64 {
        bin as f64 * self.width
    }

    /// Bin shift for a revenue increment: `bin(b * width + r) == shift(r) + b`
    /// before clamping, since rounding commutes with integer offsets.
    pub fn shift(&self, revenue: f64) -> usize {
        round_half_up(revenue / self.width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub horizon: usize,
    /// `N_i0 + 1` levels per typology.
    pub inventory_levels: Vec<usize>,
    pub revenue: Option<RevenueGrid>,
    pub action_count: usize,
}

fn round_half_up(x: f64) -> usize {
    let r = (x + 0.5 + ROUNDING_SLACK).floor();
    if r <= 0.0 {
        0
    } else {
        r as usize
    }
}

/// Nearest revenue bin for `revenue`, ties rounded up, clamped to the grid.
pub fn revenue_to_bin(revenue: f64, width: f64, max_revenue: f64) -> usize {
    let top = bin_count(width, max_revenue) - 1;
    round_half_up(revenue.max(0.0) / width).min(top)
}

fn bin_count(width: f64, max_revenue: f64) -> usize {
    (max_revenue / width - ROUNDING_SLACK).ceil().max(0.0) as usize + 1
}

impl StateSpace {
    pub fn enumerate(config: &EnvConfig) -> Self {
        enumerate_states(config)
    }

    pub fn inventory_count(&self) -> usize {
        self.inventory_levels.iter().product()
    }

    /// Revenue bins tracked at epoch `t` (1 when the dimension is collapsed).
    pub fn bins_at(&self, t: usize) -> usize {
        match &self.revenue {
            Some(grid) if t <= grid.tau => grid.bins,
            _ => 1,
        }
    }

    pub fn state_count(&self, t: usize) -> usize {
        self.inventory_count() * self.bins_at(t)
    }

    pub fn inventory_index(&self, inventories: &[u32]) -> usize {
        inventories
            .iter()
            .zip(&self.inventory_levels)
            .fold(0, |acc, (&n, &levels)| acc * levels + n as usize)
    }

    pub fn decode_inventory(&self, mut index: usize) -> Vec<u32> {
        let mut out = vec![0u32; self.inventory_levels.len()];
        for (slot, &levels) in out.iter_mut().zip(&self.inventory_levels).rev() {
            *slot = (index % levels) as u32;
            index /= levels;
        }
        out
    }

    /// Stride of typology `i` in the inventory index.
    pub fn inventory_stride(&self, i: usize) -> usize {
        self.inventory_levels[i + 1..].iter().product()
    }

    pub fn index(&self, t: usize, inventory_index: usize, bin: usize) -> usize {
        inventory_index * self.bins_at(t) + bin
    }

    /// Table index of an exact simulator state.
    pub fn index_of(&self, state: &EnvState) -> usize {
        let bin = match &self.revenue {
            Some(grid) if state.t <= grid.tau => grid.bin(state.cumulative_revenue),
            _ => 0,
        };
        self.index(state.t, self.inventory_index(&state.inventories), bin)
    }

    /// `(inventories, revenue bin)` of table index `index` at epoch `t`.
    pub fn decode(&self, t: usize, index: usize) -> (Vec<u32>, usize) {
        let bins = self.bins_at(t);
        (self.decode_inventory(index / bins), index % bins)
    }
}

/// State layout for `config`: inventories `0..=N_i0` per typology and, when
/// a constraint is present, revenue bins up to `sum_i N_i0 * max(grid_i)`.
pub fn enumerate_states(config: &EnvConfig) -> StateSpace {
    let revenue = config.constraint.as_ref().map(|c| {
        let max_revenue = config.max_revenue();
        RevenueGrid {
            width: config.revenue_bin_width,
            max_revenue,
            bins: bin_count(config.revenue_bin_width, max_revenue),
            tau: c.tau,
        }
    });
    StateSpace {
        horizon: config.horizon,
        inventory_levels: config.typologies.iter().map(|t| t.initial_inventory as usize + 1).collect(),
        revenue,
        action_count: config.action_count(),
    }
}
