//! Demand intensities, Poisson sampling and the inventory-truncated sales
//! distribution.
//!
//! Periods are indexed by decision epoch `t = 0..T-1`; the intensity is
//! evaluated at that index.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-typology demand intensity model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    /// Horizon `T` used by the linear model's `1 + t/T` growth term.
    pub horizon: usize,
    pub model: DemandModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandModel {
    /// `max(0, alpha - beta p) (1 + t/T)`.
    LinearTruncated { alpha: f64, beta: f64 },
    /// `L(t) v(p)` with exponential time and price curves.
    ExpNonlinear(ExpNonlinear),
}

/// `L(t) = level * exp(c2 t^2 + c1 t + c0)` and
/// `v(p) = max(0, scale * exp(slope (shift - p) + offset))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpNonlinear {
    pub time_level: f64,
    pub time_c2: f64,
    pub time_c1: f64,
    pub time_c0: f64,
    pub price_scale: f64,
    pub price_slope: f64,
    pub price_shift: f64,
    pub price_offset: f64,
}

impl ExpNonlinear {
    pub fn time_curve(&self, t: f64) -> f64 {
        self.time_level * (self.time_c2 * t * t + self.time_c1 * t + self.time_c0).exp()
    }

    pub fn price_curve(&self, price: f64) -> f64 {
        (self.price_scale * (self.price_slope * (self.price_shift - price) + self.price_offset).exp())
            .max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DemandError {
    #[error("linear demand needs alpha > 0 and beta > 0, got alpha={alpha}, beta={beta}")]
    InvalidLinear { alpha: f64, beta: f64 },
    #[error("demand horizon must be positive")]
    ZeroHorizon,
    #[error("non-finite demand coefficient")]
    NonFinite,
    #[error("time curve level must be non-negative, got {0}")]
    NegativeLevel(f64),
}

impl DemandSpec {
    pub fn linear(alpha: f64, beta: f64, horizon: usize) -> Result<Self, DemandError> {
        let spec = Self { horizon, model: DemandModel::LinearTruncated { alpha, beta } };
        spec.validate()?;
        Ok(spec)
    }

    pub fn exp_nonlinear(curves: ExpNonlinear, horizon: usize) -> Result<Self, DemandError> {
        let spec = Self { horizon, model: DemandModel::ExpNonlinear(curves) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        if self.horizon == 0 {
            return Err(DemandError::ZeroHorizon);
        }
        match &self.model {
            DemandModel::LinearTruncated { alpha, beta } => {
                if !alpha.is_finite() || !beta.is_finite() {
                    return Err(DemandError::NonFinite);
                }
                if *alpha <= 0.0 || *beta <= 0.0 {
                    return Err(DemandError::InvalidLinear { alpha: *alpha, beta: *beta });
                }
            }
            DemandModel::ExpNonlinear(c) => {
                let coefs = [
                    c.time_level,
                    c.time_c2,
                    c.time_c1,
                    c.time_c0,
                    c.price_scale,
                    c.price_slope,
                    c.price_shift,
                    c.price_offset,
                ];
                if coefs.iter().any(|v| !v.is_finite()) {
                    return Err(DemandError::NonFinite);
                }
                if c.time_level < 0.0 {
                    return Err(DemandError::NegativeLevel(c.time_level));
                }
            }
        }
        Ok(())
    }

    pub fn is_nonlinear(&self) -> bool {
        matches!(self.model, DemandModel::ExpNonlinear(_))
    }

    /// Poisson rate at `price` in epoch `t`.
    pub fn intensity(&self, price: f64, t: usize) -> f64 {
        intensity(self, price, t)
    }
}

/// Poisson rate of demand for `spec` at `price` in epoch `t`. Never negative.
pub fn intensity(spec: &DemandSpec, price: f64, t: usize) -> f64 {
    let t = t as f64;
    match &spec.model {
        DemandModel::LinearTruncated { alpha, beta } => {
            (alpha - beta * price).max(0.0) * (1.0 + t / spec.horizon as f64)
        }
        DemandModel::ExpNonlinear(c) => c.time_curve(t) * c.price_curve(price),
    }
}

/// Draws one period's demand for `spec` at `price` in epoch `t`.
pub fn sample_demand<R: Rng + ?Sized>(spec: &DemandSpec, price: f64, t: usize, rng: &mut R) -> u32 {
    sample_poisson(intensity(spec, price, t), rng)
}

/// Multiplicative (Knuth) Poisson sampler.
///
/// Exact for any rate, but the expected number of uniforms drawn is
/// `rate + 1`, so it is meant for the small rates of the pricing models.
/// A zero rate consumes no randomness.
pub fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u32 {
    if rate <= 0.0 || rate.is_nan() {
        return 0;
    }
    let limit = (-rate).exp();
    let mut count = 0u32;
    let mut product: f64 = rng.random();
    while product > limit {
        count += 1;
        product *= rng.random::<f64>();
    }
    count
}

/// Distribution of `min(Q, inventory)` for `Q ~ Poisson(rate)`.
///
/// Entry `k < inventory` is the Poisson pmf at `k`; the last entry holds the
/// upper tail `P(Q >= inventory)`.
pub fn sales_pmf(rate: f64, inventory: u32) -> Vec<f64> {
    let n = inventory as usize;
    let mut pmf = Vec::with_capacity(n + 1);
    sales_pmf_into(rate, inventory, &mut pmf);
    pmf
}

/// Same as [`sales_pmf`] but reuses `out`.
pub fn sales_pmf_into(rate: f64, inventory: u32, out: &mut Vec<f64>) {
    out.clear();
    let rate = rate.max(0.0);
    let mut mass = (-rate).exp();
    let mut body = 0.0;
    for k in 0..inventory {
        out.push(mass);
        body += mass;
        mass *= rate / f64::from(k + 1);
    }
    // rounding can push the body a hair above one
    out.push((1.0 - body).max(0.0));
}
