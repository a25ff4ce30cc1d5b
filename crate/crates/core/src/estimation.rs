//! Random-episode data collection and least-squares demand estimation.
//!
//! The fitted model is linear in the features
//! `{1, p, t/T, p t/T}` (optionally extended with `p^2` and `(t/T)^2`) and
//! is fit with realized sales as the target. Periods that ended sold out are
//! censored: the demand may have exceeded what was sold, so they are
//! dropped before fitting.

use std::io;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{reset, step, EnvConfig, EnvError};

/// One (typology, period) record from a data-collection episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SalesObservation {
    pub episode: usize,
    pub typology: usize,
    pub t: usize,
    pub price: f64,
    pub sales: u32,
    /// Sales equaled the period-start inventory.
    pub censored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// `1, p, t/T, p t/T`
    Base,
    /// `Base` plus `p^2, (t/T)^2`
    Augmented,
}

impl FeatureSet {
    pub fn len(self) -> usize {
        match self {
            FeatureSet::Base => 4,
            FeatureSet::Augmented => 6,
        }
    }

    /// Feature vector at `(price, t)` for horizon `horizon`.
    pub fn features(self, price: f64, t: usize, horizon: usize) -> Vec<f64> {
        let s = t as f64 / horizon as f64;
        let mut x = vec![1.0, price, s, price * s];
        if self == FeatureSet::Augmented {
            x.push(price * price);
            x.push(s * s);
        }
        x
    }

    /// Feature set matched to the demand family of `config`.
    pub fn for_config(config: &EnvConfig) -> Self {
        if config.typologies.iter().any(|t| t.demand.is_nonlinear()) {
            FeatureSet::Augmented
        } else {
            FeatureSet::Base
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub feature_set: FeatureSet,
    pub coefficients: Vec<f64>,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimationError {
    #[error("design matrix is rank deficient (rank {rank} of {features})")]
    RankDeficient { rank: usize, features: usize },
    #[error("need at least {needed} uncensored observations, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("horizon must be positive")]
    ZeroHorizon,
}

/// Relative singular-value cutoff on the unit-diagonal normal matrix.
const RANK_TOLERANCE: f64 = 1e-10;

impl RegressionModel {
    /// Linear predictor without clipping.
    pub fn linear_predictor(&self, price: f64, t: usize) -> f64 {
        self.feature_set
            .features(price, t, self.horizon)
            .iter()
            .zip(&self.coefficients)
            .map(|(x, b)| x * b)
            .sum()
    }

    /// Estimated Poisson rate, clipped at zero.
    pub fn predict_rate(&self, price: f64, t: usize) -> f64 {
        self.linear_predictor(price, t).max(0.0)
    }
}

/// Plays `n_episodes` episodes with uniformly random joint actions and
/// records one observation per typology and period that started with stock.
pub fn collect_random_episodes<R: Rng + ?Sized>(
    config: &EnvConfig,
    n_episodes: usize,
    rng: &mut R,
) -> Result<Vec<SalesObservation>, EnvError> {
    let actions = config.action_count();
    let mut data = Vec::with_capacity(n_episodes * config.horizon * config.typologies.len());
    for episode in 0..n_episodes {
        let mut state = reset(config);
        while state.t < config.horizon {
            let action = config.unflatten_action(rng.random_range(0..actions))?;
            let outcome = step(config, &state, &action, rng)?;
            for (typology, ty) in config.typologies.iter().enumerate() {
                if state.inventories[typology] == 0 {
                    continue;
                }
                data.push(SalesObservation {
                    episode,
                    typology,
                    t: state.t,
                    price: ty.grid[action.price_indices[typology]],
                    sales: outcome.sales[typology],
                    censored: outcome.sold_out[typology],
                });
            }
            state = outcome.next_state;
        }
    }
    Ok(data)
}

/// Least-squares fit of realized sales on `feature_set`, censored rows excluded.
pub fn fit_ols(
    observations: &[SalesObservation],
    feature_set: FeatureSet,
    horizon: usize,
) -> Result<RegressionModel, EstimationError> {
    if horizon == 0 {
        return Err(EstimationError::ZeroHorizon);
    }
    let rows = observations
        .iter()
        .filter(|o| !o.censored)
        .map(|o| (feature_set.features(o.price, o.t, horizon), f64::from(o.sales)));
    let coefficients = least_squares(feature_set.len(), rows)?;
    Ok(RegressionModel { feature_set, coefficients, horizon })
}

/// Ordinary least squares over `(features, target)` rows of width `k`.
///
/// The normal equations are Jacobi-scaled to unit diagonal and solved with an
/// SVD; a singular value below `RANK_TOLERANCE` relative to the largest is
/// reported as rank deficiency instead of being regularized away.
pub fn least_squares<I>(k: usize, rows: I) -> Result<Vec<f64>, EstimationError>
where
    I: IntoIterator<Item = (Vec<f64>, f64)>,
{
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut moment = DVector::<f64>::zeros(k);
    let mut used = 0usize;
    for (x, y) in rows {
        debug_assert_eq!(x.len(), k);
        for i in 0..k {
            moment[i] += x[i] * y;
            for j in i..k {
                gram[(i, j)] += x[i] * x[j];
            }
        }
        used += 1;
    }
    if used < k {
        return Err(EstimationError::InsufficientData { needed: k, available: used });
    }
    for i in 0..k {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }

    let scale: Vec<f64> = (0..k).map(|i| gram[(i, i)].sqrt()).collect();
    if scale.contains(&0.0) {
        return Err(EstimationError::RankDeficient {
            rank: scale.iter().filter(|&&s| s > 0.0).count(),
            features: k,
        });
    }
    let scaled = DMatrix::from_fn(k, k, |i, j| gram[(i, j)] / (scale[i] * scale[j]));
    let rhs = DVector::from_fn(k, |i, _| moment[i] / scale[i]);
    let svd = scaled.svd(true, true);
    let largest = svd.singular_values.max();
    let rank = svd.rank(largest * RANK_TOLERANCE);
    if rank < k {
        return Err(EstimationError::RankDeficient { rank, features: k });
    }
    let z = svd
        .solve(&rhs, 0.0)
        .map_err(|_| EstimationError::RankDeficient { rank, features: k })?;
    Ok((0..k).map(|i| z[i] / scale[i]).collect())
}

/// One model per typology, each fit only on that typology's observations.
pub fn fit_per_typology(
    config: &EnvConfig,
    observations: &[SalesObservation],
    feature_set: FeatureSet,
) -> Result<Vec<RegressionModel>, EstimationError> {
    (0..config.typologies.len())
        .map(|i| {
            let own: Vec<SalesObservation> =
                observations.iter().filter(|o| o.typology == i).cloned().collect();
            fit_ols(&own, feature_set, config.horizon)
        })
        .collect()
}

/// Writes observations as CSV: `episode,typology,t,price,sales,censored`.
pub fn write_observations_csv<W: io::Write>(
    observations: &[SalesObservation],
    out: W,
) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    for obs in observations {
        writer.serialize(obs)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_observations_csv(path: &Path) -> Result<Vec<SalesObservation>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}
