use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GrpoError;
use crate::geometry::{Point, Resolution};

/// Categorical policy over a `G x G` grid of screen cells with a linear
/// logit head. Weights are stored row-major as `feature_dim x G²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPolicy {
    grid_size: usize,
    feature_dim: usize,
    weights: Vec<f64>,
}

impl GridPolicy {
    pub fn zeros(grid_size: usize, feature_dim: usize) -> Self {
        assert!(grid_size >= 1 && feature_dim >= 1, "grid and feature sizes must be positive");
        Self { grid_size, feature_dim, weights: vec![0.0; feature_dim * grid_size * grid_size] }
    }

    /// Weights drawn uniformly from `[-scale, scale]`.
    pub fn random(grid_size: usize, feature_dim: usize, scale: f64, seed: u64) -> Self {
        let mut policy = Self::zeros(grid_size, feature_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut policy.weights {
            *w = rng.gen_range(-scale..=scale);
        }
        policy
    }

    pub fn from_weights(grid_size: usize, feature_dim: usize, weights: Vec<f64>) -> Result<Self, GrpoError> {
        let expected = feature_dim * grid_size * grid_size;
        if grid_size == 0 || feature_dim == 0 || weights.len() != expected {
            return Err(GrpoError::Shape { what: "weights", expected, got: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(GrpoError::NonFinite("weights"));
        }
        Ok(Self { grid_size, feature_dim, weights })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }
    pub fn num_cells(&self) -> usize {
        self.grid_size * self.grid_size
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn check_features(&self, features: &[f64]) -> Result<(), GrpoError> {
        if features.len() != self.feature_dim {
            return Err(GrpoError::Shape { what: "features", expected: self.feature_dim, got: features.len() });
        }
        Ok(())
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>, GrpoError> {
        self.check_features(features)?;
        let cells = self.num_cells();
        let mut z = vec![0.0; cells];
        for (f, &x) in features.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let row = &self.weights[f * cells..(f + 1) * cells];
            for (zk, w) in z.iter_mut().zip(row) {
                *zk += x * w;
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(GrpoError::NonFinite("logits"));
        }
        Ok(z)
    }

    /// `log softmax(logits / temperature)`.
    pub fn log_probs(&self, features: &[f64], temperature: f64) -> Result<Vec<f64>, GrpoError> {
        let z = self.logits(features)?;
        Ok(log_softmax(&z, temperature))
    }

    /// Argmax cell; ties go to the lowest index.
    pub fn greedy_cell(&self, features: &[f64]) -> Result<usize, GrpoError> {
        let z = self.logits(features)?;
        let mut best = 0;
        for (k, v) in z.iter().enumerate() {
            if *v > z[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// Centre of `cell` (row-major, row = y) in pixel space of `res`.
    pub fn cell_center(&self, cell: usize, res: Resolution) -> Point {
        let g = self.grid_size as f64;
        let (col, row) = ((cell % self.grid_size) as f64, (cell / self.grid_size) as f64);
        Point { x: (col + 0.5) * f64::from(res.width) / g, y: (row + 0.5) * f64::from(res.height) / g }
    }
}

pub(crate) fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scaled.into_iter().map(|s| s - lse).collect()
}

/// One sampled response: a grid cell, its pixel point, and the log-prob
/// under the parameters that produced it (the "old" policy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub cell: usize,
    pub point: Point,
    pub old_logp: f64,
}

/// Draws `n` independent cells from the tempered policy.
pub fn sample_responses(
    policy: &GridPolicy,
    features: &[f64],
    res: Resolution,
    n: usize,
    temperature: f64,
    seed: u64,
) -> Result<Vec<Sample>, GrpoError> {
    if n < 2 {
        return Err(GrpoError::Contract(format!("need at least 2 rollouts, got {n}")));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(GrpoError::Contract(format!("temperature must be positive, got {temperature}")));
    }
    let logp = policy.log_probs(features, temperature)?;
    let dist = WeightedIndex::new(logp.iter().map(|l| l.exp())).map_err(|_| GrpoError::NonFinite("probabilities"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let cell = dist.sample(&mut rng);
            Sample { cell, point: policy.cell_center(cell, res), old_logp: logp[cell] }
        })
        .collect())
}
