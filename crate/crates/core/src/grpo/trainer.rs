use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{batch_loss_and_grad, click_reward, normalize_advantages, Group};
use super::policy::{sample_responses, GridPolicy, Sample};
use super::GrpoError;
use crate::geometry::{rescale_box, smart_resize, BoundingBox, Resolution};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Sgd,
    #[serde(rename = "adamw")]
    AdamW { beta1: f64, beta2: f64, eps: f64, weight_decay: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Cells per axis of the output grid.
    pub grid_size: usize,
    /// Rollouts per input (N).
    pub rollouts: usize,
    /// Clip parameter.
    pub epsilon: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Gradient steps per rollout batch. Above 1 the policy drifts from
    /// the sampling policy and clipping becomes active.
    pub inner_epochs: usize,
    pub optimizer: Optimizer,
    /// Screens are snapped to this multiple before rollouts; boxes follow.
    pub resize_multiple: Option<u32>,
    pub max_grad_norm: Option<f64>,
    /// Half-width of the uniform weight initialisation. Zero starts uniform.
    pub init_scale: f64,
    /// Stop once greedy accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
    /// Stop once the trailing `reward_window` average of mean reward
    /// reaches this value.
    pub stop_at_reward: Option<f64>,
    pub reward_window: usize,
    /// How often (in iterations) to measure greedy accuracy.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            grid_size: 4,
            rollouts: 8,
            epsilon: 0.2,
            learning_rate: 16.0,
            iterations: 2000,
            batch_size: 64,
            temperature: 1.0,
            seed: 0,
            inner_epochs: 1,
            optimizer: Optimizer::Sgd,
            resize_multiple: Some(28),
            max_grad_norm: None,
            init_scale: 0.0,
            stop_at_accuracy: None,
            stop_at_reward: None,
            reward_window: 10,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: String| Err(GrpoError::Contract(m));
        if self.rollouts < 2 {
            return bad(format!("rollouts must be >= 2, got {}", self.rollouts));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.grid_size == 0
            || self.batch_size == 0
            || self.inner_epochs == 0
            || self.eval_every == 0
            || self.reward_window == 0
        {
            return bad("grid_size, batch_size, inner_epochs, eval_every and reward_window must be positive".into());
        }
        if self.resize_multiple == Some(0) {
            return bad("resize_multiple must be positive".into());
        }
        Ok(())
    }
}

/// One training input: features, target box, and the native screen size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub features: Vec<f64>,
    pub bbox: BoundingBox,
    pub resolution: Resolution,
}

pub fn load_training_fixture(path: &Path) -> Result<Vec<TrainExample>, GrpoError> {
    let file = fs::File::open(path).map_err(|e| GrpoError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GrpoError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: TrainExample = serde_json::from_str(&line)
            .map_err(|e| GrpoError::Fixture(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if !ex.bbox.within(ex.resolution) {
            return Err(GrpoError::Fixture(format!("{}:{}: bbox exceeds resolution", path.display(), i + 1)));
        }
        out.push(ex);
    }
    Ok(out)
}

/// Screen and target as the policy sees them after the resize rule.
fn training_view(ex: &TrainExample, resize: Option<u32>) -> (Resolution, BoundingBox) {
    match resize {
        Some(m) => {
            let r = smart_resize(ex.resolution, m);
            let b = rescale_box(&ex.bbox, r.scale_x, r.scale_y).expect("resize scales are positive");
            (r.resolution, b)
        }
        None => (ex.resolution, ex.bbox),
    }
}

/// Rejects fixtures where some target contains no cell centre, since
/// those inputs can never earn reward.
pub fn validate_fixture(dataset: &[TrainExample], grid_size: usize, resize: Option<u32>) -> Result<(), GrpoError> {
    if dataset.is_empty() {
        return Err(GrpoError::Fixture("training set is empty".into()));
    }
    let dim = dataset[0].features.len();
    let probe = GridPolicy::zeros(grid_size, dim.max(1));
    for (i, ex) in dataset.iter().enumerate() {
        if ex.features.len() != dim {
            return Err(GrpoError::Fixture(format!("example {i} has {} features, expected {dim}", ex.features.len())));
        }
        let (res, target) = training_view(ex, resize);
        let reachable = (0..probe.num_cells()).any(|c| click_reward(probe.cell_center(c, res), &target) > 0.0);
        if !reachable {
            return Err(GrpoError::Fixture(format!(
                "example {i}: no cell centre of the {grid_size}x{grid_size} grid lies in its target"
            )));
        }
    }
    Ok(())
}

/// Fraction of examples whose argmax cell centre lands in the target.
pub fn greedy_accuracy(policy: &GridPolicy, dataset: &[TrainExample], resize: Option<u32>) -> Result<f64, GrpoError> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for ex in dataset {
        let (res, target) = training_view(ex, resize);
        let cell = policy.greedy_cell(&ex.features)?;
        hits += usize::from(click_reward(policy.cell_center(cell, res), &target) > 0.0);
    }
    Ok(hits as f64 / dataset.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub mean_reward: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: GridPolicy,
    pub metrics: Vec<IterationMetrics>,
    pub final_accuracy: f64,
    /// Iteration at which a stop rule was met, if one was.
    pub stopped_at: Option<usize>,
}

/// Rollouts for one input.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub example: usize,
    pub samples: Vec<Sample>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl Rollout {
    fn cells(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.cell).collect()
    }
    fn old_logps(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.old_logp).collect()
    }
}

/// Samples, scores, and normalises one rollout group.
pub fn rollout(
    policy: &GridPolicy,
    dataset: &[TrainExample],
    example: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Rollout, GrpoError> {
    let ex = &dataset[example];
    let (res, target) = training_view(ex, cfg.resize_multiple);
    let samples = sample_responses(policy, &ex.features, res, cfg.rollouts, cfg.temperature, seed)?;
    let rewards: Vec<f64> = samples.iter().map(|s| click_reward(s.point, &target)).collect();
    let advantages = normalize_advantages(&rewards)?;
    Ok(Rollout { example, samples, rewards, advantages })
}

/// Mean loss and gradient over rollout groups, evaluated at `policy`.
pub fn rollout_loss_and_grad(
    policy: &GridPolicy,
    dataset: &[TrainExample],
    rollouts: &[Rollout],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>), GrpoError> {
    let cells: Vec<Vec<usize>> = rollouts.iter().map(Rollout::cells).collect();
    let old: Vec<Vec<f64>> = rollouts.iter().map(Rollout::old_logps).collect();
    let groups: Vec<Group<'_>> = rollouts
        .iter()
        .enumerate()
        .map(|(i, r)| Group {
            features: &dataset[r.example].features,
            cells: &cells[i],
            old_logps: &old[i],
            advantages: &r.advantages,
        })
        .collect();
    batch_loss_and_grad(policy, &groups, cfg.epsilon, cfg.temperature)
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn apply_update(policy: &mut GridPolicy, grad: &mut [f64], cfg: &TrainConfig, adam: &mut Option<AdamState>) {
    if let Some(max) = cfg.max_grad_norm {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > max {
            grad.iter_mut().for_each(|g| *g *= max / norm);
        }
    }
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (w, g) in policy.weights_mut().iter_mut().zip(grad.iter()) {
                *w -= lr * g;
            }
        }
        Optimizer::AdamW { beta1, beta2, eps, weight_decay } => {
            let state =
                adam.get_or_insert_with(|| AdamState { m: vec![0.0; grad.len()], v: vec![0.0; grad.len()], t: 0 });
            state.t += 1;
            let (c1, c2) = (1.0 - beta1.powi(state.t), 1.0 - beta2.powi(state.t));
            for (i, w) in policy.weights_mut().iter_mut().enumerate() {
                let g = grad[i];
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
                let step = (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + eps);
                *w -= lr * (step + weight_decay * *w);
            }
        }
    }
}

/// GRPO loop: rollout, click reward, group Z-score, clipped-surrogate
/// gradient step. Deterministic for a fixed `cfg.seed`.
pub fn train(cfg: &TrainConfig, dataset: &[TrainExample]) -> Result<TrainOutcome, GrpoError> {
    train_from(cfg, dataset, None)
}

pub fn train_from(
    cfg: &TrainConfig,
    dataset: &[TrainExample],
    initial: Option<GridPolicy>,
) -> Result<TrainOutcome, GrpoError> {
    cfg.validate()?;
    validate_fixture(dataset, cfg.grid_size, cfg.resize_multiple)?;
    let dim = dataset[0].features.len();
    let mut policy = match initial {
        Some(p) if p.feature_dim() != dim || p.grid_size() != cfg.grid_size => {
            return Err(GrpoError::Contract("initial policy shape does not match config and fixture".into()))
        }
        Some(p) => p,
        None if cfg.init_scale > 0.0 => GridPolicy::random(cfg.grid_size, dim, cfg.init_scale, cfg.seed),
        None => GridPolicy::zeros(cfg.grid_size, dim),
    };
    let mut adam = None;
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut stopped_at = None;

    for iteration in 0..cfg.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[iteration as u64, u64::MAX]));
        let batch: Vec<usize> = if cfg.batch_size <= dataset.len() {
            sample_indices(&mut rng, dataset.len(), cfg.batch_size).into_vec()
        } else {
            (0..cfg.batch_size).map(|i| i % dataset.len()).collect()
        };

        let rollouts = batch
            .par_iter()
            .enumerate()
            .map(|(slot, &ex)| {
                rollout(&policy, dataset, ex, cfg, derive_seed(cfg.seed, &[iteration as u64, slot as u64]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let total: usize = rollouts.iter().map(|r| r.rewards.len()).sum();
        let mean_reward = rollouts.iter().flat_map(|r| &r.rewards).sum::<f64>() / total as f64;

        let mut loss_sum = 0.0;
        for _ in 0..cfg.inner_epochs {
            let (loss, mut grad) = rollout_loss_and_grad(&policy, dataset, &rollouts, cfg)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(GrpoError::Diverged { iteration, loss });
            }
            loss_sum += loss;
            apply_update(&mut policy, &mut grad, cfg, &mut adam);
        }
        metrics.push(IterationMetrics { iteration, mean_reward, loss: loss_sum / cfg.inner_epochs as f64 });

        if let Some(target) = cfg.stop_at_accuracy {
            if (iteration + 1) % cfg.eval_every == 0
                && greedy_accuracy(&policy, dataset, cfg.resize_multiple)? >= target
            {
                stopped_at = Some(iteration);
                break;
            }
        }
        if let Some(target) = cfg.stop_at_reward {
            if moving_average(&metrics, cfg.reward_window).last().is_some_and(|m| *m >= target) {
                stopped_at = Some(iteration);
                break;
            }
        }
    }
    let final_accuracy = greedy_accuracy(&policy, dataset, cfg.resize_multiple)?;
    Ok(TrainOutcome { policy, metrics, final_accuracy, stopped_at })
}

/// Trailing moving average over `window` iterations of mean reward.
pub fn moving_average(metrics: &[IterationMetrics], window: usize) -> Vec<f64> {
    if window == 0 || metrics.len() < window {
        return Vec::new();
    }
    metrics.windows(window).map(|w| w.iter().map(|m| m.mean_reward).sum::<f64>() / window as f64).collect()
}

pub fn metrics_csv(metrics: &[IterationMetrics]) -> String {
    let mut out = String::from("iteration,mean_reward,loss\n");
    for m in metrics {
        out.push_str(&format!("{},{},{}\n", m.iteration, m.mean_reward, m.loss));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub grid_size: usize,
    pub feature_dim: usize,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub iteration: usize,
}

impl Checkpoint {
    pub fn new(policy: &GridPolicy, seed: u64, iteration: usize) -> Self {
        Self {
            grid_size: policy.grid_size(),
            feature_dim: policy.feature_dim(),
            weights: policy.weights().to_vec(),
            seed,
            iteration,
        }
    }

    pub fn policy(&self) -> Result<GridPolicy, GrpoError> {
        GridPolicy::from_weights(self.grid_size, self.feature_dim, self.weights.clone())
    }

    pub fn load(path: &Path) -> Result<Self, GrpoError> {
        let text = fs::read_to_string(path).map_err(|e| GrpoError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GrpoError::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), GrpoError> {
        let body = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, body).map_err(|e| GrpoError::Io(format!("{}: {e}", path.display())))
    }
}
