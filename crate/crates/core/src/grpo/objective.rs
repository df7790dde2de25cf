use super::policy::GridPolicy;
use super::GrpoError;
use crate::geometry::{contains, BoundingBox, Point};

/// Binary click reward: 1 when the point falls inside the box (edges included).
pub fn click_reward(p: Point, target: &BoundingBox) -> f64 {
    if contains(target, p) {
        1.0
    } else {
        0.0
    }
}

/// Group Z-score with the population standard deviation. A group whose
/// rewards are all equal gets zero advantages.
pub fn normalize_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    let n = rewards.len();
    if n < 2 {
        return Err(GrpoError::Contract(format!("advantage normalization needs N >= 2, got {n}")));
    }
    let lo = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(vec![0.0; n]);
    }
    // rescaling to [0, 1] first maps any two-valued group to exactly the
    // same floats, so positive-affine reward changes leave the result bit-identical
    let unit: Vec<f64> = rewards.iter().map(|r| (r - lo) / (hi - lo)).collect();
    let mean = unit.iter().sum::<f64>() / n as f64;
    let var = unit.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    Ok(unit.iter().map(|u| (u - mean) / std).collect())
}

/// `min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv)` and whether the
/// unclipped branch carries the gradient.
pub fn surrogate_term(ratio: f64, adv: f64, epsilon: f64) -> (f64, bool) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * adv;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// One input's rollout group as seen by the objective.
#[derive(Debug, Clone, Copy)]
pub struct Group<'a> {
    pub features: &'a [f64],
    pub cells: &'a [usize],
    pub old_logps: &'a [f64],
    pub advantages: &'a [f64],
}

/// Clipped surrogate loss `-(1/N) Σ min(ρA, clip(ρ)A)` for one group and
/// its gradient with respect to the policy weights. Old log-probs are
/// constants; gradient flows only through the current policy.
pub fn group_loss_and_grad(
    policy: &GridPolicy,
    group: &Group<'_>,
    epsilon: f64,
    temperature: f64,
) -> Result<(f64, Vec<f64>), GrpoError> {
    let n = group.cells.len();
    if group.old_logps.len() != n || group.advantages.len() != n {
        return Err(GrpoError::Contract(format!(
            "length mismatch: {} cells, {} old log-probs, {} advantages",
            n,
            group.old_logps.len(),
            group.advantages.len()
        )));
    }
    if n == 0 {
        return Err(GrpoError::Contract("empty rollout group".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(GrpoError::Contract(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let cells = policy.num_cells();
    let logp = policy.log_probs(group.features, temperature)?;
    let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();

    // d loss / d logits accumulated over the group, then outer product with features
    let mut dz = vec![0.0; cells];
    let mut total = 0.0;
    for i in 0..n {
        let c = group.cells[i];
        if c >= cells {
            return Err(GrpoError::Contract(format!("cell {c} outside grid of {cells}")));
        }
        let ratio = (logp[c] - group.old_logps[i]).exp();
        let (term, live) = surrogate_term(ratio, group.advantages[i], epsilon);
        total += term;
        if live && group.advantages[i] != 0.0 {
            let coef = -ratio * group.advantages[i] / (n as f64 * temperature);
            for (k, d) in dz.iter_mut().enumerate() {
                *d -= coef * probs[k];
            }
            dz[c] += coef;
        }
    }
    let loss = -total / n as f64;

    let mut grad = vec![0.0; policy.weights().len()];
    for (f, &x) in group.features.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (g, d) in grad[f * cells..(f + 1) * cells].iter_mut().zip(&dz) {
            *g = x * d;
        }
    }
    Ok((loss, grad))
}

/// Mean of the per-group losses and gradients, reduced in group order.
pub fn batch_loss_and_grad(
    policy: &GridPolicy,
    groups: &[Group<'_>],
    epsilon: f64,
    temperature: f64,
) -> Result<(f64, Vec<f64>), GrpoError> {
    if groups.is_empty() {
        return Err(GrpoError::Contract("empty batch".into()));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; policy.weights().len()];
    for g in groups {
        let (l, gr) = group_loss_and_grad(policy, g, epsilon, temperature)?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(gr) {
            *a += b;
        }
    }
    let m = groups.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    Ok((loss / m, grad))
}
