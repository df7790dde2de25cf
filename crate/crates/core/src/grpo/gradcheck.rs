//! Central-difference verification of the clipped-surrogate gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{batch_loss_and_grad, normalize_advantages, Group};
use super::policy::{sample_responses, GridPolicy};
use super::GrpoError;
use crate::geometry::Resolution;

/// A frozen rollout batch: everything the loss needs except the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutFixture {
    pub groups: Vec<FixtureGroup>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureGroup {
    pub features: Vec<f64>,
    pub cells: Vec<usize>,
    pub old_logps: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutFixture {
    /// Samples `inputs` groups of `rollouts` responses from `policy` with
    /// random features and coin-flip rewards.
    pub fn sample(
        policy: &GridPolicy,
        inputs: usize,
        rollouts: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Self, GrpoError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = Resolution { width: 100, height: 100 };
        let mut groups = Vec::with_capacity(inputs);
        for _ in 0..inputs {
            let features: Vec<f64> = (0..policy.feature_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let samples = sample_responses(policy, &features, res, rollouts, temperature, rng.gen())?;
            let rewards: Vec<f64> = (0..rollouts).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect();
            groups.push(FixtureGroup {
                features,
                cells: samples.iter().map(|s| s.cell).collect(),
                old_logps: samples.iter().map(|s| s.old_logp).collect(),
                advantages: normalize_advantages(&rewards)?,
            });
        }
        Ok(Self { groups, temperature })
    }

    fn views(&self) -> Vec<Group<'_>> {
        self.groups
            .iter()
            .map(|g| Group {
                features: &g.features,
                cells: &g.cells,
                old_logps: &g.old_logps,
                advantages: &g.advantages,
            })
            .collect()
    }

    pub fn loss_and_grad(&self, policy: &GridPolicy, epsilon: f64) -> Result<(f64, Vec<f64>), GrpoError> {
        batch_loss_and_grad(policy, &self.views(), epsilon, self.temperature)
    }

    /// Importance ratios of every term under `policy`.
    pub fn ratios(&self, policy: &GridPolicy) -> Result<Vec<f64>, GrpoError> {
        let mut out = Vec::new();
        for g in &self.groups {
            let logp = policy.log_probs(&g.features, self.temperature)?;
            out.extend(g.cells.iter().zip(&g.old_logps).map(|(&c, old)| (logp[c] - old).exp()));
        }
        Ok(out)
    }

    /// Smallest distance from any ratio to a clip boundary `1 ± epsilon`.
    pub fn clip_margin(&self, policy: &GridPolicy, epsilon: f64) -> Result<f64, GrpoError> {
        Ok(self
            .ratios(policy)?
            .into_iter()
            .map(|r| (r - (1.0 - epsilon)).abs().min((r - (1.0 + epsilon)).abs()))
            .fold(f64::INFINITY, f64::min))
    }

    /// Count of terms whose clipped branch is the one selected.
    pub fn clipped_terms(&self, policy: &GridPolicy, epsilon: f64) -> Result<usize, GrpoError> {
        let ratios = self.ratios(policy)?;
        let advs = self.groups.iter().flat_map(|g| g.advantages.iter());
        Ok(ratios.iter().zip(advs).filter(|(r, a)| !super::objective::surrogate_term(**r, **a, epsilon).1).count())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub clipped_terms: usize,
    pub clip_margin: f64,
}

/// Compares the analytic gradient against central differences, reporting
/// `max |g_analytic - g_numeric| / max(1, |g_analytic|)` over all weights.
///
/// Errors if any ratio sits within `10 h` of a clip boundary, where the
/// loss is not differentiable at the finite-difference scale.
pub fn finite_diff_check(
    policy: &GridPolicy,
    fixture: &RolloutFixture,
    epsilon: f64,
    h: f64,
) -> Result<GradCheckReport, GrpoError> {
    if !(h > 0.0) {
        return Err(GrpoError::Contract(format!("step h must be positive, got {h}")));
    }
    let clip_margin = fixture.clip_margin(policy, epsilon)?;
    if clip_margin <= 10.0 * h {
        return Err(GrpoError::Contract(format!(
            "fixture ratio within {clip_margin:e} of a clip boundary; need > {:e}",
            10.0 * h
        )));
    }
    let (_, analytic) = fixture.loss_and_grad(policy, epsilon)?;
    let mut probe = policy.clone();
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.iter().enumerate() {
        let w = policy.weights()[i];
        probe.weights_mut()[i] = w + h;
        let (up, _) = fixture.loss_and_grad(&probe, epsilon)?;
        probe.weights_mut()[i] = w - h;
        let (down, _) = fixture.loss_and_grad(&probe, epsilon)?;
        probe.weights_mut()[i] = w;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((g - numeric).abs() / g.abs().max(1.0));
    }
    Ok(GradCheckReport { max_rel_error: worst, clipped_terms: fixture.clipped_terms(policy, epsilon)?, clip_margin })
}

/// Moves `policy` away from the fixture's sampling policy with `epochs`
/// gradient steps, so that later checks exercise clipped terms.
pub fn drift(
    policy: &mut GridPolicy,
    fixture: &RolloutFixture,
    epsilon: f64,
    lr: f64,
    epochs: usize,
) -> Result<(), GrpoError> {
    for _ in 0..epochs {
        let (_, grad) = fixture.loss_and_grad(policy, epsilon)?;
        for (w, g) in policy.weights_mut().iter_mut().zip(grad) {
            *w -= lr * g;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_fixture_matches() {
        let p = GridPolicy::random(3, 4, 0.8, 11);
        let fx = RolloutFixture::sample(&p, 3, 8, 1.0, 12).unwrap();
        let mut moved = p.clone();
        drift(&mut moved, &fx, 0.2, 0.3, 1).unwrap();
        let report = finite_diff_check(&moved, &fx, 0.2, 1e-5).unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn zero_advantages_give_zero_gradients() {
        let p = GridPolicy::random(3, 4, 0.8, 1);
        let mut fx = RolloutFixture::sample(&p, 2, 6, 1.0, 2).unwrap();
        for g in &mut fx.groups {
            g.advantages.iter_mut().for_each(|a| *a = 0.0);
        }
        let (_, grad) = fx.loss_and_grad(&p, 0.2).unwrap();
        assert!(grad.iter().all(|g| *g == 0.0));
        let report = finite_diff_check(&p, &fx, 0.2, 1e-5).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn knife_edge_rejected() {
        let p = GridPolicy::random(2, 2, 0.5, 3);
        let fx = RolloutFixture::sample(&p, 1, 4, 1.0, 4).unwrap();
        // on-policy ratios are exactly 1, far from 0.8 and 1.2
        assert!(finite_diff_check(&p, &fx, 0.2, 1e-5).is_ok());
        // epsilon tiny: ratio 1 sits at the boundary
        assert!(finite_diff_check(&p, &fx, 1e-7, 1e-5).is_err());
        assert!(finite_diff_check(&p, &fx, 0.2, 0.0).is_err());
    }
}
