//! Evaluation drivers: grounding accuracy over records and success-rate
//! sweeps over the number of proposals K.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, Discrete, Normal};
use thiserror::Error;

use crate::dataset::GroundingRecord;
use crate::env::Scenario;
use crate::gateway::prompts::PromptSet;
use crate::gateway::stubs::{LabelGrounderEndpoint, OracleJudge, ScriptedPlanner, UniformJudge};
use crate::gateway::{ChatEndpoint, EndpointError, Grounder, RemoteGrounder, ScreenContext};
use crate::geometry::contains;
use crate::orchestrator::{run_task, AgentConfig, Clients};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no records to evaluate")]
    NoRecords,
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

pub const UNCATEGORIZED: &str = "uncategorized";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl Tally {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
        self.accuracy = self.correct as f64 / self.total as f64;
    }

    fn merge(&mut self, other: &Tally) {
        self.total += other.total;
        self.correct += other.correct;
        self.accuracy = if self.total == 0 { 0.0 } else { self.correct as f64 / self.total as f64 };
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingFailure {
    pub index: usize,
    pub screen_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingEvalReport {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_category: BTreeMap<String, Tally>,
    /// Records where the grounder errored; each also counts as incorrect.
    pub failures: Vec<GroundingFailure>,
}

impl GroundingEvalReport {
    /// Count-weighted combination of two reports over disjoint records.
    /// Failure indices of `other` are shifted past this report's records.
    pub fn merge(&self, other: &GroundingEvalReport) -> GroundingEvalReport {
        let mut per_category = self.per_category.clone();
        for (cat, t) in &other.per_category {
            per_category.entry(cat.clone()).or_default().merge(t);
        }
        let mut failures = self.failures.clone();
        failures.extend(other.failures.iter().map(|f| GroundingFailure { index: f.index + self.total, ..f.clone() }));
        let total = self.total + other.total;
        let correct = self.correct + other.correct;
        GroundingEvalReport { total, correct, accuracy: correct as f64 / total as f64, per_category, failures }
    }
}

/// Scores each record by whether the grounder's point for its instruction
/// falls inside the annotated box.
pub fn eval_grounding(grounder: &dyn Grounder, records: &[GroundingRecord]) -> Result<GroundingEvalReport, BenchError> {
    if records.is_empty() {
        return Err(BenchError::NoRecords);
    }
    let mut overall = Tally::default();
    let mut per_category: BTreeMap<String, Tally> = BTreeMap::new();
    let mut failures = Vec::new();
    for (index, r) in records.iter().enumerate() {
        let descriptor = serde_json::json!({ "screen_id": r.screen_id, "image_ref": r.image_ref }).to_string();
        let screen = ScreenContext {
            descriptor: &descriptor,
            resolution: r.resolution,
            features: r.features.as_deref(),
            step: index,
        };
        let correct = match grounder.locate(&r.instruction, &screen) {
            Ok(p) => contains(&r.bbox, p),
            Err(e) => {
                failures.push(GroundingFailure { index, screen_id: r.screen_id.clone(), error: e.to_string() });
                false
            }
        };
        overall.add(correct);
        per_category.entry(r.category.clone().unwrap_or_else(|| UNCATEGORIZED.into())).or_default().add(correct);
    }
    Ok(GroundingEvalReport {
        total: overall.total,
        correct: overall.correct,
        accuracy: overall.accuracy,
        per_category,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    /// Picks a correct candidate whenever one exists.
    Oracle,
    Uniform,
}

/// The Bernoulli planner model: each proposal is independently correct
/// with probability `p`, and any wrong step ends the episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedModel {
    pub p: f64,
    pub judge: JudgeKind,
}

impl ScriptedModel {
    pub fn step_success(&self, k: usize) -> f64 {
        match self.judge {
            JudgeKind::Oracle => 1.0 - (1.0 - self.p).powi(k as i32),
            JudgeKind::Uniform => self.p,
        }
    }

    /// Episode success over a horizon of `steps` required actions.
    pub fn episode_success(&self, k: usize, steps: usize) -> f64 {
        self.step_success(k).powi(steps as i32)
    }
}

/// Stub clients for the scripted model on a scenario with a script.
pub fn scripted_clients(scenario: &Scenario, model: &ScriptedModel, seed: u64) -> Result<Clients, EndpointError> {
    let judge: Arc<dyn ChatEndpoint> = match model.judge {
        JudgeKind::Oracle => Arc::new(OracleJudge::new(scenario)?),
        JudgeKind::Uniform => Arc::new(UniformJudge::new(derive_seed(seed, &[1]))),
    };
    Ok(Clients {
        planner: Arc::new(ScriptedPlanner::new(scenario, model.p, seed)?),
        judge,
        grounder: Arc::new(RemoteGrounder::new(Arc::new(LabelGrounderEndpoint), PromptSet::default())),
        prompts: PromptSet::default(),
    })
}

/// Two-sided 95% Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = Normal::standard().inverse_cdf(0.975);
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // exact at the extremes, where rounding could leave p just outside
    ((centre - half).clamp(0.0, p), (centre + half).clamp(p, 1.0))
}

/// Pooled two-proportion z-test; returns `(z, two-sided p-value)`.
/// Identical all-zero or all-one samples give `(0, 1)`.
pub fn two_proportion_test(s1: usize, n1: usize, s2: usize, n2: usize) -> (f64, f64) {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (s1 + s2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se == 0.0 {
        return (0.0, 1.0);
    }
    let z = (s1 as f64 / n1f - s2 as f64 / n2f) / se;
    (z, 2.0 * Normal::standard().cdf(-z.abs()))
}

/// Exact two-sided binomial test of `successes` out of `n` against `p0`,
/// summing the probabilities of outcomes no likelier than the observed one.
pub fn binomial_test(successes: usize, n: usize, p0: f64) -> f64 {
    let dist = Binomial::new(p0, n as u64).expect("p0 in [0, 1]");
    let observed = dist.pmf(successes as u64);
    let p: f64 = (0..=n as u64).map(|i| dist.pmf(i)).filter(|&q| q <= observed * (1.0 + 1e-7)).sum();
    p.min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Episodes whose clients could not be built; counted as failures.
    pub errors: usize,
    /// Model prediction, when the scripted model is active.
    pub analytic: Option<f64>,
    /// Binomial standard deviation of the rate under the prediction.
    pub sigma: Option<f64>,
    /// Exact binomial test of the observed count against the prediction.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub k_a: usize,
    pub k_b: usize,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub model: Option<ScriptedModel>,
    pub rows: Vec<SweepRow>,
    /// Two-proportion tests for every pair of K values.
    pub pairwise: Vec<PairwiseTest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub ks: Vec<usize>,
    pub episodes: usize,
    pub seed: u64,
    /// Parallel episode limit; `None` uses every core.
    pub jobs: Option<usize>,
    /// Base agent settings; `k` is overridden per row.
    pub agent: AgentConfig,
}

impl SweepConfig {
    pub const DEFAULT_KS: [usize; 4] = [1, 8, 16, 32];

    fn validate(&self) -> Result<(), BenchError> {
        if self.ks.is_empty() {
            return Err(BenchError::InvalidSweep("no K values".into()));
        }
        if self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BenchError::InvalidSweep("K values must be strictly increasing".into()));
        }
        if self.ks[0] == 0 {
            return Err(BenchError::InvalidSweep("K must be at least 1".into()));
        }
        if self.episodes == 0 {
            return Err(BenchError::InvalidSweep("episodes must be at least 1".into()));
        }
        self.agent.validate().map_err(BenchError::InvalidSweep)
    }
}

/// Runs `cfg.episodes` independent episodes per K. Episode `i` uses
/// scenario `i mod suite.len()` and clients built from a seed derived
/// from `(cfg.seed, k, i)`.
pub fn sweep_k<F>(
    suite: &[Scenario],
    make_clients: F,
    cfg: &SweepConfig,
    model: Option<ScriptedModel>,
) -> Result<SweepReport, BenchError>
where
    F: Fn(&Scenario, u64) -> Result<Clients, String> + Sync,
{
    cfg.validate()?;
    if suite.is_empty() {
        return Err(BenchError::InvalidSweep("empty scenario suite".into()));
    }
    let horizons: Vec<usize> = suite
        .iter()
        .map(|s| s.solution_len().ok_or_else(|| BenchError::InvalidSweep("scenario without a solution".into())))
        .collect::<Result<_, _>>()
        .or_else(|e| if model.is_some() { Err(e) } else { Ok(Vec::new()) })?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| BenchError::Pool(e.to_string()))?;

    let mut rows = Vec::with_capacity(cfg.ks.len());
    for &k in &cfg.ks {
        let agent = AgentConfig { k, ..cfg.agent.clone() };
        let outcomes: Vec<Option<bool>> = pool.install(|| {
            (0..cfg.episodes)
                .into_par_iter()
                .map(|i| {
                    let scenario = &suite[i % suite.len()];
                    let seed = derive_seed(cfg.seed, &[k as u64, i as u64]);
                    make_clients(scenario, seed).ok().map(|c| run_task(scenario, &c, &agent).success)
                })
                .collect()
        });
        let successes = outcomes.iter().filter(|o| **o == Some(true)).count();
        let errors = outcomes.iter().filter(|o| o.is_none()).count();
        let (ci_low, ci_high) = wilson_interval(successes, cfg.episodes);
        let analytic = model.map(|m| {
            (0..cfg.episodes).map(|i| m.episode_success(k, horizons[i % horizons.len()])).sum::<f64>()
                / cfg.episodes as f64
        });
        rows.push(SweepRow {
            k,
            episodes: cfg.episodes,
            successes,
            success_rate: successes as f64 / cfg.episodes as f64,
            ci_low,
            ci_high,
            errors,
            analytic,
            sigma: analytic.map(|a| (a * (1.0 - a) / cfg.episodes as f64).sqrt()),
            p_value: analytic.map(|a| binomial_test(successes, cfg.episodes, a)),
        });
    }
    let mut pairwise = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let (z, p_value) = two_proportion_test(a.successes, a.episodes, b.successes, b.episodes);
            pairwise.push(PairwiseTest { k_a: a.k, k_b: b.k, z, p_value });
        }
    }
    Ok(SweepReport { seed: cfg.seed, model, rows, pairwise })
}
