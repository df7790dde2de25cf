//! The agent loop: propose K actions, judge, ground, execute, record.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::env::{descriptor_hash, EnvAction, EnvEvent, EnvState, Scenario};
use crate::gateway::prompts::{PromptSet, StepContext};
use crate::gateway::{
    judge_select, request_proposals, ActionProposal, ChatEndpoint, FanoutConfig, Grounder, JudgeOutcome, ParsedAction,
    ScreenContext,
};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Proposals sampled per step.
    pub k: usize,
    pub max_steps: usize,
    pub temperature: f64,
    /// Extra attempts per proposal request.
    pub retries: u32,
    pub step_deadline_ms: Option<u64>,
    /// Past steps shown to the planner.
    pub history: usize,
    /// Step errors tolerated before the run aborts.
    pub error_cap: usize,
    /// Skip the judge and take the first usable proposal.
    pub bypass_judge: bool,
    /// Record wall-clock phase timings (makes logs non-reproducible).
    pub record_latency: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            k: 8,
            max_steps: 100,
            temperature: 1.0,
            retries: 2,
            step_deadline_ms: None,
            history: 10,
            error_cap: 5,
            bypass_judge: false,
            record_latency: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if self.max_steps == 0 {
            return Err("max_steps must be at least 1".into());
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be finite and non-negative, got {}", self.temperature));
        }
        if self.error_cap == 0 {
            return Err("error_cap must be at least 1".into());
        }
        Ok(())
    }
}

/// The three model roles plus their prompt templates.
#[derive(Clone)]
pub struct Clients {
    pub planner: Arc<dyn ChatEndpoint>,
    pub judge: Arc<dyn ChatEndpoint>,
    pub grounder: Arc<dyn Grounder>,
    pub prompts: PromptSet,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub propose_ms: f64,
    pub judge_ms: f64,
    pub ground_ms: f64,
    pub execute_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step_index: usize,
    pub state_id: String,
    pub descriptor_hash: String,
    pub candidates: Vec<ActionProposal>,
    /// Present when the judge was consulted; a lone usable candidate is
    /// taken without a call.
    pub judge: Option<JudgeOutcome>,
    pub chosen_index: Option<usize>,
    pub chosen_action: Option<String>,
    /// One point per grounded description; empty for direct actions.
    pub grounded_points: Vec<Point>,
    pub executed: Option<EnvAction>,
    pub env_event: Option<EnvEvent>,
    pub error: Option<String>,
    pub latency: Option<Latency>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    FailAction,
    BudgetExhausted,
    StepError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub success: bool,
    pub termination: Termination,
    pub steps: Vec<TrajectoryStep>,
}

impl RunResult {
    /// Grounding-required actions that were executed.
    pub fn grounded_actions(&self) -> usize {
        self.steps.iter().filter(|s| !s.grounded_points.is_empty() && s.executed.is_some()).count()
    }

    /// Line-delimited JSON: one object per step, then a summary line.
    pub fn to_log(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "record", rename_all = "snake_case")]
        enum Line<'a> {
            Step(&'a TrajectoryStep),
            Result { success: bool, termination: Termination, steps: usize },
        }
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(&Line::Step(s)).expect("step serializes"));
            out.push('\n');
        }
        let summary = Line::Result { success: self.success, termination: self.termination, steps: self.steps.len() };
        out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
        out.push('\n');
        out
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Episode-local state carried between steps.
pub struct Episode<'a> {
    scenario: &'a Scenario,
    pub state: EnvState,
    history: Vec<String>,
}

impl<'a> Episode<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Self { scenario, state: scenario.reset(), history: Vec::new() }
    }

    fn push_history(&mut self, line: String, keep: usize) {
        self.history.push(line);
        let excess = self.history.len().saturating_sub(keep);
        self.history.drain(..excess);
    }

    /// Runs one propose/judge/ground/execute cycle. The step is returned
    /// even on error, with `error` set and the state unchanged.
    pub fn execute_step(&mut self, step: usize, clients: &Clients, cfg: &AgentConfig) -> TrajectoryStep {
        let descriptor = match self.scenario.render_descriptor(&self.state) {
            Ok(d) => d,
            Err(e) => {
                return self.failed_step(step, String::new(), Vec::new(), e.to_string());
            }
        };
        let mut record = TrajectoryStep {
            step_index: step,
            state_id: self.state.state_id.clone(),
            descriptor_hash: descriptor_hash(&descriptor),
            candidates: Vec::new(),
            judge: None,
            chosen_index: None,
            chosen_action: None,
            grounded_points: Vec::new(),
            executed: None,
            env_event: None,
            error: None,
            latency: None,
        };
        let mut latency = Latency::default();
        let history = self.history.clone();
        let ctx = StepContext {
            instruction: &self.scenario.instruction,
            history: &history,
            descriptor: &descriptor,
            resolution: self.scenario.resolution,
            step,
            max_steps: cfg.max_steps,
        };

        let t = Instant::now();
        let request = clients.prompts.planner_request(&ctx, cfg.temperature);
        let fanout =
            FanoutConfig { k: cfg.k, retries: cfg.retries, deadline: cfg.step_deadline_ms.map(Duration::from_millis) };
        let proposals = request_proposals(&clients.planner, &request, step, &fanout);
        latency.propose_ms = ms(t.elapsed());
        let all_failed = proposals.is_err();
        record.candidates = proposals.unwrap_or_else(|p| p);
        let usable: Vec<&ActionProposal> = record.candidates.iter().filter(|p| p.is_usable()).collect();
        if all_failed || usable.is_empty() {
            let why = if all_failed { "all proposal requests failed" } else { "no proposal parsed" };
            record.error = Some(why.into());
            self.finish(&mut record, latency, cfg, format!("{}. <{why}>", step + 1));
            return record;
        }

        let t = Instant::now();
        let pick = if cfg.bypass_judge {
            0
        } else {
            let texts: Vec<&str> = usable.iter().map(|p| p.raw_text.as_deref().unwrap_or_default()).collect();
            let outcome = judge_select(clients.judge.as_ref(), &clients.prompts, &ctx, &texts);
            let pick = outcome.chosen;
            if outcome.calls > 0 || outcome.flagged {
                record.judge = Some(outcome);
            }
            pick
        };
        latency.judge_ms = ms(t.elapsed());
        let chosen = usable[pick];
        let parsed = chosen.parsed.clone().expect("usable proposals are parsed");
        let line = parsed.to_line();
        record.chosen_index = Some(chosen.candidate_index);
        record.chosen_action = Some(line.clone());

        let t = Instant::now();
        let action = match &parsed {
            ParsedAction::Grounded { target } => {
                let screen = ScreenContext {
                    descriptor: &descriptor,
                    resolution: self.scenario.resolution,
                    features: None,
                    step,
                };
                match clients.grounder.ground(target, &screen) {
                    Ok(points) => {
                        record.grounded_points = points.clone();
                        target.resolve(&points)
                    }
                    Err(e) => {
                        latency.ground_ms = ms(t.elapsed());
                        record.error = Some(format!("grounding: {e}"));
                        self.finish(&mut record, latency, cfg, format!("{}. {line} <grounding failed>", step + 1));
                        return record;
                    }
                }
            }
            other => other.direct_action(),
        };
        latency.ground_ms = ms(t.elapsed());
        let Some(action) = action else {
            record.error = Some("grounder returned the wrong number of points".into());
            self.finish(&mut record, latency, cfg, format!("{}. {line} <grounding failed>", step + 1));
            return record;
        };

        let t = Instant::now();
        match self.scenario.step(&self.state, &action) {
            Ok((next, event)) => {
                self.state = next;
                record.executed = Some(action);
                record.env_event = Some(event);
            }
            Err(e) => record.error = Some(format!("environment: {e}")),
        }
        latency.execute_ms = ms(t.elapsed());
        self.finish(&mut record, latency, cfg, format!("{}. {line}", step + 1));
        record
    }

    fn finish(&mut self, record: &mut TrajectoryStep, latency: Latency, cfg: &AgentConfig, summary: String) {
        if cfg.record_latency {
            record.latency = Some(latency);
        }
        self.push_history(summary, cfg.history);
    }

    fn failed_step(&self, step: usize, hash: String, candidates: Vec<ActionProposal>, error: String) -> TrajectoryStep {
        TrajectoryStep {
            step_index: step,
            state_id: self.state.state_id.clone(),
            descriptor_hash: hash,
            candidates,
            judge: None,
            chosen_index: None,
            chosen_action: None,
            grounded_points: Vec::new(),
            executed: None,
            env_event: None,
            error: Some(error),
            latency: None,
        }
    }
}

/// Runs an episode until a terminal event, the error cap, or the step
/// budget.
pub fn run_task(scenario: &Scenario, clients: &Clients, cfg: &AgentConfig) -> RunResult {
    let mut episode = Episode::new(scenario);
    let mut steps = Vec::new();
    let mut errors = 0;
    for step in 0..cfg.max_steps {
        let record = episode.execute_step(step, clients, cfg);
        let event = record.env_event.clone();
        let failed = record.error.is_some();
        steps.push(record);
        match event {
            Some(EnvEvent::Success) => return RunResult { success: true, termination: Termination::Success, steps },
            Some(EnvEvent::Failed | EnvEvent::Incomplete) => {
                return RunResult { success: false, termination: Termination::FailAction, steps }
            }
            _ => {}
        }
        if failed {
            errors += 1;
            if errors >= cfg.error_cap {
                return RunResult { success: false, termination: Termination::StepError, steps };
            }
        }
    }
    RunResult { success: false, termination: Termination::BudgetExhausted, steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::stubs::{CannedEndpoint, LabelGrounderEndpoint, OracleJudge, ScriptedPlanner, UniformJudge};
    use crate::gateway::{CountingGrounder, RemoteGrounder};

    fn clients(scn: &Scenario, p: f64, seed: u64) -> (Clients, Arc<CountingGrounder<RemoteGrounder>>) {
        let grounder =
            Arc::new(CountingGrounder::new(RemoteGrounder::new(Arc::new(LabelGrounderEndpoint), PromptSet::default())));
        let c = Clients {
            planner: Arc::new(ScriptedPlanner::new(scn, p, seed).unwrap()),
            judge: Arc::new(OracleJudge::new(scn).unwrap()),
            grounder: grounder.clone(),
            prompts: PromptSet::default(),
        };
        (c, grounder)
    }

    #[test]
    fn perfect_planner_succeeds_in_chain_length() {
        let scn = Scenario::linear_chain(3);
        let (c, g) = clients(&scn, 1.0, 0);
        let r = run_task(&scn, &c, &AgentConfig { k: 4, max_steps: 15, ..Default::default() });
        assert!(r.success);
        assert_eq!(r.termination, Termination::Success);
        assert_eq!(r.steps.len(), 3);
        assert_eq!(g.invocations(), 3);
        assert_eq!(r.grounded_actions(), 3);
    }

    #[test]
    fn budget_exhausted() {
        let scn = Scenario::linear_chain(3);
        let (c, _) = clients(&scn, 1.0, 0);
        let r = run_task(&scn, &c, &AgentConfig { k: 2, max_steps: 2, ..Default::default() });
        assert!(!r.success);
        assert_eq!(r.termination, Termination::BudgetExhausted);
        assert_eq!(r.steps.len(), 2);
    }

    #[test]
    fn trap_only_planner_fails() {
        let scn = Scenario::linear_chain(3);
        let (mut c, _) = clients(&scn, 0.0, 0);
        c.judge = Arc::new(UniformJudge::new(1));
        let r = run_task(&scn, &c, &AgentConfig { k: 3, max_steps: 10, ..Default::default() });
        assert!(!r.success);
        assert_eq!(r.termination, Termination::FailAction);
        assert!(matches!(&r.steps[0].env_event, Some(EnvEvent::Transition { to, .. }) if to == "trap"));
        assert_eq!(r.steps.last().unwrap().env_event, Some(EnvEvent::Failed));
    }

    #[test]
    fn unparseable_proposals_hit_error_cap() {
        let scn = Scenario::linear_chain(2);
        let (mut c, _) = clients(&scn, 1.0, 0);
        c.planner = Arc::new(CannedEndpoint::new(vec!["thinking..."; 10]));
        let r = run_task(&scn, &c, &AgentConfig { k: 1, max_steps: 10, error_cap: 3, ..Default::default() });
        assert_eq!(r.termination, Termination::StepError);
        assert_eq!(r.steps.len(), 3);
        assert!(r.steps.iter().all(|s| s.error.as_deref() == Some("no proposal parsed")));
    }

    #[test]
    fn grounding_failure_consumes_step_then_replans() {
        let scn = Scenario::linear_chain(1);
        let (mut c, _) = clients(&scn, 1.0, 0);
        c.grounder = Arc::new(RemoteGrounder::new(
            Arc::new(CannedEndpoint::new(["nowhere", "(1000,630)"])),
            PromptSet::default(),
        ));
        let r = run_task(&scn, &c, &AgentConfig { k: 1, max_steps: 5, ..Default::default() });
        assert!(r.success);
        assert_eq!(r.steps.len(), 2);
        assert!(r.steps[0].error.as_deref().unwrap().starts_with("grounding"));
        assert!(r.steps[0].grounded_points.is_empty());
    }

    #[test]
    fn direct_actions_skip_grounder() {
        let scn = Scenario::linear_chain(1);
        let (mut c, g) = clients(&scn, 1.0, 0);
        c.planner = Arc::new(CannedEndpoint::new(["agent.hotkey(['ctrl', 's'])", "agent.wait(1)", "agent.done()"]));
        let r = run_task(&scn, &c, &AgentConfig { k: 1, max_steps: 5, ..Default::default() });
        assert_eq!(g.invocations(), 0);
        assert_eq!(r.steps.len(), 3);
        assert_eq!(r.termination, Termination::FailAction);
        assert_eq!(r.steps[0].executed, Some(EnvAction::Hotkey { keys: vec!["ctrl".into(), "s".into()] }));
    }

    #[test]
    fn k1_log_equals_bypassed_judge() {
        let scn = Scenario::linear_chain(4);
        for seed in 0..5 {
            let (c, _) = clients(&scn, 0.7, seed);
            let a = run_task(&scn, &c, &AgentConfig { k: 1, ..Default::default() }).to_log();
            let (mut c2, _) = clients(&scn, 0.7, seed);
            c2.judge = Arc::new(CannedEndpoint::new(Vec::<String>::new()));
            let b = run_task(&scn, &c2, &AgentConfig { k: 1, bypass_judge: true, ..Default::default() }).to_log();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn history_is_bounded() {
        let scn = Scenario::linear_chain(1);
        let mut ep = Episode::new(&scn);
        for i in 0..25 {
            ep.push_history(format!("{i}"), 10);
        }
        assert_eq!(ep.history.len(), 10);
        assert_eq!(ep.history[0], "15");
    }

    #[test]
    fn log_shape() {
        let scn = Scenario::linear_chain(2);
        let (c, _) = clients(&scn, 1.0, 0);
        let log = run_task(&scn, &c, &AgentConfig { k: 2, ..Default::default() }).to_log();
        let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["record"], "step");
        assert_eq!(lines[0]["candidates"].as_array().unwrap().len(), 2);
        assert_eq!(lines[2]["record"], "result");
        assert_eq!(lines[2]["termination"], "success");
    }
}
