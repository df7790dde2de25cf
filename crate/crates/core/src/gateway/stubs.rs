//! Offline endpoints serving the chat protocol from scripts.
//!
//! Randomised stubs draw from a generator seeded by the episode seed and
//! the request's step, slot and attempt, so replies do not depend on
//! thread scheduling.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dsl::parse_action;
use super::prompts::judge_candidates;
use super::{ChatEndpoint, ChatRequest, ChatResponse, Choice, EndpointError, PartKind, RequestMeta};
use crate::env::{Scenario, ScenarioScript, ScreenView};
use crate::seed::derive_seed;

fn reply(text: impl Into<String>) -> Result<ChatResponse, EndpointError> {
    Ok(ChatResponse { choices: vec![Choice { text: text.into() }] })
}

fn meta_rng(seed: u64, meta: &RequestMeta) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[meta.step as u64, meta.slot as u64, u64::from(meta.attempt)]))
}

fn state_of(request: &ChatRequest) -> Result<ScreenView, EndpointError> {
    request
        .screen()
        .and_then(ScreenView::parse)
        .ok_or_else(|| EndpointError::Other("request carries no readable screen".into()))
}

/// Replies with queued texts in order, then errors.
pub struct CannedEndpoint {
    replies: Mutex<VecDeque<String>>,
    calls: AtomicUsize,
}

impl CannedEndpoint {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { replies: Mutex::new(replies.into_iter().map(Into::into).collect()), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatEndpoint for CannedEndpoint {
    fn complete(&self, _request: &ChatRequest, _meta: &RequestMeta) -> Result<ChatResponse, EndpointError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.replies.lock().expect("canned queue poisoned").pop_front() {
            Some(text) => reply(text),
            None => Err(EndpointError::Other("canned replies exhausted".into())),
        }
    }
}

/// Replies `agent.wait(<slot>)` after a random delay below `max_delay`,
/// or a fixed delay for selected slots.
pub struct EchoSlotEndpoint {
    seed: u64,
    max_delay: Duration,
    slow: BTreeMap<usize, Duration>,
}

impl EchoSlotEndpoint {
    pub fn new(seed: u64, max_delay: Duration) -> Self {
        Self { seed, max_delay, slow: BTreeMap::new() }
    }

    pub fn slow_slots(slots: Vec<usize>, delay: Duration) -> Self {
        Self { seed: 0, max_delay: Duration::ZERO, slow: slots.into_iter().map(|s| (s, delay)).collect() }
    }
}

impl ChatEndpoint for EchoSlotEndpoint {
    fn complete(&self, _request: &ChatRequest, meta: &RequestMeta) -> Result<ChatResponse, EndpointError> {
        let delay = match self.slow.get(&meta.slot) {
            Some(d) => *d,
            None if self.max_delay.is_zero() => Duration::ZERO,
            None => self.max_delay.mul_f64(meta_rng(self.seed, meta).gen::<f64>()),
        };
        std::thread::sleep(delay);
        reply(format!("agent.wait({})", meta.slot))
    }
}

/// Like [`EchoSlotEndpoint`] without delays, but selected slots fail on
/// their first `failures` attempts (`u32::MAX` for always).
pub struct FlakyEndpoint {
    slots: BTreeSet<usize>,
    failures: u32,
}

impl FlakyEndpoint {
    pub fn always_failing(slots: Vec<usize>) -> Self {
        Self { slots: slots.into_iter().collect(), failures: u32::MAX }
    }

    pub fn failing_first(slots: Vec<usize>, failures: u32) -> Self {
        Self { slots: slots.into_iter().collect(), failures }
    }
}

impl ChatEndpoint for FlakyEndpoint {
    fn complete(&self, _request: &ChatRequest, meta: &RequestMeta) -> Result<ChatResponse, EndpointError> {
        if self.slots.contains(&meta.slot) && meta.attempt < self.failures {
            return Err(EndpointError::Transport(format!("slot {} down", meta.slot)));
        }
        reply(format!("agent.wait({})", meta.slot))
    }
}

/// Planner following a scenario script: each proposal is the state's
/// solution line with probability `p`, otherwise a uniformly drawn decoy.
/// Trap states get `agent.fail()`; states without a solution get
/// `agent.done()`.
pub struct ScriptedPlanner {
    script: ScenarioScript,
    traps: BTreeSet<String>,
    p: f64,
    seed: u64,
}

impl ScriptedPlanner {
    pub fn new(scenario: &Scenario, p: f64, seed: u64) -> Result<Self, EndpointError> {
        let script = scenario.script.clone().ok_or_else(|| EndpointError::Other("scenario has no script".into()))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(EndpointError::Other(format!("p must lie in [0, 1], got {p}")));
        }
        Ok(Self { script, traps: scenario.traps.clone(), p, seed })
    }

    /// The action line this planner would emit for `state` when correct.
    pub fn solution(&self, state: &str) -> Option<&str> {
        self.script.solution.get(state).map(String::as_str)
    }
}

impl ChatEndpoint for ScriptedPlanner {
    fn complete(&self, request: &ChatRequest, meta: &RequestMeta) -> Result<ChatResponse, EndpointError> {
        let view = state_of(request)?;
        let state = view.state_id.as_str();
        let mut rng = meta_rng(self.seed, meta);
        let line = if self.traps.contains(state) {
            "agent.fail()".to_string()
        } else {
            match self.script.solution.get(state) {
                None => "agent.done()".to_string(),
                Some(good) => {
                    let decoys = self.script.decoys.get(state).map(Vec::as_slice).unwrap_or_default();
                    if rng.gen_bool(self.p) || decoys.is_empty() {
                        good.clone()
                    } else {
                        decoys[rng.gen_range(0..decoys.len())].clone()
                    }
                }
            }
        };
        reply(format!("Observation: screen `{state}`.\nThought: follow the plan.\n```python\n{line}\n```"))
    }
}

/// Judge that picks the first candidate matching the scripted solution
/// for the current state, else index 0.
pub struct OracleJudge {
    script: ScenarioScript,
}

impl OracleJudge {
    pub fn new(scenario: &Scenario) -> Result<Self, EndpointError> {
        let script = scenario.script.clone().ok_or_else(|| EndpointError::Other("scenario has no script".into()))?;
        Ok(Self { script })
    }
}

impl ChatEndpoint for OracleJudge {
    fn complete(&self, request: &ChatRequest, _meta: &RequestMeta) -> Result<ChatResponse, EndpointError> {
        let view = state_of(request)?;
        let good = self.script.solution.get(&view.state_id).and_then(|l| parse_action(l).ok());
        let candidates = judge_candidates(request);
        let hit = good.and_then(|g| candidates.iter().position(|c| parse_action(c).ok().as_ref() == Some(&g)));
        let (index, why) = match hit {
            Some(i) => (i, "matches the scripted solution"),
            None => (0, "no candidate matches the scripted solution"),
        };
        reply(serde_json::json!({ "explaining": why, "index": index }).to_string())
    }
}

/// Judge picking uniformly at random among the candidates.
pub struct UniformJudge {
    seed: u64,
}

impl UniformJudge {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl ChatEndpoint for UniformJudge {
    fn complete(&self, request: &ChatRequest, meta: &RequestMeta) -> Result<ChatResponse, EndpointError> {
        let n = judge_candidates(request).len();
        if n == 0 {
            return Err(EndpointError::Other("judge request lists no candidates".into()));
        }
        let index = meta_rng(self.seed, meta).gen_range(0..n);
        reply(serde_json::json!({ "explaining": "uniform pick", "index": index }).to_string())
    }
}

/// Grounder endpoint that answers with the centre of the element whose
/// label appears in the description (longest label wins, case-insensitive).
pub struct LabelGrounderEndpoint;

impl ChatEndpoint for LabelGrounderEndpoint {
    fn complete(&self, request: &ChatRequest, _meta: &RequestMeta) -> Result<ChatResponse, EndpointError> {
        let view = state_of(request)?;
        let description = request
            .messages
            .last()
            .and_then(|m| m.content.iter().rev().find(|p| p.kind == PartKind::Text))
            .map(|p| p.value.to_lowercase())
            .unwrap_or_default();
        let best = view
            .elements
            .iter()
            .filter(|e| !e.label.is_empty() && description.contains(&e.label.to_lowercase()))
            .max_by(|a, b| a.label.len().cmp(&b.label.len()).then_with(|| b.element_id.cmp(&a.element_id)));
        match best {
            Some(e) => {
                let c = e.bbox.center();
                reply(format!("({},{})", c.x, c.y))
            }
            None => reply("I cannot find that element."),
        }
    }
}
