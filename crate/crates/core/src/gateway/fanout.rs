use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::dsl::{parse_action, ParsedAction};
use super::{complete_one, ChatEndpoint, ChatRequest, EndpointError, RequestMeta, Role};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanoutConfig {
    pub k: usize,
    /// Extra attempts per slot after the first.
    pub retries: u32,
    /// Wall-clock limit for the whole fan-out; late slots are failed.
    pub deadline: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "failure", rename_all = "snake_case")]
pub enum SlotFailure {
    Request { attempts: u32, message: String },
    Deadline,
    Parse { message: String },
}

/// One of the K proposals. `parsed` is present iff the reply held exactly
/// one well-formed action line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProposal {
    pub candidate_index: usize,
    pub raw_text: Option<String>,
    pub parsed: Option<ParsedAction>,
    pub failure: Option<SlotFailure>,
}

impl ActionProposal {
    pub fn is_usable(&self) -> bool {
        self.parsed.is_some()
    }

    fn from_reply(candidate_index: usize, reply: Result<String, (u32, EndpointError)>) -> Self {
        match reply {
            Ok(text) => {
                let (parsed, failure) = match parse_action(&text) {
                    Ok(p) => (Some(p), None),
                    Err(e) => (None, Some(SlotFailure::Parse { message: e.to_string() })),
                };
                Self { candidate_index, raw_text: Some(text), parsed, failure }
            }
            Err((attempts, e)) => Self {
                candidate_index,
                raw_text: None,
                parsed: None,
                failure: Some(SlotFailure::Request { attempts, message: e.to_string() }),
            },
        }
    }
}

fn attempt_slot(
    endpoint: &dyn ChatEndpoint,
    request: &ChatRequest,
    step: usize,
    slot: usize,
    retries: u32,
) -> Result<String, (u32, EndpointError)> {
    let mut last = None;
    for attempt in 0..=retries {
        let meta = RequestMeta { role: Role::Planner, step, slot, attempt };
        match complete_one(endpoint, request, &meta) {
            Ok(text) => return Ok(text),
            Err(e) => last = Some(e),
        }
    }
    Err((retries + 1, last.expect("at least one attempt")))
}

/// Issues `cfg.k` planner requests concurrently and returns the proposals
/// in candidate-index order. Failed slots are kept and marked. Errors only
/// when every slot failed at the request level.
pub fn request_proposals(
    endpoint: &Arc<dyn ChatEndpoint>,
    request: &ChatRequest,
    step: usize,
    cfg: &FanoutConfig,
) -> Result<Vec<ActionProposal>, Vec<ActionProposal>> {
    assert!(cfg.k >= 1, "fan-out needs K >= 1");
    let replies: Vec<Option<Result<String, (u32, EndpointError)>>> = if cfg.k == 1 && cfg.deadline.is_none() {
        vec![Some(attempt_slot(endpoint.as_ref(), request, step, 0, cfg.retries))]
    } else {
        let (tx, rx) = mpsc::channel();
        for slot in 0..cfg.k {
            let (tx, ep, req, retries) = (tx.clone(), Arc::clone(endpoint), request.clone(), cfg.retries);
            // detached: a hung request must not hold the step past its deadline
            thread::spawn(move || {
                let _ = tx.send((slot, attempt_slot(ep.as_ref(), &req, step, slot, retries)));
            });
        }
        drop(tx);
        let mut replies: Vec<Option<_>> = (0..cfg.k).map(|_| None).collect();
        let until = cfg.deadline.map(|d| Instant::now() + d);
        for _ in 0..cfg.k {
            let received = match until {
                Some(t) => match rx.recv_timeout(t.saturating_duration_since(Instant::now())) {
                    Ok(r) => r,
                    Err(_) => break,
                },
                None => rx.recv().expect("every slot thread sends once"),
            };
            replies[received.0] = Some(received.1);
        }
        replies
    };

    let proposals: Vec<ActionProposal> = replies
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Some(reply) => ActionProposal::from_reply(i, reply),
            None => ActionProposal {
                candidate_index: i,
                raw_text: None,
                parsed: None,
                failure: Some(SlotFailure::Deadline),
            },
        })
        .collect();
    if proposals.iter().all(|p| p.raw_text.is_none()) {
        Err(proposals)
    } else {
        Ok(proposals)
    }
}
