//! Deterministic simulated GUI environment.
//!
//! A [`Scenario`] is a finite state machine over screens. Actions are
//! resolved against element boxes and fire declared transitions; anything
//! undeclared is a no-op. The scenario is never mutated while stepping:
//! an episode's progress lives entirely in [`EnvState`].

mod scenario;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{contains, BoundingBox, Point, Resolution};

pub use scenario::{
    BufferCondition, Element, ElementKind, Scenario, ScenarioScript, ScreenState, SuccessRule, TransitionRule, Trigger,
};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario is not valid JSON: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("point ({x}, {y}) lies outside the {width}x{height} screen")]
    OutOfBounds { x: f64, y: f64, width: u32, height: u32 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MouseButton {
    #[default]
    Left,
    Middle,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvAction {
    Click {
        at: Point,
        button: MouseButton,
        count: u32,
    },
    Type {
        at: Option<Point>,
        text: String,
        overwrite: bool,
        enter: bool,
    },
    Hotkey {
        keys: Vec<String>,
    },
    Scroll {
        at: Point,
        amount: i64,
    },
    Drag {
        from: Point,
        to: Point,
    },
    Open {
        name: String,
    },
    Wait {
        seconds: f64,
    },
    /// A planner action with no simulated counterpart; recorded as a no-op.
    Unsupported {
        name: String,
    },
    Done,
    Fail,
}

impl EnvAction {
    /// Screen points the action targets, in argument order.
    pub fn points(&self) -> Vec<Point> {
        match self {
            EnvAction::Click { at, .. } | EnvAction::Scroll { at, .. } => vec![*at],
            EnvAction::Type { at: Some(at), .. } => vec![*at],
            EnvAction::Drag { from, to } => vec![*from, *to],
            _ => Vec::new(),
        }
    }
}

/// Per-episode mutable state: the current screen, text typed into fields,
/// and the field that last received a click.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub state_id: String,
    pub buffers: BTreeMap<String, String>,
    pub focus: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EnvEvent {
    Transition {
        from: String,
        to: String,
        trigger: String,
    },
    Typed {
        element_id: String,
    },
    NoOp {
        reason: String,
    },
    /// The success predicate held, either at `done` or on entering an
    /// auto-success state.
    Success,
    /// `done` was issued where no success predicate holds.
    Incomplete,
    Failed,
}

impl EnvEvent {
    pub fn is_terminal(&self) -> bool {
        matches!(self, EnvEvent::Success | EnvEvent::Incomplete | EnvEvent::Failed)
    }

    fn noop(reason: impl Into<String>) -> Self {
        EnvEvent::NoOp { reason: reason.into() }
    }
}

impl Scenario {
    pub fn reset(&self) -> EnvState {
        let buffers = self.states.get(&self.initial).map(|s| s.typed_buffers.clone()).unwrap_or_default();
        EnvState { state_id: self.initial.clone(), buffers, focus: None }
    }

    fn success_holds(&self, state: &EnvState, auto_only: bool) -> bool {
        self.success.iter().any(|rule| {
            rule.state == state.state_id
                && (!auto_only || rule.auto)
                && rule.buffer.as_ref().is_none_or(|cond| {
                    state.buffers.get(&cond.element_id).map(String::as_str) == Some(cond.equals.as_str())
                })
        })
    }

    /// Topmost element at `p`: the last declared one whose box contains it.
    pub fn element_at(&self, state_id: &str, p: Point) -> Result<Option<&Element>, EnvError> {
        let screen = self.state(state_id)?;
        Ok(screen.elements.iter().rev().find(|e| contains(&e.bbox, p)))
    }

    fn fire(&self, state: &EnvState, trigger: Trigger) -> Option<(EnvState, EnvEvent)> {
        let to = self.target(&state.state_id, &trigger)?;
        let next = EnvState { state_id: to.to_string(), buffers: state.buffers.clone(), focus: None };
        let event = if self.success_holds(&next, true) {
            EnvEvent::Success
        } else {
            EnvEvent::Transition { from: state.state_id.clone(), to: to.to_string(), trigger: trigger.to_string() }
        };
        Some((next, event))
    }

    /// Advances one action. Pure in `(state, action)`.
    pub fn step(&self, state: &EnvState, action: &EnvAction) -> Result<(EnvState, EnvEvent), EnvError> {
        self.state(&state.state_id)?;
        for p in action.points() {
            if !p.within(self.resolution) {
                return Err(EnvError::OutOfBounds {
                    x: p.x,
                    y: p.y,
                    width: self.resolution.width,
                    height: self.resolution.height,
                });
            }
        }

        let unchanged = |event| Ok((state.clone(), event));
        match action {
            EnvAction::Done => {
                if self.success_holds(state, false) {
                    unchanged(EnvEvent::Success)
                } else {
                    unchanged(EnvEvent::Incomplete)
                }
            }
            EnvAction::Fail => unchanged(EnvEvent::Failed),
            EnvAction::Click { at, .. } => {
                let Some(el) = self.element_at(&state.state_id, *at)? else {
                    return unchanged(EnvEvent::noop("click on background"));
                };
                if let Some(result) = self.fire(state, Trigger::Click(el.element_id.clone())) {
                    return Ok(result);
                }
                let mut next = state.clone();
                if el.kind == ElementKind::Field {
                    next.focus = Some(el.element_id.clone());
                }
                Ok((next, EnvEvent::noop(format!("no rule for click {}", el.element_id))))
            }
            EnvAction::Type { at, text, overwrite, enter } => {
                let target = match at {
                    Some(p) => self.element_at(&state.state_id, *p)?.cloned(),
                    None => state.focus.as_deref().and_then(|id| self.states[&state.state_id].element(id)).cloned(),
                };
                let Some(el) = target.filter(|e| e.kind == ElementKind::Field) else {
                    return unchanged(EnvEvent::noop("typing needs a field target"));
                };
                let mut typed = state.clone();
                let buf = typed.buffers.entry(el.element_id.clone()).or_default();
                if *overwrite {
                    buf.clear();
                }
                buf.push_str(text);
                typed.focus = Some(el.element_id.clone());
                if let Some(result) = self.fire(&typed, Trigger::TypeInto(el.element_id.clone())) {
                    return Ok(result);
                }
                if *enter {
                    if let Some(result) = self.fire(&typed, Trigger::hotkey(&["enter"])) {
                        return Ok(result);
                    }
                }
                Ok((typed, EnvEvent::Typed { element_id: el.element_id }))
            }
            EnvAction::Hotkey { keys } => match self.fire(state, Trigger::hotkey(keys)) {
                Some(result) => Ok(result),
                None => unchanged(EnvEvent::noop(format!("no rule for hotkey {}", keys.join("+")))),
            },
            EnvAction::Scroll { .. } => unchanged(EnvEvent::noop("scroll recorded")),
            EnvAction::Drag { .. } => unchanged(EnvEvent::noop("drag recorded")),
            EnvAction::Open { name } => unchanged(EnvEvent::noop(format!("open {name} recorded"))),
            EnvAction::Wait { .. } => unchanged(EnvEvent::noop("wait recorded")),
            EnvAction::Unsupported { name } => unchanged(EnvEvent::noop(format!("{name} is not simulated"))),
        }
    }

    /// Canonical single-line JSON description of the screen, elements
    /// sorted by id. Byte-identical for identical states.
    pub fn render_descriptor(&self, state: &EnvState) -> Result<String, EnvError> {
        #[derive(Serialize)]
        struct ElementView<'a> {
            element_id: &'a str,
            kind: ElementKind,
            label: &'a str,
            bbox: &'a BoundingBox,
        }
        #[derive(Serialize)]
        struct Descriptor<'a> {
            state_id: &'a str,
            resolution: Resolution,
            elements: Vec<ElementView<'a>>,
            buffers: &'a BTreeMap<String, String>,
        }
        let screen = self.state(&state.state_id)?;
        let mut elements: Vec<_> = screen
            .elements
            .iter()
            .map(|e| ElementView { element_id: &e.element_id, kind: e.kind, label: &e.label, bbox: &e.bbox })
            .collect();
        elements.sort_by(|a, b| a.element_id.cmp(b.element_id));
        let d =
            Descriptor { state_id: &state.state_id, resolution: self.resolution, elements, buffers: &state.buffers };
        Ok(serde_json::to_string(&d).expect("descriptor serializes"))
    }
}

/// Parsed view of a rendered descriptor, for stubs that read the screen.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScreenView {
    pub state_id: String,
    pub resolution: Resolution,
    pub elements: Vec<ElementEntry>,
    #[serde(default)]
    pub buffers: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ElementEntry {
    pub element_id: String,
    pub kind: ElementKind,
    pub label: String,
    pub bbox: BoundingBox,
}

impl ScreenView {
    pub fn parse(descriptor: &str) -> Option<Self> {
        serde_json::from_str(descriptor).ok()
    }
}

pub fn descriptor_hash(descriptor: &str) -> String {
    hex::encode(Sha256::digest(descriptor.as_bytes()))
}
