use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::geometry::{BoundingBox, Resolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Button,
    Field,
    Icon,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub element_id: String,
    pub bbox: BoundingBox,
    pub label: String,
    pub kind: ElementKind,
}

/// One screen. Elements keep their declaration order, which is also the
/// z-order: later elements sit on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenState {
    #[serde(default)]
    pub elements: Vec<Element>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub typed_buffers: BTreeMap<String, String>,
}

impl ScreenState {
    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.element_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Click(String),
    Hotkey(Vec<String>),
    TypeInto(String),
}

impl Trigger {
    pub fn hotkey<S: AsRef<str>>(keys: &[S]) -> Self {
        Trigger::Hotkey(keys.iter().map(|k| k.as_ref().trim().to_lowercase()).collect())
    }

    fn normalized(self) -> Self {
        match self {
            Trigger::Hotkey(keys) => Trigger::hotkey(&keys),
            other => other,
        }
    }
}

impl std::fmt::Display for Trigger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Trigger::Click(id) => write!(f, "click {id}"),
            Trigger::Hotkey(keys) => write!(f, "hotkey {}", keys.join("+")),
            Trigger::TypeInto(id) => write!(f, "type-into {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRule {
    pub from: String,
    pub trigger: Trigger,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferCondition {
    pub element_id: String,
    pub equals: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRule {
    pub state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer: Option<BufferCondition>,
    /// Entering the state ends the episode successfully without a `done`.
    #[serde(default)]
    pub auto: bool,
}

/// Scripted knowledge used by the offline planner and judge stubs: the
/// correct action line per state and the plausible wrong ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    #[serde(default)]
    pub solution: BTreeMap<String, String>,
    #[serde(default)]
    pub decoys: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default)]
    instruction: String,
    resolution: Resolution,
    states: BTreeMap<String, ScreenState>,
    initial: Option<String>,
    #[serde(default)]
    transitions: Vec<TransitionRule>,
    #[serde(default)]
    success: Vec<SuccessRule>,
    #[serde(default)]
    traps: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    script: Option<ScenarioScript>,
}

/// A validated, immutable state machine over screens.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub instruction: String,
    pub resolution: Resolution,
    pub states: BTreeMap<String, ScreenState>,
    pub initial: String,
    pub rules: Vec<TransitionRule>,
    pub success: Vec<SuccessRule>,
    pub traps: BTreeSet<String>,
    pub script: Option<ScenarioScript>,
    table: HashMap<(String, Trigger), String>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|source| EnvError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| EnvError::Parse(e.to_string()))?;
        Self::build(file)
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            instruction: self.instruction.clone(),
            resolution: self.resolution,
            states: self.states.clone(),
            initial: Some(self.initial.clone()),
            transitions: self.rules.clone(),
            success: self.success.clone(),
            traps: self.traps.clone(),
            script: self.script.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    fn build(file: ScenarioFile) -> Result<Self, EnvError> {
        let invalid = |msg: String| Err(EnvError::Invalid(msg));
        let Some(initial) = file.initial else {
            return invalid("missing `initial` state".into());
        };
        if !file.states.contains_key(&initial) {
            return invalid(format!("initial state `{initial}` is not declared"));
        }
        for (id, state) in &file.states {
            let mut seen = HashSet::new();
            for el in &state.elements {
                if !seen.insert(el.element_id.as_str()) {
                    return invalid(format!("state `{id}` declares element `{}` twice", el.element_id));
                }
                if !el.bbox.within(file.resolution) {
                    return invalid(format!("element `{}` in `{id}` lies outside the screen", el.element_id));
                }
            }
        }

        let mut table = HashMap::new();
        let mut rules = Vec::with_capacity(file.transitions.len());
        for rule in file.transitions {
            let rule = TransitionRule { trigger: rule.trigger.normalized(), ..rule };
            let name = format!("({}, {}) -> {}", rule.from, rule.trigger, rule.to);
            let Some(from) = file.states.get(&rule.from) else {
                return invalid(format!("rule {name}: unknown source state `{}`", rule.from));
            };
            if !file.states.contains_key(&rule.to) {
                return invalid(format!("rule {name}: unknown target state `{}`", rule.to));
            }
            match &rule.trigger {
                Trigger::Click(el) | Trigger::TypeInto(el) if from.element(el).is_none() => {
                    return invalid(format!("rule {name}: no element `{el}` in `{}`", rule.from));
                }
                Trigger::TypeInto(el) if from.element(el).map(|e| e.kind) != Some(ElementKind::Field) => {
                    return invalid(format!("rule {name}: `{el}` is not a field"));
                }
                _ => {}
            }
            if table.insert((rule.from.clone(), rule.trigger.clone()), rule.to.clone()).is_some() {
                return invalid(format!("rule {name}: duplicate trigger"));
            }
            rules.push(rule);
        }

        for rule in &file.success {
            if !file.states.contains_key(&rule.state) {
                return invalid(format!("success rule names unknown state `{}`", rule.state));
            }
        }
        for trap in &file.traps {
            if !file.states.contains_key(trap) {
                return invalid(format!("trap `{trap}` is not declared"));
            }
        }

        let scenario = Scenario {
            instruction: file.instruction,
            resolution: file.resolution,
            states: file.states,
            initial,
            rules,
            success: file.success,
            traps: file.traps,
            script: file.script,
            table,
        };
        scenario.check_traps()?;
        Ok(scenario)
    }

    /// Breadth-first search from every trap; no success state may be reachable.
    fn check_traps(&self) -> Result<(), EnvError> {
        let success: HashSet<&str> = self.success.iter().map(|r| r.state.as_str()).collect();
        for trap in &self.traps {
            let mut seen = HashSet::from([trap.as_str()]);
            let mut queue = VecDeque::from([trap.as_str()]);
            while let Some(state) = queue.pop_front() {
                if success.contains(state) {
                    return Err(EnvError::Invalid(format!("trap `{trap}` can reach success state `{state}`")));
                }
                for rule in self.rules.iter().filter(|r| r.from == state) {
                    if seen.insert(rule.to.as_str()) {
                        queue.push_back(rule.to.as_str());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn state(&self, id: &str) -> Result<&ScreenState, EnvError> {
        self.states.get(id).ok_or_else(|| EnvError::UnknownState(id.to_string()))
    }

    pub fn target(&self, from: &str, trigger: &Trigger) -> Option<&str> {
        self.table.get(&(from.to_string(), trigger.clone())).map(String::as_str)
    }

    pub fn is_trap(&self, state: &str) -> bool {
        self.traps.contains(state)
    }

    /// Number of scripted solution steps, if a script is attached.
    pub fn solution_len(&self) -> Option<usize> {
        self.script.as_ref().map(|s| s.solution.len())
    }

    /// A straight corridor of `steps` screens. Each screen has one button
    /// that advances and one that drops into an absorbing trap; the last
    /// screen succeeds on entry. Ships with a script for the stubs.
    pub fn linear_chain(steps: usize) -> Self {
        let resolution = Resolution { width: 1280, height: 800 };
        let mut states = BTreeMap::new();
        let mut transitions = Vec::new();
        let mut solution = BTreeMap::new();
        let mut decoys = BTreeMap::new();
        let button = |id: String, label: String, x: f64| Element {
            element_id: id,
            bbox: BoundingBox::new(x, 600.0, x + 200.0, 660.0).expect("static box"),
            label,
            kind: ElementKind::Button,
        };
        for i in 0..steps {
            let id = format!("page_{i:02}");
            let next_label = format!("Continue to page {}", i + 1);
            let trap_label = format!("Discard draft {i}");
            states.insert(
                id.clone(),
                ScreenState {
                    elements: vec![
                        Element {
                            element_id: "title".into(),
                            bbox: BoundingBox::new(40.0, 40.0, 600.0, 90.0).expect("static box"),
                            label: format!("Wizard page {i} of {steps}"),
                            kind: ElementKind::Text,
                        },
                        button("discard".into(), trap_label.clone(), 200.0),
                        button("next".into(), next_label.clone(), 900.0),
                    ],
                    typed_buffers: BTreeMap::new(),
                },
            );
            let to = format!("page_{:02}", i + 1);
            transitions.push(TransitionRule { from: id.clone(), trigger: Trigger::Click("next".into()), to });
            transitions.push(TransitionRule {
                from: id.clone(),
                trigger: Trigger::Click("discard".into()),
                to: "trap".into(),
            });
            solution.insert(id.clone(), format!("agent.click('{next_label}', 1, 'left')"));
            decoys.insert(id, vec![format!("agent.click('{trap_label}', 1, 'left')")]);
        }
        let last = format!("page_{steps:02}");
        states.insert(
            last.clone(),
            ScreenState {
                elements: vec![Element {
                    element_id: "banner".into(),
                    bbox: BoundingBox::new(40.0, 40.0, 600.0, 90.0).expect("static box"),
                    label: "Wizard complete".into(),
                    kind: ElementKind::Text,
                }],
                typed_buffers: BTreeMap::new(),
            },
        );
        states.insert(
            "trap".into(),
            ScreenState {
                elements: vec![Element {
                    element_id: "banner".into(),
                    bbox: BoundingBox::new(40.0, 40.0, 600.0, 90.0).expect("static box"),
                    label: "Draft discarded".into(),
                    kind: ElementKind::Text,
                }],
                typed_buffers: BTreeMap::new(),
            },
        );
        let file = ScenarioFile {
            instruction: format!("Finish the {steps}-page setup wizard without discarding the draft."),
            resolution,
            states,
            initial: Some("page_00".into()),
            transitions,
            success: vec![SuccessRule { state: last, buffer: None, auto: true }],
            traps: BTreeSet::from(["trap".to_string()]),
            script: Some(ScenarioScript { solution, decoys }),
        };
        Scenario::build(file).expect("generated chain is valid")
    }
}
