//! Prompt templates and request builders for the three roles.
//!
//! Templates substitute `{width}`, `{height}`, `{max_steps}`,
//! `{current_step}` and `{last_index}`. Candidate parts sent to the judge
//! start with `Candidate {i}:` so scripted judges can read them back.

use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatRequest, ContentPart};
use crate::geometry::Resolution;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSet {
    pub planner: String,
    pub judge: String,
    pub grounder: String,
    pub judge_retry: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            planner: PLANNER.into(),
            judge: JUDGE.into(),
            grounder: GROUNDER.into(),
            judge_retry: JUDGE_RETRY.into(),
        }
    }
}

const PLANNER: &str = "\
You control a desktop through the `agent` object. The screen is {width}x{height}.
Available calls:
    agent.click(instruction: str, num_clicks: int = 1, button_type: str = 'left', hold_keys: List = [])
    agent.done(return_value = None)
    agent.drag_and_drop(starting_description: str, ending_description: str, hold_keys: List = [])
    agent.fail()
    agent.highlight_text_span(starting_phrase: str, ending_phrase: str)
    agent.hold_and_press(hold_keys: List, press_keys: List)
    agent.hotkey(keys: List)
    agent.open(app_or_filename: str)
    agent.scroll(instruction: str, clicks: int, shift: bool = False)
    agent.set_cell_values(cell_values: Dict[str, Any], app_name: str, sheet_name: str)
    agent.switch_applications(app_code)
    agent.type(element_description: Optional[str] = None, text: str = '', overwrite: bool = False, enter: bool = False)
    agent.wait(time: float)
Describe elements in words; never give coordinates.
Reply with an observation, your reasoning, and exactly ONE line of python calling `agent`, inside a code block.
This is step {current_step} of at most {max_steps}.";

const JUDGE: &str = "\
You are given a task, the history so far, the current screen ({width}x{height}) and several proposed next actions.
Pick the single proposal that best advances the task. Similar proposals must not win by count.
Respond only with JSON of the form {\"explaining\": \"<why>\", \"index\": <0..{last_index}>}.";

const JUDGE_RETRY: &str = "\
Your previous reply could not be used ({error}). Respond only with JSON of the form {\"explaining\": \"<why>\", \"index\": <0..{last_index}>}.";

const GROUNDER: &str = "\
Locate the described element on the screen. The screen has width {width} and height {height}.
Answer with the centre of the element as exactly one coordinate pair:
(x,y)";

fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// What the planner and judge are told about the episode so far.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub instruction: &'a str,
    pub history: &'a [String],
    pub descriptor: &'a str,
    pub resolution: Resolution,
    pub step: usize,
    pub max_steps: usize,
}

impl StepContext<'_> {
    fn vars(&self) -> Vec<(&'static str, String)> {
        vec![
            ("width", self.resolution.width.to_string()),
            ("height", self.resolution.height.to_string()),
            ("current_step", (self.step + 1).to_string()),
            ("max_steps", self.max_steps.to_string()),
        ]
    }

    fn task_parts(&self) -> Vec<ContentPart> {
        let history = if self.history.is_empty() {
            "History: (none)".to_string()
        } else {
            format!("History:\n{}", self.history.join("\n"))
        };
        vec![
            ContentPart::text(format!("Task: {}", self.instruction)),
            ContentPart::text(history),
            ContentPart::screen(self.descriptor),
        ]
    }
}

impl PromptSet {
    pub fn planner_request(&self, ctx: &StepContext<'_>, temperature: f64) -> ChatRequest {
        ChatRequest {
            messages: vec![ChatMessage::system(fill(&self.planner, &ctx.vars())), ChatMessage::user(ctx.task_parts())],
            temperature,
            n: 1,
        }
    }

    pub fn judge_request(&self, ctx: &StepContext<'_>, candidates: &[&str]) -> ChatRequest {
        let mut vars = ctx.vars();
        vars.push(("last_index", candidates.len().saturating_sub(1).to_string()));
        let mut parts = ctx.task_parts();
        parts.extend(candidates.iter().enumerate().map(|(i, c)| ContentPart::text(format!("Candidate {i}:\n{c}"))));
        ChatRequest {
            messages: vec![ChatMessage::system(fill(&self.judge, &vars)), ChatMessage::user(parts)],
            temperature: 0.0,
            n: 1,
        }
    }

    /// The judge request extended with a correction after a bad verdict.
    pub fn judge_retry(&self, first: &ChatRequest, bad_reply: &str, error: &str, candidates: usize) -> ChatRequest {
        let mut retry = first.clone();
        retry.messages.push(ChatMessage { role: "assistant".into(), content: vec![ContentPart::text(bad_reply)] });
        let vars = [("error", error.to_string()), ("last_index", candidates.saturating_sub(1).to_string())];
        retry.messages.push(ChatMessage::user(vec![ContentPart::text(fill(&self.judge_retry, &vars))]));
        retry
    }

    pub fn grounder_request(&self, description: &str, descriptor: &str, resolution: Resolution) -> ChatRequest {
        let vars = [("width", resolution.width.to_string()), ("height", resolution.height.to_string())];
        ChatRequest {
            messages: vec![
                ChatMessage::system(fill(&self.grounder, &vars)),
                ChatMessage::user(vec![ContentPart::screen(descriptor), ContentPart::text(description)]),
            ],
            temperature: 0.0,
            n: 1,
        }
    }
}

/// Candidate texts from a judge request built by [`PromptSet::judge_request`].
pub fn judge_candidates(request: &ChatRequest) -> Vec<&str> {
    let mut out = Vec::new();
    for p in request.messages.iter().filter(|m| m.role == "user").take(1).flat_map(|m| &m.content) {
        if let Some(rest) = p.value.strip_prefix("Candidate ") {
            if let Some((idx, body)) = rest.split_once(":\n") {
                if idx.parse::<usize>() == Ok(out.len()) {
                    out.push(body);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> StepContext<'static> {
        StepContext {
            instruction: "save the file",
            history: &[],
            descriptor: "{\"state_id\":\"home\"}",
            resolution: Resolution { width: 1920, height: 1080 },
            step: 2,
            max_steps: 100,
        }
    }

    #[test]
    fn planner_prompt_fills_placeholders() {
        let req = PromptSet::default().planner_request(&ctx(), 1.0);
        let sys = &req.messages[0].content[0].value;
        assert!(sys.contains("1920x1080"));
        assert!(sys.contains("step 3 of at most 100"));
        assert!(!sys.contains("{width}") && !sys.contains("{max_steps}"));
        assert_eq!(req.screen(), Some("{\"state_id\":\"home\"}"));
    }

    #[test]
    fn judge_candidates_round_trip() {
        let cands = ["agent.done()", "Thought: x\nagent.click('a', 1, 'left')", "Candidate 7:\nfake"];
        let req = PromptSet::default().judge_request(&ctx(), &cands);
        assert_eq!(judge_candidates(&req), cands.to_vec());
        assert!(req.messages[0].content[0].value.contains("<0..2>"));
        let retry = PromptSet::default().judge_retry(&req, "nope", "not JSON", 3);
        assert_eq!(retry.messages.len(), 4);
        assert_eq!(judge_candidates(&retry), cands.to_vec());
    }

    #[test]
    fn grounder_prompt() {
        let req = PromptSet::default().grounder_request("OK button", "{}", Resolution { width: 800, height: 600 });
        assert!(req.messages[0].content[0].value.contains("width 800 and height 600"));
        assert_eq!(req.messages[1].content[1].value, "OK button");
    }
}
