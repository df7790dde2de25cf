use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompts::{PromptSet, StepContext};
use super::{complete_one, ChatEndpoint, RequestMeta, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub explaining: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum VerdictError {
    #[error("verdict is not valid JSON: {message}")]
    NotJson { message: String },
    #[error("verdict is not a JSON object")]
    NotObject,
    #[error("verdict lacks key `{key}`")]
    MissingKey { key: String },
    #[error("verdict has unexpected key `{key}`")]
    ExtraKey { key: String },
    #[error("verdict key `{key}` has the wrong type")]
    WrongType { key: String },
    #[error("verdict index {index} outside 0..{len}")]
    OutOfRange { index: i64, len: usize },
}

/// Strips one surrounding Markdown code fence, with or without a
/// language tag.
fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(body) = t.strip_prefix("```") else {
        return t;
    };
    let body = body.strip_suffix("```").unwrap_or(body);
    let body = match body.split_once('\n') {
        Some((tag, rest)) if tag.trim().chars().all(|c| c.is_ascii_alphanumeric()) => rest,
        _ => body,
    };
    body.trim()
}

/// Parses a verdict object with exactly the keys `explaining` (string)
/// and `index` (integer in `0..candidates`).
pub fn parse_verdict(text: &str, candidates: usize) -> Result<JudgeVerdict, VerdictError> {
    let value: serde_json::Value =
        serde_json::from_str(strip_fence(text)).map_err(|e| VerdictError::NotJson { message: e.to_string() })?;
    let obj = value.as_object().ok_or(VerdictError::NotObject)?;
    for key in ["explaining", "index"] {
        if !obj.contains_key(key) {
            return Err(VerdictError::MissingKey { key: key.into() });
        }
    }
    if let Some(extra) = obj.keys().find(|k| *k != "explaining" && *k != "index") {
        return Err(VerdictError::ExtraKey { key: extra.clone() });
    }
    let explaining = obj["explaining"].as_str().ok_or(VerdictError::WrongType { key: "explaining".into() })?;
    let index = obj["index"].as_i64().ok_or(VerdictError::WrongType { key: "index".into() })?;
    if index < 0 || index as u64 >= candidates as u64 {
        return Err(VerdictError::OutOfRange { index, len: candidates });
    }
    Ok(JudgeVerdict { explaining: explaining.to_string(), index: index as usize })
}

/// Result of judging one step's candidates. `chosen` indexes the list
/// that was judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub chosen: usize,
    pub verdict: Option<JudgeVerdict>,
    /// Set when the verdict was unusable twice and index 0 was taken.
    pub flagged: bool,
    pub calls: u32,
    pub errors: Vec<String>,
}

/// Asks the judge to pick among `candidates`. A single candidate is
/// returned without a call. An unusable reply earns one re-prompt; a
/// second failure falls back to index 0 and flags the outcome.
pub fn judge_select(
    endpoint: &dyn ChatEndpoint,
    prompts: &PromptSet,
    ctx: &StepContext<'_>,
    candidates: &[&str],
) -> JudgeOutcome {
    if candidates.len() <= 1 {
        return JudgeOutcome { chosen: 0, verdict: None, flagged: false, calls: 0, errors: Vec::new() };
    }
    let first = prompts.judge_request(ctx, candidates);
    let mut request = first.clone();
    let mut errors = Vec::new();
    for attempt in 0..2u32 {
        let meta = RequestMeta { role: Role::Judge, step: ctx.step, slot: 0, attempt };
        let reply = complete_one(endpoint, &request, &meta);
        let (text, err) = match reply {
            Ok(text) => match parse_verdict(&text, candidates.len()) {
                Ok(v) => {
                    return JudgeOutcome {
                        chosen: v.index,
                        verdict: Some(v),
                        flagged: false,
                        calls: attempt + 1,
                        errors,
                    }
                }
                Err(e) => (text, e.to_string()),
            },
            Err(e) => (String::new(), e.to_string()),
        };
        request = prompts.judge_retry(&first, &text, &err, candidates.len());
        errors.push(err);
    }
    JudgeOutcome { chosen: 0, verdict: None, flagged: true, calls: 2, errors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::stubs::CannedEndpoint;
    use crate::geometry::Resolution;

    #[test]
    fn well_formed() {
        let v = parse_verdict(r#"{"explaining":"direct progress","index":2}"#, 3).unwrap();
        assert_eq!(v, JudgeVerdict { explaining: "direct progress".into(), index: 2 });
        let fenced = "```json\n{\n  \"explaining\": \"ok\",\n  \"index\": 0\n}\n```";
        assert_eq!(parse_verdict(fenced, 1).unwrap().index, 0);
    }

    #[test]
    fn malformed() {
        type Check = fn(&VerdictError) -> bool;
        let cases: [(&str, Check); 8] = [
            ("index: 2", |e| matches!(e, VerdictError::NotJson { .. })),
            ("[1]", |e| matches!(e, VerdictError::NotObject)),
            (r#"{"index":1}"#, |e| matches!(e, VerdictError::MissingKey { key } if key == "explaining")),
            (r#"{"explaining":"x"}"#, |e| matches!(e, VerdictError::MissingKey { key } if key == "index")),
            (r#"{"explaining":"x","index":1,"score":3}"#, |e| matches!(e, VerdictError::ExtraKey { .. })),
            (r#"{"explaining":"x","index":"1"}"#, |e| matches!(e, VerdictError::WrongType { .. })),
            (r#"{"explaining":"x","index":1.5}"#, |e| matches!(e, VerdictError::WrongType { .. })),
            (r#"{"explaining":"x","index":9}"#, |e| matches!(e, VerdictError::OutOfRange { index: 9, len: 3 })),
        ];
        for (text, check) in cases {
            let err = parse_verdict(text, 3).unwrap_err();
            assert!(check(&err), "{text}: {err:?}");
        }
        assert!(matches!(parse_verdict(r#"{"explaining":"x","index":-1}"#, 3), Err(VerdictError::OutOfRange { .. })));
    }

    fn ctx() -> StepContext<'static> {
        StepContext {
            instruction: "t",
            history: &[],
            descriptor: "{}",
            resolution: Resolution { width: 10, height: 10 },
            step: 0,
            max_steps: 5,
        }
    }

    #[test]
    fn single_candidate_short_circuits() {
        let ep = CannedEndpoint::new(Vec::<String>::new());
        let out = judge_select(&ep, &PromptSet::default(), &ctx(), &["agent.done()"]);
        assert_eq!((out.chosen, out.calls, out.flagged), (0, 0, false));
        assert_eq!(ep.calls(), 0);
    }

    #[test]
    fn reprompt_then_accept() {
        let ep = CannedEndpoint::new(["garbage", r#"{"explaining":"b","index":1}"#]);
        let out = judge_select(&ep, &PromptSet::default(), &ctx(), &["a", "b", "c"]);
        assert_eq!((out.chosen, out.calls, out.flagged), (1, 2, false));
        assert_eq!(out.errors.len(), 1);
    }

    #[test]
    fn out_of_range_twice_falls_back() {
        let bad = r#"{"index":9}"#;
        let ep = CannedEndpoint::new([bad, bad]);
        let out = judge_select(&ep, &PromptSet::default(), &ctx(), &["a", "b", "c"]);
        assert_eq!((out.chosen, out.calls, out.flagged), (0, 2, true));
        assert!(out.verdict.is_none());
    }
}
