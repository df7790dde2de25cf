//! Parser for one-line `agent.NAME(ARGS)` action proposals.
//!
//! Arguments use a Python literal subset: quoted strings with escapes,
//! integers, floats, `True`/`False`/`None`, lists, tuples (read as lists),
//! dicts, and `name=value` keywords after the positionals.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvAction, MouseButton};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum DslError {
    #[error("no action line found")]
    NoActionLine,
    #[error("expected exactly one action line, found {count}")]
    MultipleActionLines { count: usize },
    #[error("unknown action `{name}`")]
    UnknownAction { name: String },
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("bad arguments to `{action}`: {message}")]
    Arguments { action: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    Dict(Vec<(Value, Value)>),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::None => "None",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Dict(_) => "dict",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::None => f.write_str("None"),
            Value::Bool(true) => f.write_str("True"),
            Value::Bool(false) => f.write_str("False"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => f.write_str(&quote(s)),
            Value::List(items) => {
                f.write_char('[')?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_char(']')
            }
            Value::Dict(items) => {
                f.write_char('{')?;
                for (i, (k, v)) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_char('}')
            }
        }
    }
}

/// Single-quoted Python string literal for `s`.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

/// A syntactically valid call before binding to a signature.
#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub name: String,
    pub args: Vec<Value>,
    pub kwargs: Vec<(String, Value)>,
}

struct Parser<'a> {
    src: &'a [char],
    pos: usize,
}

type PResult<T> = Result<T, DslError>;

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(DslError::Syntax { column: self.pos, message: message.into() })
    }

    fn peek(&self) -> Option<char> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> PResult<()> {
        if self.eat(c) {
            Ok(())
        } else {
            match self.peek() {
                Some(got) => self.err(format!("expected `{c}`, found `{got}`")),
                None => self.err(format!("expected `{c}`, found end of line")),
            }
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        if !self.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            return None;
        }
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Some(self.src[start..self.pos].iter().collect())
    }

    fn call(&mut self) -> PResult<Call> {
        self.skip_ws();
        match self.ident() {
            Some(recv) if recv == "agent" => {}
            _ => return self.err("expected `agent.`"),
        }
        if self.peek() != Some('.') {
            return self.err("expected `.` after `agent`");
        }
        self.pos += 1;
        let Some(name) = self.ident() else {
            return self.err("expected action name");
        };
        self.expect('(')?;
        let mut args = Vec::new();
        let mut kwargs: Vec<(String, Value)> = Vec::new();
        loop {
            if self.eat(')') {
                break;
            }
            let save = self.pos;
            let keyword = match self.ident() {
                Some(id) if self.eat('=') => Some(id),
                _ => {
                    self.pos = save;
                    None
                }
            };
            let value_pos = self.pos;
            let value = self.value()?;
            match keyword {
                Some(k) => {
                    if kwargs.iter().any(|(n, _)| *n == k) {
                        self.pos = save;
                        return self.err(format!("keyword `{k}` repeated"));
                    }
                    kwargs.push((k, value));
                }
                None if !kwargs.is_empty() => {
                    self.pos = value_pos;
                    return self.err("positional argument follows keyword argument");
                }
                None => args.push(value),
            }
            if self.eat(',') {
                continue;
            }
            self.expect(')')?;
            break;
        }
        self.skip_ws();
        match self.peek() {
            None | Some('#') => Ok(Call { name, args, kwargs }),
            Some(c) => self.err(format!("unexpected `{c}` after call")),
        }
    }

    fn value(&mut self) -> PResult<Value> {
        self.skip_ws();
        match self.peek() {
            Some('\'' | '"') => self.string().map(Value::Str),
            Some('[') => {
                self.pos += 1;
                self.sequence(']').map(Value::List)
            }
            Some('(') => {
                self.pos += 1;
                self.sequence(')').map(Value::List)
            }
            Some('{') => {
                self.pos += 1;
                self.dict()
            }
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                match self.ident().as_deref() {
                    Some("True") => Ok(Value::Bool(true)),
                    Some("False") => Ok(Value::Bool(false)),
                    Some("None") => Ok(Value::None),
                    Some(other) => {
                        self.pos = start;
                        self.err(format!("unsupported name `{other}`"))
                    }
                    None => unreachable!("peek saw an identifier start"),
                }
            }
            Some(c) => self.err(format!("unexpected `{c}`")),
            None => self.err("unexpected end of line"),
        }
    }

    fn sequence(&mut self, close: char) -> PResult<Vec<Value>> {
        let mut items = Vec::new();
        loop {
            if self.eat(close) {
                return Ok(items);
            }
            items.push(self.value()?);
            if !self.eat(',') {
                self.expect(close)?;
                return Ok(items);
            }
        }
    }

    fn dict(&mut self) -> PResult<Value> {
        let mut items = Vec::new();
        loop {
            if self.eat('}') {
                return Ok(Value::Dict(items));
            }
            let k = self.value()?;
            self.expect(':')?;
            let v = self.value()?;
            items.push((k, v));
            if !self.eat(',') {
                self.expect('}')?;
                return Ok(Value::Dict(items));
            }
        }
    }

    fn number(&mut self) -> PResult<Value> {
        let start = self.pos;
        if matches!(self.peek(), Some('-' | '+')) {
            self.pos += 1;
        }
        let mut float = false;
        let mut digits = 0;
        while let Some(c) = self.peek() {
            match c {
                '0'..='9' => digits += 1,
                '.' if !float => float = true,
                'e' | 'E' if digits > 0 => {
                    float = true;
                    self.pos += 1;
                    if matches!(self.peek(), Some('-' | '+')) {
                        self.pos += 1;
                    }
                    if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        return self.err("malformed exponent");
                    }
                    continue;
                }
                _ => break,
            }
            self.pos += 1;
        }
        let text: String = self.src[start..self.pos].iter().collect();
        if digits == 0 {
            self.pos = start;
            return self.err(format!("malformed number `{text}`"));
        }
        let parsed = if float {
            text.parse::<f64>().ok().filter(|x| x.is_finite()).map(Value::Float)
        } else {
            text.parse::<i64>().ok().map(Value::Int)
        };
        match parsed {
            Some(v) => Ok(v),
            None => {
                self.pos = start;
                self.err(format!("number `{text}` out of range"))
            }
        }
    }

    fn string(&mut self) -> PResult<String> {
        let quote = self.peek().expect("caller saw a quote");
        let open = self.pos;
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                self.pos = open;
                return self.err("unterminated string");
            };
            self.pos += 1;
            if c == quote {
                return Ok(out);
            }
            if c != '\\' {
                out.push(c);
                continue;
            }
            let Some(e) = self.peek() else {
                self.pos = open;
                return self.err("unterminated string");
            };
            self.pos += 1;
            match e {
                '\\' => out.push('\\'),
                '\'' => out.push('\''),
                '"' => out.push('"'),
                'n' => out.push('\n'),
                'r' => out.push('\r'),
                't' => out.push('\t'),
                '0' => out.push('\0'),
                'x' => out.push(self.hex_escape(2)?),
                'u' => out.push(self.hex_escape(4)?),
                'U' => out.push(self.hex_escape(8)?),
                // unknown escapes are kept verbatim, as Python does
                other => {
                    out.push('\\');
                    out.push(other);
                }
            }
        }
    }

    fn hex_escape(&mut self, len: usize) -> PResult<char> {
        let start = self.pos;
        let end = start + len;
        if end > self.src.len() {
            return self.err("truncated escape");
        }
        let text: String = self.src[start..end].iter().collect();
        let code = u32::from_str_radix(&text, 16).ok().and_then(char::from_u32);
        match code {
            Some(c) => {
                self.pos = end;
                Ok(c)
            }
            None => self.err(format!("bad escape `{text}`")),
        }
    }
}

/// Parses a single action line into a [`Call`]. Columns in errors are
/// 0-based character offsets into `line`.
pub fn parse_call(line: &str) -> Result<Call, DslError> {
    let chars: Vec<char> = line.chars().collect();
    Parser { src: &chars, pos: 0 }.call()
}

/// Finds the single `agent.` line in a model reply. Code fences and
/// surrounding prose are ignored; a fence on the same line as the call is
/// stripped.
pub fn extract_action_line(raw: &str) -> Result<String, DslError> {
    let lines: Vec<&str> = raw
        .lines()
        .map(|l| {
            let l = l.trim();
            let l = l.strip_prefix("```python").or_else(|| l.strip_prefix("```")).unwrap_or(l);
            let l = l.strip_suffix("```").unwrap_or(l);
            l.trim()
        })
        .filter(|l| l.starts_with("agent."))
        .collect();
    match lines.as_slice() {
        [] => Err(DslError::NoActionLine),
        [one] => Ok((*one).to_string()),
        many => Err(DslError::MultipleActionLines { count: many.len() }),
    }
}

/// Element-description actions that need a grounded point before execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundingTarget {
    Click { description: String, count: u32, button: MouseButton, hold_keys: Vec<String> },
    Type { description: String, text: String, overwrite: bool, enter: bool },
    Scroll { description: String, clicks: i64, shift: bool },
    Drag { start: String, end: String, hold_keys: Vec<String> },
}

impl GroundingTarget {
    /// Element descriptions to locate, in order.
    pub fn descriptions(&self) -> Vec<&str> {
        match self {
            GroundingTarget::Click { description, .. }
            | GroundingTarget::Type { description, .. }
            | GroundingTarget::Scroll { description, .. } => vec![description],
            GroundingTarget::Drag { start, end, .. } => vec![start, end],
        }
    }

    /// Binds grounded points (one per description) into an executable action.
    pub fn resolve(&self, points: &[crate::geometry::Point]) -> Option<EnvAction> {
        Some(match (self, points) {
            (GroundingTarget::Click { count, button, .. }, [at]) => {
                EnvAction::Click { at: *at, button: *button, count: *count }
            }
            (GroundingTarget::Type { text, overwrite, enter, .. }, [at]) => {
                EnvAction::Type { at: Some(*at), text: text.clone(), overwrite: *overwrite, enter: *enter }
            }
            (GroundingTarget::Scroll { clicks, .. }, [at]) => EnvAction::Scroll { at: *at, amount: *clicks },
            (GroundingTarget::Drag { .. }, [from, to]) => EnvAction::Drag { from: *from, to: *to },
            _ => return None,
        })
    }
}

/// A bound proposal: executable now, or waiting on the grounder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "snake_case")]
pub enum ParsedAction {
    Direct {
        action: EnvAction,
    },
    Grounded {
        target: GroundingTarget,
    },
    /// Recognised call with no simulated effect; executes as a no-op.
    Unsupported {
        name: String,
        args: Vec<(String, Value)>,
    },
}

impl ParsedAction {
    pub fn needs_grounding(&self) -> bool {
        matches!(self, ParsedAction::Grounded { .. })
    }

    /// Canonical single-line form; re-parsing it yields `self`.
    pub fn to_line(&self) -> String {
        let list = |v: &[String]| Value::List(v.iter().cloned().map(Value::Str).collect()).to_string();
        let bool_lit = |b: bool| Value::Bool(b).to_string();
        match self {
            ParsedAction::Grounded { target } => match target {
                GroundingTarget::Click { description, count, button, hold_keys } => {
                    let mut s = format!("agent.click({}, {count}, {}", quote(description), quote(button_name(*button)));
                    if !hold_keys.is_empty() {
                        let _ = write!(s, ", hold_keys={}", list(hold_keys));
                    }
                    s + ")"
                }
                GroundingTarget::Type { description, text, overwrite, enter } => format!(
                    "agent.type({}, {}, overwrite={}, enter={})",
                    quote(description),
                    quote(text),
                    bool_lit(*overwrite),
                    bool_lit(*enter)
                ),
                GroundingTarget::Scroll { description, clicks, shift } => {
                    format!("agent.scroll({}, {clicks}, shift={})", quote(description), bool_lit(*shift))
                }
                GroundingTarget::Drag { start, end, hold_keys } => {
                    let mut s = format!("agent.drag_and_drop({}, {}", quote(start), quote(end));
                    if !hold_keys.is_empty() {
                        let _ = write!(s, ", hold_keys={}", list(hold_keys));
                    }
                    s + ")"
                }
            },
            ParsedAction::Direct { action } => match action {
                EnvAction::Done => "agent.done()".into(),
                EnvAction::Fail => "agent.fail()".into(),
                EnvAction::Hotkey { keys } => format!("agent.hotkey({})", list(keys)),
                EnvAction::Wait { seconds } => format!("agent.wait({})", Value::Float(*seconds)),
                EnvAction::Open { name } => format!("agent.open({})", quote(name)),
                EnvAction::Type { at: None, text, overwrite, enter } => format!(
                    "agent.type(text={}, overwrite={}, enter={})",
                    quote(text),
                    bool_lit(*overwrite),
                    bool_lit(*enter)
                ),
                // point-carrying actions only arise after grounding
                other => format!("agent.wait(0.0)  # unrenderable {other:?}"),
            },
            ParsedAction::Unsupported { name, args } => {
                let parts: Vec<String> = args.iter().map(|(k, v)| format!("{k}={v}")).collect();
                format!("agent.{name}({})", parts.join(", "))
            }
        }
    }

    /// The environment action for non-grounded proposals.
    pub fn direct_action(&self) -> Option<EnvAction> {
        match self {
            ParsedAction::Direct { action } => Some(action.clone()),
            ParsedAction::Unsupported { name, .. } => Some(EnvAction::Unsupported { name: name.clone() }),
            ParsedAction::Grounded { .. } => None,
        }
    }
}

fn button_name(b: MouseButton) -> &'static str {
    match b {
        MouseButton::Left => "left",
        MouseButton::Middle => "middle",
        MouseButton::Right => "right",
    }
}

/// Action names and their parameters in declaration order; `true` marks
/// a required parameter.
pub const ACTIONS: &[(&str, &[(&str, bool)])] = &[
    ("click", &[("instruction", true), ("num_clicks", false), ("button_type", false), ("hold_keys", false)]),
    ("done", &[("return_value", false)]),
    ("drag_and_drop", &[("starting_description", true), ("ending_description", true), ("hold_keys", false)]),
    ("fail", &[]),
    ("highlight_text_span", &[("starting_phrase", true), ("ending_phrase", true)]),
    ("hold_and_press", &[("hold_keys", true), ("press_keys", true)]),
    ("hotkey", &[("keys", true)]),
    ("open", &[("app_or_filename", true)]),
    ("scroll", &[("instruction", true), ("clicks", true), ("shift", false)]),
    ("set_cell_values", &[("cell_values", true), ("app_name", true), ("sheet_name", true)]),
    ("switch_applications", &[("app_code", true)]),
    ("type", &[("element_description", false), ("text", false), ("overwrite", false), ("enter", false)]),
    ("wait", &[("time", true)]),
];

struct Bound<'c> {
    action: &'c str,
    slots: Vec<(&'static str, Option<Value>)>,
}

impl Bound<'_> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T, DslError> {
        Err(DslError::Arguments { action: self.action.to_string(), message: message.into() })
    }

    fn take(&mut self, name: &str) -> Option<Value> {
        self.slots.iter_mut().find(|(n, _)| *n == name).and_then(|(_, v)| v.take())
    }

    fn string(&mut self, name: &str) -> Result<String, DslError> {
        match self.take(name) {
            Some(Value::Str(s)) => Ok(s),
            Some(v) => self.fail(format!("`{name}` must be a string, got {}", v.type_name())),
            None => self.fail(format!("missing `{name}`")),
        }
    }

    fn description(&mut self, name: &str) -> Result<String, DslError> {
        let s = self.string(name)?;
        if s.trim().is_empty() {
            return self.fail(format!("`{name}` must not be empty"));
        }
        Ok(s)
    }

    fn opt_string(&mut self, name: &str) -> Result<Option<String>, DslError> {
        match self.take(name) {
            None | Some(Value::None) => Ok(None),
            Some(Value::Str(s)) => Ok(Some(s)),
            Some(v) => self.fail(format!("`{name}` must be a string or None, got {}", v.type_name())),
        }
    }

    fn int(&mut self, name: &str, default: i64) -> Result<i64, DslError> {
        match self.take(name) {
            None => Ok(default),
            Some(Value::Int(i)) => Ok(i),
            Some(v) => self.fail(format!("`{name}` must be an int, got {}", v.type_name())),
        }
    }

    fn boolean(&mut self, name: &str) -> Result<bool, DslError> {
        match self.take(name) {
            None => Ok(false),
            Some(Value::Bool(b)) => Ok(b),
            Some(v) => self.fail(format!("`{name}` must be a bool, got {}", v.type_name())),
        }
    }

    fn keys(&mut self, name: &str, required: bool) -> Result<Vec<String>, DslError> {
        match self.take(name) {
            None if !required => Ok(Vec::new()),
            None => self.fail(format!("missing `{name}`")),
            Some(Value::List(items)) => items
                .into_iter()
                .map(|v| match v {
                    Value::Str(s) if !s.is_empty() => Ok(s),
                    other => self.fail(format!("`{name}` entries must be non-empty strings, got {other}")),
                })
                .collect(),
            Some(v) => self.fail(format!("`{name}` must be a list, got {}", v.type_name())),
        }
    }

    fn rest(self) -> Vec<(String, Value)> {
        self.slots.into_iter().filter_map(|(n, v)| v.map(|v| (n.to_string(), v))).collect()
    }
}

fn bind(call: &Call) -> Result<Bound<'_>, DslError> {
    let Some((_, params)) = ACTIONS.iter().find(|(n, _)| *n == call.name) else {
        return Err(DslError::UnknownAction { name: call.name.clone() });
    };
    let mut bound = Bound { action: &call.name, slots: params.iter().map(|(n, _)| (*n, None)).collect() };
    if call.args.len() > params.len() {
        return bound.fail(format!("takes at most {} arguments, got {}", params.len(), call.args.len()));
    }
    for (slot, v) in bound.slots.iter_mut().zip(&call.args) {
        slot.1 = Some(v.clone());
    }
    for (k, v) in &call.kwargs {
        let Some(slot) = bound.slots.iter_mut().find(|(n, _)| n == k) else {
            return bound.fail(format!("unexpected keyword `{k}`"));
        };
        if slot.1.is_some() {
            return bound.fail(format!("`{k}` given twice"));
        }
        slot.1 = Some(v.clone());
    }
    for ((name, required), (_, v)) in params.iter().zip(&bound.slots) {
        if *required && v.is_none() {
            return bound.fail(format!("missing `{name}`"));
        }
    }
    Ok(bound)
}

/// Binds a call to its signature and routes it.
pub fn interpret(call: &Call) -> Result<ParsedAction, DslError> {
    let mut b = bind(call)?;
    let direct = |action| Ok(ParsedAction::Direct { action });
    match call.name.as_str() {
        "click" => {
            let description = b.description("instruction")?;
            let count = b.int("num_clicks", 1)?;
            if !(1..=i64::from(u32::MAX)).contains(&count) {
                return b.fail(format!("`num_clicks` must be at least 1, got {count}"));
            }
            let button = match b.take("button_type") {
                None => MouseButton::Left,
                Some(Value::Str(s)) => match s.as_str() {
                    "left" => MouseButton::Left,
                    "middle" => MouseButton::Middle,
                    "right" => MouseButton::Right,
                    other => return b.fail(format!("unknown button `{other}`")),
                },
                Some(v) => return b.fail(format!("`button_type` must be a string, got {}", v.type_name())),
            };
            let hold_keys = b.keys("hold_keys", false)?;
            Ok(ParsedAction::Grounded {
                target: GroundingTarget::Click { description, count: count as u32, button, hold_keys },
            })
        }
        "drag_and_drop" => {
            let start = b.description("starting_description")?;
            let end = b.description("ending_description")?;
            let hold_keys = b.keys("hold_keys", false)?;
            Ok(ParsedAction::Grounded { target: GroundingTarget::Drag { start, end, hold_keys } })
        }
        "scroll" => {
            let description = b.description("instruction")?;
            let clicks = match b.take("clicks") {
                Some(Value::Int(i)) => i,
                Some(v) => return b.fail(format!("`clicks` must be an int, got {}", v.type_name())),
                None => unreachable!("required slot checked in bind"),
            };
            let shift = b.boolean("shift")?;
            Ok(ParsedAction::Grounded { target: GroundingTarget::Scroll { description, clicks, shift } })
        }
        "type" => {
            let element = b.opt_string("element_description")?;
            let text = match b.take("text") {
                None => String::new(),
                Some(Value::Str(s)) => s,
                Some(v) => return b.fail(format!("`text` must be a string, got {}", v.type_name())),
            };
            let overwrite = b.boolean("overwrite")?;
            let enter = b.boolean("enter")?;
            match element {
                Some(description) if !description.trim().is_empty() => {
                    Ok(ParsedAction::Grounded { target: GroundingTarget::Type { description, text, overwrite, enter } })
                }
                Some(_) => b.fail("`element_description` must not be empty"),
                None => direct(EnvAction::Type { at: None, text, overwrite, enter }),
            }
        }
        "done" => direct(EnvAction::Done),
        "fail" => direct(EnvAction::Fail),
        "hotkey" => {
            let keys = b.keys("keys", true)?;
            if keys.is_empty() {
                return b.fail("`keys` must not be empty");
            }
            direct(EnvAction::Hotkey { keys })
        }
        "hold_and_press" => {
            // modelled as one chord: held keys followed by the pressed ones
            let mut keys = b.keys("hold_keys", true)?;
            keys.extend(b.keys("press_keys", true)?);
            if keys.is_empty() {
                return b.fail("no keys given");
            }
            direct(EnvAction::Hotkey { keys })
        }
        "open" => {
            let name = b.description("app_or_filename")?;
            direct(EnvAction::Open { name })
        }
        "wait" => {
            let seconds = match b.take("time") {
                Some(Value::Int(i)) => i as f64,
                Some(Value::Float(x)) => x,
                Some(v) => return b.fail(format!("`time` must be a number, got {}", v.type_name())),
                None => unreachable!("required slot checked in bind"),
            };
            if !(seconds >= 0.0) {
                return b.fail(format!("`time` must be non-negative, got {seconds}"));
            }
            direct(EnvAction::Wait { seconds })
        }
        "highlight_text_span" | "set_cell_values" | "switch_applications" => {
            let name = call.name.clone();
            Ok(ParsedAction::Unsupported { name, args: b.rest() })
        }
        other => unreachable!("`{other}` is in the action table but not routed"),
    }
}

/// Extracts, parses and binds the single action line in a model reply.
pub fn parse_action(raw: &str) -> Result<ParsedAction, DslError> {
    let line = extract_action_line(raw)?;
    interpret(&parse_call(&line)?)
}
