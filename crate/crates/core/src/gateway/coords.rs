use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Resolution};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum CoordError {
    #[error("no (x,y) pair in grounder output")]
    NoPattern,
    #[error("expected one (x,y) pair, found {count}")]
    MultiplePairs { count: usize },
    #[error("non-numeric coordinate in `{pair}`")]
    NonNumeric { pair: String },
    #[error("text around the (x,y) pair")]
    ExtraneousText,
    #[error("point ({x}, {y}) outside {width}x{height}")]
    OutOfBounds { x: String, y: String, width: u32, height: u32 },
}

const NUM: &str = r"[+-]?(?:\d+(?:\.\d+)?|\.\d+)";

static LOOSE_PAIR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(([^(),]*),([^(),]*)\)").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(&format!(r"^\s*{NUM}\s*$")).unwrap());

/// Parses grounder output of exactly the form `(x, y)`: optional
/// whitespace, decimal numbers, nothing else.
pub fn parse_point(text: &str) -> Result<(f64, f64), CoordError> {
    let pairs: Vec<_> = LOOSE_PAIR.captures_iter(text).collect();
    let caps = match pairs.as_slice() {
        [] => return Err(CoordError::NoPattern),
        [one] => one,
        many => return Err(CoordError::MultiplePairs { count: many.len() }),
    };
    let whole = caps.get(0).expect("group 0 always present");
    let (xs, ys) = (&caps[1], &caps[2]);
    if !NUMBER.is_match(xs) || !NUMBER.is_match(ys) {
        return Err(CoordError::NonNumeric { pair: whole.as_str().to_string() });
    }
    if !text[..whole.start()].trim().is_empty() || !text[whole.end()..].trim().is_empty() {
        return Err(CoordError::ExtraneousText);
    }
    let parse = |s: &str| s.trim().parse::<f64>().expect("matched the number grammar");
    Ok((parse(xs), parse(ys)))
}

/// [`parse_point`] plus a check that the point lies on the screen
/// (edges inclusive).
pub fn parse_point_within(text: &str, res: Resolution) -> Result<Point, CoordError> {
    let (x, y) = parse_point(text)?;
    let p = Point { x, y };
    if x < 0.0 || y < 0.0 || !p.within(res) {
        return Err(CoordError::OutOfBounds {
            x: x.to_string(),
            y: y.to_string(),
            width: res.width,
            height: res.height,
        });
    }
    Ok(p)
}
