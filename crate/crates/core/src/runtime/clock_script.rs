//! Scripted physical-time events for reproducible runs.
//!
//! One JSON object per line:
//!
//! ```text
//! {"at_physical": "42 ms", "action": "robot.pedal.button", "value": 1}
//! {"at_physical": "30 ms", "stall": "5 ms"}
//! ```
//!
//! An `action` entry injects a physical action when the physical clock
//! reads `at_physical`. A `stall` entry makes the physical clock run ahead of
//! logical time by the given amount at that point, which is how deadline
//! lag is produced in fast mode.

use serde_json::Value as Json;
use thiserror::Error;

use crate::time::TimeValue;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    pub at: TimeValue,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntryKind {
    Inject { action: String, value: Value },
    Stall(TimeValue),
}

#[derive(Debug, Error, PartialEq)]
#[error("clock script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

/// Parses a time given either as a literal string (`"30 ms"`) or as an
/// integer number of nanoseconds.
pub fn parse_time(v: &Json) -> Result<TimeValue, String> {
    match v {
        Json::String(s) => TimeValue::parse_literal(s).map_err(|e| e.to_string()),
        Json::Number(n) => n.as_i64().map(TimeValue::from_nanos).ok_or_else(|| format!("bad time {n}")),
        other => Err(format!("bad time {other}")),
    }
}

/// Parses a script; entries come back ordered by time, stable for ties.
pub fn parse(text: &str) -> Result<Vec<ScriptEntry>, ScriptError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| ScriptError { line: line_no, message };
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let obj: Json = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let at = obj.get("at_physical").ok_or_else(|| err("missing `at_physical`".into()))?;
        let at = parse_time(at).map_err(err)?;
        if at < TimeValue::ZERO {
            return Err(err("negative `at_physical`".into()));
        }
        let kind = match (obj.get("action"), obj.get("stall")) {
            (Some(Json::String(action)), None) => {
                let value = match obj.get("value") {
                    Some(v) => Value::from_plain_json(v).map_err(|e| err(e.to_string()))?,
                    None => Value::Unit,
                };
                EntryKind::Inject { action: action.clone(), value }
            }
            (None, Some(stall)) => EntryKind::Stall(parse_time(stall).map_err(err)?),
            _ => return Err(err("need exactly one of `action` (string) or `stall`".into())),
        };
        out.push(ScriptEntry { at, kind });
    }
    out.sort_by_key(|e| e.at);
    Ok(out)
}

/// Canonical text of a script, used in trace headers.
pub fn canonical(entries: &[ScriptEntry]) -> String {
    entries
        .iter()
        .map(|e| match &e.kind {
            EntryKind::Inject { action, value } => format!("{} inject {action} {}", e.at.as_nanos(), value.to_json()),
            EntryKind::Stall(d) => format!("{} stall {}", e.at.as_nanos(), d.as_nanos()),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_orders() {
        let s = parse(
            "{\"at_physical\": \"42 ms\", \"action\": \"r.p.button\", \"value\": 3}\n\n{\"at_physical\": 1000, \"stall\": \"5 ms\"}",
        )
        .unwrap();
        assert_eq!(s[0], ScriptEntry { at: TimeValue::from_micros(1), kind: EntryKind::Stall(TimeValue::from_millis(5)) });
        assert_eq!(
            s[1],
            ScriptEntry { at: TimeValue::from_millis(42), kind: EntryKind::Inject { action: "r.p.button".into(), value: Value::Int(3) } }
        );
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse("{\"at_physical\": \"1 ms\", \"stall\": \"1 ms\"}\n{\"action\": \"x\"}").unwrap_err();
        assert_eq!(err.line, 2);
    }
}
