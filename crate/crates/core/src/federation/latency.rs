//! Scripted network latencies for the simulated network.
//!
//! JSON lines `{"connection": "<id>", "delay_ms": <number>}`. Entries for a
//! connection apply to its messages in order; the last entry repeats.
//! Connections without entries have zero latency.

use std::collections::BTreeMap;

use serde_json::Value as Json;

use crate::time::TimeValue;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatencyScript {
    per_connection: BTreeMap<String, Vec<TimeValue>>,
    cursor: BTreeMap<String, usize>,
}

impl LatencyScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, connection: impl Into<String>, delay: TimeValue) -> &mut Self {
        self.per_connection.entry(connection.into()).or_default().push(delay);
        self
    }

    /// Same latency for every message on `connection`.
    pub fn constant(connection: impl Into<String>, delay: TimeValue) -> Self {
        let mut s = Self::new();
        s.push(connection, delay);
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut s = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| format!("latency script line {}: {m}", i + 1);
            let v: Json = serde_json::from_str(line).map_err(|e| err(&e.to_string()))?;
            let conn = v.get("connection").and_then(Json::as_str).ok_or_else(|| err("missing `connection`"))?;
            let ms = v.get("delay_ms").and_then(Json::as_f64).ok_or_else(|| err("missing `delay_ms`"))?;
            if !(ms >= 0.0 && ms.is_finite()) {
                return Err(err("`delay_ms` must be a non-negative number"));
            }
            s.push(conn, TimeValue::from_nanos((ms * 1e6).round() as i64));
        }
        Ok(s)
    }

    /// Latency of the next message on `connection`.
    pub fn next(&mut self, connection: &str) -> TimeValue {
        let Some(list) = self.per_connection.get(connection) else { return TimeValue::ZERO };
        let k = self.cursor.entry(connection.to_string()).or_insert(0);
        let d = list[(*k).min(list.len() - 1)];
        *k += 1;
        d
    }

    /// Connections the script mentions.
    pub fn connections(&self) -> impl Iterator<Item = &str> {
        self.per_connection.keys().map(String::as_str)
    }

    pub fn max(&self) -> TimeValue {
        self.per_connection.values().flatten().copied().max().unwrap_or(TimeValue::ZERO)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeats_last_entry() {
        let mut s = LatencyScript::parse(
            "{\"connection\": \"a->b\", \"delay_ms\": 3}\n{\"connection\": \"a->b\", \"delay_ms\": 7.5}",
        )
        .unwrap();
        let got: Vec<i64> = (0..4).map(|_| s.next("a->b").as_nanos()).collect();
        assert_eq!(got, vec![3_000_000, 7_500_000, 7_500_000, 7_500_000]);
        assert_eq!(s.next("x->y"), TimeValue::ZERO);
    }

    #[test]
    fn rejects_negative() {
        assert!(LatencyScript::parse("{\"connection\": \"a->b\", \"delay_ms\": -1}").is_err());
    }
}
