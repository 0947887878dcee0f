//! Canonical run traces and golden-trace comparison.
//!
//! A trace file is JSON lines: a header on line 1 and one record per line
//! after it. Records never contain physical-clock readings; those go to a
//! `.phys.jsonl` sidecar so two runs of the same program with the same
//! script compare byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::time::{Tag, TimeValue};
use crate::value::Value;

pub const FORMAT: &str = "rcl-trace/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordKind {
    Startup,
    Reaction,
    DeadlineHandler,
    StpFault,
    Shutdown,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Startup => "startup",
            RecordKind::Reaction => "reaction",
            RecordKind::DeadlineHandler => "deadline_handler",
            RecordKind::StpFault => "stp_fault",
            RecordKind::Shutdown => "shutdown",
        }
    }

    fn parse(s: &str) -> Option<RecordKind> {
        Some(match s {
            "startup" => RecordKind::Startup,
            "reaction" => RecordKind::Reaction,
            "deadline_handler" => RecordKind::DeadlineHandler,
            "stp_fault" => RecordKind::StpFault,
            "shutdown" => RecordKind::Shutdown,
            _ => return None,
        })
    }

    // Startup markers come first within a tag and shutdown markers last.
    fn phase(self) -> u8 {
        match self {
            RecordKind::Startup => 0,
            RecordKind::Shutdown => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub tag: Tag,
    pub level: usize,
    pub kind: RecordKind,
    /// Qualified reaction name, or `startup`/`shutdown` for markers.
    pub subject: String,
    /// Every trigger and source of the reaction; `None` when absent.
    pub inputs: BTreeMap<String, Option<Value>>,
    /// Ports written and actions scheduled.
    pub outputs: BTreeMap<String, Value>,
    pub note: Option<String>,
}

impl TraceRecord {
    pub fn marker(kind: RecordKind, tag: Tag) -> Self {
        TraceRecord {
            tag,
            level: 0,
            kind,
            subject: kind.as_str().to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            note: None,
        }
    }

    fn sort_key(&self) -> (Tag, u8, usize, &str) {
        (self.tag, self.kind.phase(), self.level, &self.subject)
    }

    pub fn to_json(&self) -> Json {
        let inputs: Map<String, Json> =
            self.inputs.iter().map(|(k, v)| (k.clone(), v.as_ref().map_or(Json::Null, Value::to_json))).collect();
        let outputs: Map<String, Json> = self.outputs.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
        let mut obj = json!({
            "tag": self.tag,
            "level": self.level,
            "kind": self.kind.as_str(),
            "subject": self.subject,
            "inputs": inputs,
            "outputs": outputs,
        });
        if let Some(note) = &self.note {
            obj["note"] = Json::String(note.clone());
        }
        obj
    }

    pub fn from_json(v: &Json) -> Result<Self, String> {
        let field = |k: &str| v.get(k).ok_or_else(|| format!("missing `{k}`"));
        let tag: Tag = serde_json::from_value(field("tag")?.clone()).map_err(|e| e.to_string())?;
        let level = field("level")?.as_u64().ok_or("bad `level`")? as usize;
        let kind = field("kind")?.as_str().and_then(RecordKind::parse).ok_or("bad `kind`")?;
        let subject = field("subject")?.as_str().ok_or("bad `subject`")?.to_string();
        let mut inputs = BTreeMap::new();
        for (k, x) in field("inputs")?.as_object().ok_or("bad `inputs`")? {
            let val = if x.is_null() { None } else { Some(Value::from_json(x).map_err(|e| e.to_string())?) };
            inputs.insert(k.clone(), val);
        }
        let mut outputs = BTreeMap::new();
        for (k, x) in field("outputs")?.as_object().ok_or("bad `outputs`")? {
            outputs.insert(k.clone(), Value::from_json(x).map_err(|e| e.to_string())?);
        }
        let note = match v.get("note") {
            None => None,
            Some(n) => Some(n.as_str().ok_or("bad `note`")?.to_string()),
        };
        Ok(TraceRecord { tag, level, kind, subject, inputs, outputs, note })
    }
}

/// A physical-time observation kept out of the canonical trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysRecord {
    pub tag: Tag,
    pub subject: String,
    pub physical: TimeValue,
}

impl PhysRecord {
    pub fn lag(&self) -> TimeValue {
        self.physical.saturating_sub(self.tag.time)
    }

    pub fn to_json(&self) -> Json {
        json!({
            "tag": self.tag,
            "subject": self.subject,
            "physical": self.physical.as_nanos(),
            "lag": self.lag().as_nanos(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub program: String,
    pub config: String,
    pub mode: String,
}

impl Header {
    fn to_json(&self) -> Json {
        json!({ "format": FORMAT, "program": self.program, "config": self.config, "mode": self.mode })
    }
}

/// Digest of the run settings that can change observable behavior.
pub fn config_digest(timeout: Option<TimeValue>, clock_script: &str) -> String {
    let mut h = Sha256::new();
    match timeout {
        Some(t) => h.update(format!("timeout {}\n", t.as_nanos())),
        None => h.update("timeout none\n"),
    }
    h.update(clock_script);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: Header,
    pub records: Vec<TraceRecord>,
}

/// Puts records in canonical order: tag, then startup/reactions/shutdown,
/// then level, then subject name.
pub fn canonicalize(header: Header, mut records: Vec<TraceRecord>) -> Trace {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Trace { header, records }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Trace {
    pub fn to_text(&self) -> String {
        let mut out = self.header.to_json().to_string();
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.to_json().to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, message: String| TraceError::Parse { line: line + 1, message };
        let (_, first) = lines.next().ok_or_else(|| err(0, "empty trace".into()))?;
        let h: Json = serde_json::from_str(first).map_err(|e| err(0, e.to_string()))?;
        if h.get("format").and_then(Json::as_str) != Some(FORMAT) {
            return Err(err(0, format!("not a {FORMAT} header")));
        }
        let s = |k: &str| h.get(k).and_then(Json::as_str).unwrap_or_default().to_string();
        let header = Header { program: s("program"), config: s("config"), mode: s("mode") };
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let v: Json = serde_json::from_str(line).map_err(|e| err(i, e.to_string()))?;
            records.push(TraceRecord::from_json(&v).map_err(|m| err(i, m))?);
        }
        Ok(Trace { header, records })
    }

    pub fn read(path: &Path) -> Result<Trace, TraceError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
        Trace::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_text()).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })
    }

    pub fn reaction_records(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| !matches!(r.kind, RecordKind::Startup | RecordKind::Shutdown))
    }
}

/// Sidecar path for a trace path: `run.jsonl` becomes `run.phys.jsonl`.
pub fn sidecar_path(trace: &Path) -> PathBuf {
    let stem = trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    trace.with_file_name(format!("{stem}.phys.jsonl"))
}

pub fn phys_text(records: &[PhysRecord]) -> String {
    records.iter().map(|r| r.to_json().to_string() + "\n").collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    Equal,
    /// The traces come from different programs.
    HeaderMismatch { golden: String, candidate: String },
    Divergence { index: usize, field: String, golden: String, candidate: String },
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Comparison::Equal => write!(f, "traces are equal"),
            Comparison::HeaderMismatch { golden, candidate } => {
                write!(f, "program hash differs: golden {golden}, candidate {candidate}")
            }
            Comparison::Divergence { index, field, golden, candidate } => {
                write!(f, "first divergence at record {index}, field `{field}`: golden {golden}, candidate {candidate}")
            }
        }
    }
}

/// Compares two canonical traces. The mode and config digest in the header
/// are ignored so realtime and fast runs of the same program compare.
pub fn compare(golden: &Trace, candidate: &Trace) -> Comparison {
    if golden.header.program != candidate.header.program {
        return Comparison::HeaderMismatch {
            golden: golden.header.program.clone(),
            candidate: candidate.header.program.clone(),
        };
    }
    let n = golden.records.len().max(candidate.records.len());
    for index in 0..n {
        let g = golden.records.get(index).map(TraceRecord::to_json);
        let c = candidate.records.get(index).map(TraceRecord::to_json);
        match (g, c) {
            (Some(g), Some(c)) if g == c => continue,
            (Some(g), Some(c)) => {
                let (gm, cm) = (g.as_object().unwrap(), c.as_object().unwrap());
                let keys: std::collections::BTreeSet<&String> = gm.keys().chain(cm.keys()).collect();
                for order in ["tag", "kind", "subject", "level", "inputs", "outputs", "note"] {
                    let key = order.to_string();
                    if keys.contains(&key) && gm.get(order) != cm.get(order) {
                        let show = |v: Option<&Json>| v.map_or("(none)".to_string(), Json::to_string);
                        return Comparison::Divergence {
                            index,
                            field: key,
                            golden: show(gm.get(order)),
                            candidate: show(cm.get(order)),
                        };
                    }
                }
                unreachable!("records differ but no field does");
            }
            (g, c) => {
                let show = |v: Option<Json>| v.map_or("(end of trace)".to_string(), |v| v.to_string());
                return Comparison::Divergence { index, field: "record".into(), golden: show(g), candidate: show(c) };
            }
        }
    }
    Comparison::Equal
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ms: i64, level: usize, subject: &str, out: i64) -> TraceRecord {
        TraceRecord {
            tag: Tag::new(TimeValue::from_millis(ms), 0),
            level,
            kind: RecordKind::Reaction,
            subject: subject.into(),
            inputs: BTreeMap::from([("t".to_string(), None)]),
            outputs: BTreeMap::from([("y".to_string(), Value::Int(out))]),
            note: None,
        }
    }

    fn header() -> Header {
        Header { program: "p".into(), config: "c".into(), mode: "fast".into() }
    }

    #[test]
    fn sort_is_order_independent() {
        let a = vec![rec(0, 1, "b.r", 1), rec(0, 1, "a.r", 2), rec(0, 0, "z.r", 3)];
        let mut b = a.clone();
        b.reverse();
        let (ta, tb) = (canonicalize(header(), a), canonicalize(header(), b));
        assert_eq!(ta.to_text(), tb.to_text());
        assert_eq!(ta.records[0].subject, "z.r");
        let again = canonicalize(header(), ta.records.clone());
        assert_eq!(again, ta);
    }

    #[test]
    fn text_round_trip() {
        let mut r = rec(30, 2, "x.reaction1", -4);
        r.outputs.insert("f".into(), Value::Float(0.1 + 0.2));
        r.note = Some("lateness 5 ms".into());
        let t = canonicalize(header(), vec![TraceRecord::marker(RecordKind::Startup, Tag::ZERO), r]);
        let back = Trace::parse(&t.to_text()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn reports_first_divergence() {
        let g = canonicalize(header(), vec![rec(0, 0, "a", 1), rec(30, 0, "a", 2)]);
        let c = canonicalize(header(), vec![rec(0, 0, "a", 1), rec(30, 0, "a", 3)]);
        assert_eq!(compare(&g, &g), Comparison::Equal);
        match compare(&g, &c) {
            Comparison::Divergence { index, field, .. } => assert_eq!((index, field.as_str()), (1, "outputs")),
            other => panic!("{other:?}"),
        }
        let mut other = c.clone();
        other.header.program = "q".into();
        assert!(matches!(compare(&g, &other), Comparison::HeaderMismatch { .. }));
        let short = canonicalize(header(), vec![rec(0, 0, "a", 1)]);
        assert!(matches!(compare(&g, &short), Comparison::Divergence { index: 1, .. }));
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("/tmp/run.jsonl")), PathBuf::from("/tmp/run.phys.jsonl"));
    }
}
