use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Error, Result};

pub const EVENT_FORMAT_VERSION: u32 = 1;
const EVENT_FORMAT_NAME: &str = "clickintent-events";

/// Extra event attribute: either a number or a string token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Number(n) => write!(f, "{n}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

/// One timestamped interaction event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub session_id: String,
    /// Milliseconds since the epoch.
    #[serde(rename = "ts")]
    pub timestamp: i64,
    pub event_type: String,
    pub page_type: String,
    pub category: String,
    #[serde(flatten)]
    pub extras: BTreeMap<String, AttrValue>,
}

impl RawEvent {
    /// Looks up a named attribute, built-in fields first.
    pub fn attribute(&self, name: &str) -> Option<AttrValue> {
        match name {
            "session_id" => Some(AttrValue::Text(self.session_id.clone())),
            "ts" => Some(AttrValue::Number(self.timestamp as f64)),
            "event_type" => Some(AttrValue::Text(self.event_type.clone())),
            "page_type" => Some(AttrValue::Text(self.page_type.clone())),
            "category" => Some(AttrValue::Text(self.category.clone())),
            other => self.extras.get(other).cloned(),
        }
    }

    /// Parses one record from a JSON object, validating every field.
    pub fn from_json(value: Value) -> std::result::Result<Self, String> {
        let Value::Object(mut obj) = value else {
            return Err("record is not a JSON object".into());
        };
        let session_id = take_string(&mut obj, "session_id")?;
        if session_id.is_empty() {
            return Err("session_id is empty".into());
        }
        let timestamp = match obj.remove("ts") {
            Some(Value::Number(n)) => n.as_i64().ok_or_else(|| format!("ts {n} is not an integer"))?,
            Some(other) => return Err(format!("ts must be an integer, got {other}")),
            None => return Err("missing key ts".into()),
        };
        if timestamp < 0 {
            return Err(format!("ts {timestamp} is negative"));
        }
        let event_type = take_string(&mut obj, "event_type")?;
        let page_type = take_string(&mut obj, "page_type")?;
        let category = take_string(&mut obj, "category")?;
        let mut extras = BTreeMap::new();
        for (key, value) in obj {
            let attr = match value {
                Value::Number(n) => AttrValue::Number(n.as_f64().ok_or("extra number out of range")?),
                Value::String(s) => AttrValue::Text(s),
                other => return Err(format!("extra {key} must be a number or string, got {other}")),
            };
            extras.insert(key, attr);
        }
        Ok(Self { session_id, timestamp, event_type, page_type, category, extras })
    }
}

fn take_string(obj: &mut Map<String, Value>, key: &str) -> std::result::Result<String, String> {
    match obj.remove(key) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(format!("{key} must be a string, got {other}")),
        None => Err(format!("missing key {key}")),
    }
}

/// Expected event-file format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventFormat {
    pub version: u32,
    /// Parsing fails outright when more than this share of lines is malformed.
    pub max_reject_ratio: f64,
}

impl Default for EventFormat {
    fn default() -> Self {
        Self { version: EVENT_FORMAT_VERSION, max_reject_ratio: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedLine {
    /// 1-based line number in the input.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedEvents {
    pub events: Vec<RawEvent>,
    pub rejects: Vec<RejectedLine>,
}

/// Parses newline-delimited event records.
///
/// Blank lines are skipped. Malformed lines are reported in
/// [`ParsedEvents::rejects`]; if they exceed the format's reject ratio the
/// whole input is refused.
pub fn parse_events<R: BufRead>(reader: R, format: &EventFormat) -> Result<ParsedEvents> {
    let mut out = ParsedEvents::default();
    let mut first = true;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Value, _> = serde_json::from_str(trimmed);
        if first {
            first = false;
            if let Ok(Value::Object(obj)) = &parsed {
                if obj.contains_key("format") {
                    check_header(obj, format)?;
                    continue;
                }
            }
        }
        match parsed.map_err(|e| e.to_string()).and_then(RawEvent::from_json) {
            Ok(ev) => out.events.push(ev),
            Err(reason) => out.rejects.push(RejectedLine { line: line_no, reason }),
        }
    }
    let total = out.events.len() + out.rejects.len();
    if total > 0 && out.rejects.len() as f64 > format.max_reject_ratio * total as f64 {
        let first = &out.rejects[0];
        return Err(Error::Format(format!(
            "{} of {total} lines malformed (first at line {}: {})",
            out.rejects.len(),
            first.line,
            first.reason
        )));
    }
    Ok(out)
}

fn check_header(obj: &Map<String, Value>, format: &EventFormat) -> Result<()> {
    if obj.get("format").and_then(Value::as_str) != Some(EVENT_FORMAT_NAME) {
        return Err(Error::Format(format!("unknown event file format {:?}", obj.get("format"))));
    }
    let found = obj.get("version").and_then(Value::as_u64).unwrap_or(0) as u32;
    if found != format.version {
        return Err(Error::Version { found, expected: format.version });
    }
    Ok(())
}

/// Writes events with a version header, one record per line.
pub fn write_events<W: Write>(mut writer: W, events: &[RawEvent]) -> Result<()> {
    writeln!(writer, "{{\"format\":\"{EVENT_FORMAT_NAME}\",\"version\":{EVENT_FORMAT_VERSION}}}")?;
    for ev in events {
        serde_json::to_writer(&mut writer, ev)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
