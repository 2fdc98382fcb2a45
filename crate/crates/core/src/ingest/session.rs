use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::events::RawEvent;
use crate::{Error, Result};

/// Binary session outcome, e.g. whether a purchase happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct OutcomeLabel(bool);

impl OutcomeLabel {
    pub const NEGATIVE: OutcomeLabel = OutcomeLabel(false);
    pub const POSITIVE: OutcomeLabel = OutcomeLabel(true);

    pub fn new(value: u8) -> Result<Self> {
        match value {
            0 => Ok(Self::NEGATIVE),
            1 => Ok(Self::POSITIVE),
            v => Err(Error::Input(format!("outcome label must be 0 or 1, got {v}"))),
        }
    }

    pub fn is_positive(self) -> bool {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        if self.0 { 1.0 } else { 0.0 }
    }
}

impl From<bool> for OutcomeLabel {
    fn from(b: bool) -> Self {
        OutcomeLabel(b)
    }
}

impl TryFrom<u8> for OutcomeLabel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        OutcomeLabel::new(v)
    }
}

impl From<OutcomeLabel> for u8 {
    fn from(l: OutcomeLabel) -> u8 {
        l.0 as u8
    }
}

/// Events of one session in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub events: Vec<RawEvent>,
    pub outcome: Option<OutcomeLabel>,
}

/// Groups events by `session_id` and orders each group by timestamp.
///
/// Equal timestamps keep their input order. Sessions come back sorted by
/// id.
pub fn sessionize(events: Vec<RawEvent>) -> Vec<Session> {
    let mut groups: BTreeMap<String, Vec<RawEvent>> = BTreeMap::new();
    for ev in events {
        groups.entry(ev.session_id.clone()).or_default().push(ev);
    }
    groups
        .into_iter()
        .map(|(session_id, mut events)| {
            events.sort_by_key(|e| e.timestamp); // stable
            Session { session_id, events, outcome: None }
        })
        .collect()
}

/// Observed outcome and time-window tag of one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub session_id: String,
    pub outcome: OutcomeLabel,
    pub window: String,
}

pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<LabelRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("label line {}: {e}", idx + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_labels<W: Write>(mut writer: W, labels: &[LabelRecord]) -> Result<()> {
    for rec in labels {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
