use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::events::{AttrValue, RawEvent};
use super::session::Session;
use crate::{Error, Result};

pub const SCHEMA_FORMAT_VERSION: u32 = 1;
const SCHEMA_FORMAT_NAME: &str = "clickintent-schema";
pub const DEFAULT_MAX_EVENTS: usize = 200;

/// Attributes that can be derived from the event stream itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    /// Milliseconds since the previous event; 0 for the first.
    InterEventGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric { source: String },
    /// One column per vocabulary entry plus a trailing out-of-vocabulary column.
    Categorical { source: String, vocabulary: Vec<String> },
    Derived { derive: Derivation },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureDef {
    pub fn width(&self) -> usize {
        match &self.kind {
            FeatureKind::Categorical { vocabulary, .. } => vocabulary.len() + 1,
            _ => 1,
        }
    }
}

/// Declarative description of how events become feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub format: String,
    pub version: u32,
    /// Longer sessions keep only their most recent `max_events` events.
    #[serde(default = "default_max_events")]
    pub max_events: usize,
    pub features: Vec<FeatureDef>,
}

fn default_max_events() -> usize {
    DEFAULT_MAX_EVENTS
}

/// Truncated SHA-256 of a schema's canonical JSON form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SchemaFingerprint(pub u64);

impl fmt::Display for SchemaFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for SchemaFingerprint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        u64::from_str_radix(s, 16)
            .map(SchemaFingerprint)
            .map_err(|_| Error::Format(format!("bad schema fingerprint {s:?}")))
    }
}

impl Serialize for SchemaFingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SchemaFingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self> {
        let schema = Self {
            format: SCHEMA_FORMAT_NAME.into(),
            version: SCHEMA_FORMAT_VERSION,
            max_events: DEFAULT_MAX_EVENTS,
            features,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: FeatureSchema = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if schema.format != SCHEMA_FORMAT_NAME {
            return Err(Error::Schema(format!("unknown schema format {:?}", schema.format)));
        }
        if schema.version != SCHEMA_FORMAT_VERSION {
            return Err(Error::Version { found: schema.version, expected: SCHEMA_FORMAT_VERSION });
        }
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema defines no features".into()));
        }
        if self.max_events == 0 {
            return Err(Error::Schema("max_events must be positive".into()));
        }
        let mut names = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {:?}", f.name)));
            }
            if let FeatureKind::Categorical { vocabulary, .. } = &f.kind {
                if vocabulary.is_empty() {
                    return Err(Error::Schema(format!("feature {:?} has an empty vocabulary", f.name)));
                }
                let unique: HashSet<_> = vocabulary.iter().collect();
                if unique.len() != vocabulary.len() {
                    return Err(Error::Schema(format!("feature {:?} repeats a vocabulary entry", f.name)));
                }
            }
        }
        Ok(())
    }

    /// Encoded row width.
    pub fn width(&self) -> usize {
        self.features.iter().map(FeatureDef::width).sum()
    }

    /// Column indices holding numeric (scalable) values.
    pub fn numeric_columns(&self) -> Vec<usize> {
        let mut cols = Vec::new();
        let mut offset = 0;
        for f in &self.features {
            if !matches!(f.kind, FeatureKind::Categorical { .. }) {
                cols.push(offset);
            }
            offset += f.width();
        }
        cols
    }

    /// Human-readable name of every encoded column.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for f in &self.features {
            match &f.kind {
                FeatureKind::Categorical { vocabulary, .. } => {
                    names.extend(vocabulary.iter().map(|v| format!("{}={v}", f.name)));
                    names.push(format!("{}=<oov>", f.name));
                }
                _ => names.push(f.name.clone()),
            }
        }
        names
    }

    pub fn fingerprint(&self) -> SchemaFingerprint {
        let canonical = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&canonical);
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        SchemaFingerprint(u64::from_be_bytes(head))
    }
}

/// Pre-scaling attributes of one event, as strings, keyed by attribute name.
pub type EventSnapshot = BTreeMap<String, String>;

pub(crate) fn snapshot(ev: &RawEvent) -> EventSnapshot {
    let mut snap = BTreeMap::new();
    snap.insert("ts".into(), ev.timestamp.to_string());
    snap.insert("event_type".into(), ev.event_type.clone());
    snap.insert("page_type".into(), ev.page_type.clone());
    snap.insert("category".into(), ev.category.clone());
    for (k, v) in &ev.extras {
        snap.insert(k.clone(), v.to_string());
    }
    snap
}

/// Encoded feature matrix of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSequence {
    pub session_id: String,
    /// `T × width` matrix, one row per event.
    pub features: Array2<f64>,
    pub fingerprint: SchemaFingerprint,
    /// Set once numeric columns have been standardised.
    pub scaled: bool,
    /// Leading events dropped by the length cap.
    pub dropped_prefix: usize,
}

impl ActionSequence {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    /// First `len` events (all of them if `len` exceeds the length).
    pub fn prefix(&self, len: usize) -> ActionSequence {
        let len = len.min(self.len());
        ActionSequence {
            session_id: self.session_id.clone(),
            features: self.features.slice(ndarray::s![..len, ..]).to_owned(),
            fingerprint: self.fingerprint,
            scaled: self.scaled,
            dropped_prefix: self.dropped_prefix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingAttribute {
    pub event_index: usize,
    pub feature: String,
}

/// Attributes that were absent or unusable and got a default value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QualityReport {
    pub defaulted: Vec<MissingAttribute>,
}

impl QualityReport {
    pub fn is_clean(&self) -> bool {
        self.defaulted.is_empty()
    }
}

/// Encodes a session as a feature matrix.
///
/// Numeric attributes are copied; categoricals are one-hot with an
/// out-of-vocabulary bucket. Missing numerics become 0 and missing
/// categoricals go to the OOV bucket, both recorded in the report.
pub fn extract_features(session: &Session, schema: &FeatureSchema) -> Result<(ActionSequence, QualityReport)> {
    schema.validate()?;
    if session.events.is_empty() {
        return Err(Error::Input(format!("session {} has no events", session.session_id)));
    }
    let dropped = session.events.len().saturating_sub(schema.max_events);
    let events = &session.events[dropped..];
    let mut features = Array2::zeros((events.len(), schema.width()));
    let mut report = QualityReport::default();

    for (t, ev) in events.iter().enumerate() {
        let mut row = features.row_mut(t);
        let mut col = 0;
        for f in &schema.features {
            match &f.kind {
                FeatureKind::Numeric { source } => {
                    let value = match ev.attribute(source) {
                        Some(AttrValue::Number(n)) if n.is_finite() => Some(n),
                        Some(AttrValue::Text(s)) => s.trim().parse::<f64>().ok().filter(|n| n.is_finite()),
                        _ => None,
                    };
                    row[col] = value.unwrap_or_else(|| {
                        report.defaulted.push(MissingAttribute { event_index: t, feature: f.name.clone() });
                        0.0
                    });
                }
                FeatureKind::Categorical { source, vocabulary } => {
                    let token = ev.attribute(source).map(|v| v.to_string());
                    if token.is_none() {
                        report.defaulted.push(MissingAttribute { event_index: t, feature: f.name.clone() });
                    }
                    let slot = token
                        .and_then(|tok| vocabulary.iter().position(|v| *v == tok))
                        .unwrap_or(vocabulary.len());
                    row[col + slot] = 1.0;
                }
                FeatureKind::Derived { derive: Derivation::InterEventGap } => {
                    row[col] = if t == 0 { 0.0 } else { (ev.timestamp - events[t - 1].timestamp) as f64 };
                }
            }
            col += f.width();
        }
    }
    let seq = ActionSequence {
        session_id: session.session_id.clone(),
        features,
        fingerprint: schema.fingerprint(),
        scaled: false,
        dropped_prefix: dropped,
    };
    Ok((seq, report))
}

impl Session {
    /// Snapshots of the events kept by `schema`'s length cap, in sequence order.
    pub fn snapshots(&self, schema: &FeatureSchema) -> Vec<EventSnapshot> {
        let dropped = self.events.len().saturating_sub(schema.max_events);
        self.events[dropped..].iter().map(snapshot).collect()
    }
}
