use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ingest::{
    extract_features, ActionSequence, EventSnapshot, FeatureSchema, LabelRecord, OutcomeLabel, Session,
};
use crate::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;
const DATASET_FORMAT_NAME: &str = "clickintent-dataset";

/// An encoded session with its observed outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub sequence: ActionSequence,
    pub label: OutcomeLabel,
    pub window: String,
    /// Raw attributes of each encoded event, aligned with the rows.
    pub snapshots: Vec<EventSnapshot>,
}

impl LabeledSequence {
    pub fn session_id(&self) -> &str {
        &self.sequence.session_id
    }
}

/// Labelled sequences that all share one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub items: Vec<LabeledSequence>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub sessions: usize,
    pub unlabeled: Vec<String>,
    pub defaulted_attributes: usize,
    pub truncated_sessions: usize,
}

/// Encodes every labelled session; sessions without a label are skipped
/// and listed in the report.
pub fn build_dataset(
    sessions: &[Session],
    labels: &[LabelRecord],
    schema: &FeatureSchema,
) -> Result<(Dataset, BuildReport)> {
    let by_id: BTreeMap<&str, &LabelRecord> = labels.iter().map(|l| (l.session_id.as_str(), l)).collect();
    let mut report = BuildReport { sessions: sessions.len(), ..Default::default() };
    let mut items = Vec::with_capacity(sessions.len());
    for session in sessions {
        let Some(label) = by_id.get(session.session_id.as_str()) else {
            report.unlabeled.push(session.session_id.clone());
            continue;
        };
        let (sequence, quality) = extract_features(session, schema)?;
        report.defaulted_attributes += quality.defaulted.len();
        if sequence.dropped_prefix > 0 {
            report.truncated_sessions += 1;
        }
        items.push(LabeledSequence {
            snapshots: session.snapshots(schema),
            sequence,
            label: label.outcome,
            window: label.window.clone(),
        });
    }
    Ok((Dataset { schema: schema.clone(), items }, report))
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    schema: FeatureSchema,
}

#[derive(Serialize, Deserialize)]
struct Record {
    session_id: String,
    window: String,
    label: OutcomeLabel,
    dropped_prefix: usize,
    rows: Vec<Vec<f64>>,
    snapshots: Vec<EventSnapshot>,
}

/// Writes the dataset as JSON lines: a header carrying the schema, then one
/// record per sequence.
pub fn write_dataset<W: Write>(mut writer: W, dataset: &Dataset) -> Result<()> {
    let header = Header {
        format: DATASET_FORMAT_NAME.into(),
        version: DATASET_FORMAT_VERSION,
        schema: dataset.schema.clone(),
    };
    serde_json::to_writer(&mut writer, &header)?;
    writer.write_all(b"\n")?;
    for item in &dataset.items {
        if item.sequence.scaled {
            return Err(Error::Input(format!("refusing to store scaled sequence {}", item.session_id())));
        }
        let rec = Record {
            session_id: item.sequence.session_id.clone(),
            window: item.window.clone(),
            label: item.label,
            dropped_prefix: item.sequence.dropped_prefix,
            rows: item.sequence.features.rows().into_iter().map(|r| r.to_vec()).collect(),
            snapshots: item.snapshots.clone(),
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines();
    let header_line = lines.next().ok_or_else(|| Error::Format("dataset file is empty".into()))??;
    let header: Header = serde_json::from_str(&header_line)?;
    if header.format != DATASET_FORMAT_NAME {
        return Err(Error::Format(format!("not a dataset file (format {:?})", header.format)));
    }
    if header.version != DATASET_FORMAT_VERSION {
        return Err(Error::Version { found: header.version, expected: DATASET_FORMAT_VERSION });
    }
    header.schema.validate()?;
    let fingerprint = header.schema.fingerprint();
    let width = header.schema.width();
    let mut items = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("dataset record {}: {e}", idx + 1)))?;
        if rec.rows.is_empty() || rec.rows.iter().any(|r| r.len() != width) {
            return Err(Error::Shape(format!("record {} does not match schema width {width}", rec.session_id)));
        }
        if rec.snapshots.len() != rec.rows.len() {
            return Err(Error::Format(format!("record {} has misaligned snapshots", rec.session_id)));
        }
        let flat: Vec<f64> = rec.rows.iter().flatten().copied().collect();
        let features = Array2::from_shape_vec((rec.rows.len(), width), flat).map_err(|e| Error::Shape(e.to_string()))?;
        items.push(LabeledSequence {
            sequence: ActionSequence {
                session_id: rec.session_id,
                features,
                fingerprint,
                scaled: false,
                dropped_prefix: rec.dropped_prefix,
            },
            label: rec.label,
            window: rec.window,
            snapshots: rec.snapshots,
        });
    }
    Ok(Dataset { schema: header.schema, items })
}
