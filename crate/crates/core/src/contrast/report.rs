use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analyze::{Direction, ImpactEvent};
use crate::{Error, Result};

pub const CONTRAST_FORMAT_VERSION: u32 = 1;
const CONTRAST_FORMAT_NAME: &str = "clickintent-contrast";
/// Group value for impacts whose snapshot lacks the grouping feature.
pub const MISSING_VALUE: &str = "<missing>";
const MAX_EXAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupingKey {
    pub feature: String,
    pub value: String,
}

impl fmt::Display for GroupingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.feature, self.value)
    }
}

impl std::str::FromStr for GroupingKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('=') {
            Some((f, v)) if !f.is_empty() => Ok(Self { feature: f.into(), value: v.into() }),
            _ => Err(Error::Input(format!("grouping key {s:?} must look like feature=value"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub key: GroupingKey,
    pub count: usize,
    pub total: f64,
    pub mean: f64,
    pub median: f64,
    pub rose: usize,
    pub fell: usize,
    /// Up to five session ids, in impact rank order.
    pub examples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub feature: String,
    /// Number of impact events the report was built from.
    pub impacts: usize,
    /// SHA-256 over the input impacts, identifying what was aggregated.
    pub source_digest: String,
    pub rows: Vec<ContrastRow>,
}

fn digest(impacts: &[ImpactEvent]) -> Result<String> {
    let mut h = Sha256::new();
    for e in impacts {
        h.update(serde_json::to_vec(e)?);
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// One row per distinct value of `feature`, highest mean distance first.
pub fn aggregate_impacts(impacts: &[ImpactEvent], feature: &str) -> Result<ContrastReport> {
    if !impacts.is_empty() && !impacts.iter().any(|e| e.snapshot.contains_key(feature)) {
        let mut known: Vec<&str> = impacts.iter().flat_map(|e| e.snapshot.keys().map(String::as_str)).collect();
        known.sort();
        known.dedup();
        return Err(Error::Schema(format!("unknown feature {feature:?}; events carry {}", known.join(", "))));
    }
    let mut groups: BTreeMap<&str, Vec<&ImpactEvent>> = BTreeMap::new();
    for e in impacts {
        let value = e.snapshot.get(feature).map_or(MISSING_VALUE, String::as_str);
        groups.entry(value).or_default().push(e);
    }
    let mut rows: Vec<ContrastRow> = groups
        .into_iter()
        .map(|(value, events)| {
            let mut d: Vec<f64> = events.iter().map(|e| e.distance).collect();
            let total: f64 = d.iter().sum();
            d.sort_by(f64::total_cmp);
            let mut examples: Vec<String> = Vec::new();
            for e in &events {
                if examples.len() < MAX_EXAMPLES && !examples.contains(&e.session_id) {
                    examples.push(e.session_id.clone());
                }
            }
            ContrastRow {
                key: GroupingKey { feature: feature.into(), value: value.into() },
                count: events.len(),
                total,
                mean: total / events.len() as f64,
                median: median(&d),
                rose: events.iter().filter(|e| e.direction == Direction::Rose).count(),
                fell: events.iter().filter(|e| e.direction == Direction::Fell).count(),
                examples,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.key.value.cmp(&b.key.value)));
    Ok(ContrastReport { feature: feature.into(), impacts: impacts.len(), source_digest: digest(impacts)?, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    /// Header record plus one JSON row per line.
    Records,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(Self::Table),
            "records" | "ndjson" => Ok(Self::Records),
            other => Err(Error::Config(format!("unknown report format {other:?} (table | records)"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    feature: String,
    impacts: usize,
    source_digest: String,
}

pub fn render_report(report: &ContrastReport, format: ReportFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        ReportFormat::Records => {
            let header = Header {
                format: CONTRAST_FORMAT_NAME.into(),
                version: CONTRAST_FORMAT_VERSION,
                feature: report.feature.clone(),
                impacts: report.impacts,
                source_digest: report.source_digest.clone(),
            };
            out.push_str(&serde_json::to_string(&header)?);
            out.push('\n');
            for row in &report.rows {
                out.push_str(&serde_json::to_string(row)?);
                out.push('\n');
            }
        }
        ReportFormat::Table => {
            let width = report.rows.iter().map(|r| r.key.value.len()).max().unwrap_or(0).max(report.feature.len());
            writeln!(
                out,
                "{:<width$}  {:>6}  {:>8}  {:>8}  {:>5}  {:>5}  examples",
                report.feature, "count", "mean", "median", "rose", "fell"
            )
            .expect("string write");
            for r in &report.rows {
                writeln!(
                    out,
                    "{:<width$}  {:>6}  {:>8.4}  {:>8.4}  {:>5}  {:>5}  {}",
                    r.key.value,
                    r.count,
                    r.mean,
                    r.median,
                    r.rose,
                    r.fell,
                    r.examples.join(",")
                )
                .expect("string write");
            }
        }
    }
    Ok(out)
}

/// Reads back the records rendering.
pub fn parse_report(text: &str) -> Result<ContrastReport> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Header = serde_json::from_str(lines.next().ok_or_else(|| Error::Format("empty report".into()))?)?;
    if header.format != CONTRAST_FORMAT_NAME {
        return Err(Error::Format(format!("not a contrast report: {}", header.format)));
    }
    if header.version != CONTRAST_FORMAT_VERSION {
        return Err(Error::Version { found: header.version, expected: CONTRAST_FORMAT_VERSION });
    }
    let rows = lines.map(serde_json::from_str).collect::<std::result::Result<_, _>>()?;
    Ok(ContrastReport { feature: header.feature, impacts: header.impacts, source_digest: header.source_digest, rows })
}
