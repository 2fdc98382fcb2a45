//! Newline-delimited analysis exports.
//!
//! Each file starts with a header record naming the format and version,
//! followed by one JSON record per line:
//!
//! - series: `{"format":"clickintent-series","version":1,"convention":"full"}`
//!   then one [`AnalyzedSession`] per line. `convention` says whether the
//!   trajectories cover every prefix or leave out the final event.
//! - impacts: `{"format":"clickintent-impacts","version":1,"policy":..,"threshold":..}`
//!   then one [`ImpactEvent`] per line in rank order.
//! - clusters: `{"format":"clickintent-clusters","version":1,"seed":..}`
//!   then one [`IntentCluster`] per line.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use super::cluster::IntentCluster;
use super::impacts::{ImpactEvent, ThresholdPolicy};
use super::series::{AnalyzedSession, SeriesConvention};
use crate::{Error, Result};

pub const ANALYSIS_FORMAT_VERSION: u32 = 1;

fn write_records<W: Write, T: Serialize>(mut w: W, header: Value, items: &[T]) -> Result<()> {
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_records<R: BufRead, T: DeserializeOwned>(r: R, format: &str) -> Result<(Value, Vec<T>)> {
    let mut lines = r.lines();
    let header: Value = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::Format(format!("empty {format} file"))),
    };
    if header.get("format").and_then(Value::as_str) != Some(format) {
        return Err(Error::Format(format!("expected a {format} header, found {header}")));
    }
    let found = header.get("version").and_then(Value::as_u64).unwrap_or(0) as u32;
    if found != ANALYSIS_FORMAT_VERSION {
        return Err(Error::Version { found, expected: ANALYSIS_FORMAT_VERSION });
    }
    let mut items = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("{format} record {}: {e}", i + 1)))?,
        );
    }
    Ok((header, items))
}

pub fn write_series<W: Write>(w: W, convention: SeriesConvention, sessions: &[AnalyzedSession]) -> Result<()> {
    if let Some(s) = sessions.iter().find(|s| s.convention != convention) {
        return Err(Error::Input(format!("session {} does not use the {convention:?} convention", s.session_id)));
    }
    let header = json!({"format": "clickintent-series", "version": ANALYSIS_FORMAT_VERSION, "convention": convention});
    write_records(w, header, sessions)
}

pub fn read_series<R: BufRead>(r: R) -> Result<(SeriesConvention, Vec<AnalyzedSession>)> {
    let (header, items) = read_records(r, "clickintent-series")?;
    let convention = serde_json::from_value(header["convention"].clone())?;
    Ok((convention, items))
}

pub fn write_impacts<W: Write>(
    w: W,
    policy: ThresholdPolicy,
    threshold: Option<f64>,
    impacts: &[ImpactEvent],
) -> Result<()> {
    let header = json!({
        "format": "clickintent-impacts",
        "version": ANALYSIS_FORMAT_VERSION,
        "policy": policy,
        "threshold": threshold,
    });
    write_records(w, header, impacts)
}

pub fn read_impacts<R: BufRead>(r: R) -> Result<Vec<ImpactEvent>> {
    Ok(read_records(r, "clickintent-impacts")?.1)
}

pub fn write_clusters<W: Write>(w: W, seed: u64, clusters: &[IntentCluster]) -> Result<()> {
    let header = json!({"format": "clickintent-clusters", "version": ANALYSIS_FORMAT_VERSION, "seed": seed});
    write_records(w, header, clusters)
}

pub fn read_clusters<R: BufRead>(r: R) -> Result<Vec<IntentCluster>> {
    Ok(read_records(r, "clickintent-clusters")?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyze::Direction;

    #[test]
    fn records_round_trip() {
        let s = AnalyzedSession {
            session_id: "s1".into(),
            convention: SeriesConvention::ExcludeFinal,
            label: Some(1),
            predictions: vec![0.25, 0.5],
            distances: vec![0.25],
            metric: "abs".into(),
            degenerate: false,
            events: vec![[("page_type".to_string(), "home".to_string())].into(); 2],
        };
        let mut buf = Vec::new();
        write_series(&mut buf, SeriesConvention::ExcludeFinal, std::slice::from_ref(&s)).unwrap();
        assert!(buf.starts_with(br#"{"convention":"exclude_final","format":"clickintent-series""#));
        let (conv, back) = read_series(buf.as_slice()).unwrap();
        assert_eq!(conv, SeriesConvention::ExcludeFinal);
        assert_eq!(back, vec![s.clone()]);
        assert!(write_series(Vec::new(), SeriesConvention::Full, &[s]).is_err());

        let e = ImpactEvent {
            session_id: "s1".into(),
            event_index: 1,
            distance: 0.25,
            direction: Direction::Rose,
            before: 0.25,
            after: 0.5,
            snapshot: Default::default(),
        };
        let mut buf = Vec::new();
        write_impacts(&mut buf, ThresholdPolicy::default(), Some(0.2), std::slice::from_ref(&e)).unwrap();
        assert_eq!(read_impacts(buf.as_slice()).unwrap(), vec![e]);
        assert!(matches!(read_clusters(buf.as_slice()), Err(Error::Format(_))));
    }
}
