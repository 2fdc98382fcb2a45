use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{ActionSequence, EventSnapshot};
use crate::seqmath::dense_head;
use crate::train::{LabeledSequence, TrainedModel};
use crate::{Error, Result};

/// Outcome probability after each prefix `1..=T` of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSeries {
    pub session_id: String,
    pub probabilities: Vec<f64>,
}

impl PredictionSeries {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Which prefixes a trajectory covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesConvention {
    /// Prefixes `1..=T`.
    #[default]
    Full,
    /// Prefixes `1..T`; the final event is left out.
    ExcludeFinal,
}

impl std::str::FromStr for SeriesConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "exclude_final" | "exclude-final" => Ok(Self::ExcludeFinal),
            other => Err(Error::Config(format!("unknown series convention {other:?} (full | exclude_final)"))),
        }
    }
}

/// Distance between consecutive predictions.
pub trait DistanceMetric: Send + Sync {
    fn name(&self) -> &str;
    fn distance(&self, before: f64, after: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AbsoluteDifference;

impl DistanceMetric for AbsoluteDifference {
    fn name(&self) -> &str {
        "abs"
    }

    fn distance(&self, before: f64, after: f64) -> f64 {
        (after - before).abs()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredDifference;

impl DistanceMetric for SquaredDifference {
    fn name(&self) -> &str {
        "squared"
    }

    fn distance(&self, before: f64, after: f64) -> f64 {
        (after - before).powi(2)
    }
}

pub fn metric_by_name(name: &str) -> Result<Box<dyn DistanceMetric>> {
    match name {
        "abs" => Ok(Box::new(AbsoluteDifference)),
        "squared" => Ok(Box::new(SquaredDifference)),
        other => Err(Error::Config(format!("unknown distance metric {other:?} (abs | squared)"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSeries {
    pub session_id: String,
    /// `distances[j]` compares the predictions before and after event `j + 1`.
    pub distances: Vec<f64>,
    pub metric: String,
    /// Set when the prediction series was too short to yield any distance.
    pub degenerate: bool,
}

/// Applies the dense head to every hidden state of one forward pass.
pub fn prefix_predictions(model: &TrainedModel, seq: &ActionSequence) -> Result<PredictionSeries> {
    let (hidden, _) = model.hidden_states(seq)?;
    let probabilities =
        hidden.axis_iter(Axis(0)).map(|h| dense_head(&model.network.dense, h)).collect();
    Ok(PredictionSeries { session_id: seq.session_id.clone(), probabilities })
}

pub fn distance_series(p: &PredictionSeries, metric: &dyn DistanceMetric) -> DistanceSeries {
    let distances: Vec<f64> = p.probabilities.windows(2).map(|w| metric.distance(w[0], w[1])).collect();
    DistanceSeries {
        session_id: p.session_id.clone(),
        degenerate: p.len() < 2,
        distances,
        metric: metric.name().to_string(),
    }
}

/// Trajectory, distances and raw event attributes for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzedSession {
    pub session_id: String,
    pub convention: SeriesConvention,
    pub label: Option<u8>,
    pub predictions: Vec<f64>,
    pub distances: Vec<f64>,
    pub metric: String,
    pub degenerate: bool,
    /// Pre-scaling attributes of each event covered by `predictions`.
    pub events: Vec<EventSnapshot>,
}

impl AnalyzedSession {
    pub fn prediction_series(&self) -> PredictionSeries {
        PredictionSeries { session_id: self.session_id.clone(), probabilities: self.predictions.clone() }
    }

    pub fn distance_series(&self) -> DistanceSeries {
        DistanceSeries {
            session_id: self.session_id.clone(),
            distances: self.distances.clone(),
            metric: self.metric.clone(),
            degenerate: self.degenerate,
        }
    }
}

pub fn analyze_sequence(
    model: &TrainedModel,
    seq: &ActionSequence,
    events: &[EventSnapshot],
    metric: &dyn DistanceMetric,
    convention: SeriesConvention,
) -> Result<AnalyzedSession> {
    if events.len() != seq.len() {
        return Err(Error::Input(format!(
            "session {} has {} events but {} snapshots",
            seq.session_id,
            seq.len(),
            events.len()
        )));
    }
    let mut p = prefix_predictions(model, seq)?;
    let mut events = events.to_vec();
    if convention == SeriesConvention::ExcludeFinal {
        p.probabilities.pop();
        events.pop();
    }
    let d = distance_series(&p, metric);
    Ok(AnalyzedSession {
        session_id: p.session_id,
        convention,
        label: None,
        predictions: p.probabilities,
        distances: d.distances,
        metric: d.metric,
        degenerate: d.degenerate,
        events,
    })
}

/// Analyzes every sequence in parallel; output keeps input order.
pub fn analyze_dataset(
    model: &TrainedModel,
    data: &[LabeledSequence],
    metric: &dyn DistanceMetric,
    convention: SeriesConvention,
) -> Result<Vec<AnalyzedSession>> {
    data.par_iter()
        .map(|d| {
            let mut a = analyze_sequence(model, &d.sequence, &d.snapshots, metric, convention)?;
            a.label = Some(d.label.is_positive() as u8);
            Ok(a)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(p: &[f64]) -> PredictionSeries {
        PredictionSeries { session_id: "s".into(), probabilities: p.to_vec() }
    }

    #[test]
    fn distances_follow_consecutive_predictions() {
        let d = distance_series(&series(&[0.1, 0.9]), &AbsoluteDifference);
        assert_eq!(d.distances.len(), 1);
        assert!((d.distances[0] - 0.8).abs() < 1e-15);
        assert!(!d.degenerate);
        let d = distance_series(&series(&[0.3; 6]), &AbsoluteDifference);
        assert_eq!(d.distances, vec![0.0; 5]);
        let d = distance_series(&series(&[0.3]), &SquaredDifference);
        assert!(d.degenerate && d.distances.is_empty());
        assert_eq!(d.metric, "squared");
    }

    #[test]
    fn metric_names_resolve() {
        assert_eq!(metric_by_name("abs").unwrap().distance(0.2, 0.5), 0.3);
        assert!(metric_by_name("cosine").is_err());
        assert_eq!("exclude_final".parse::<SeriesConvention>().unwrap(), SeriesConvention::ExcludeFinal);
    }
}
