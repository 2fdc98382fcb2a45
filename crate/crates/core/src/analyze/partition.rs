use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::train::{LabeledSequence, TrainedModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    TruePositive,
    TrueNegative,
    FalsePositive,
    FalseNegative,
}

/// Session ids split by predicted versus observed outcome.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionPartition {
    pub threshold: f64,
    pub tp: BTreeSet<String>,
    pub tn: BTreeSet<String>,
    pub fp: BTreeSet<String>,
    #[serde(rename = "fn")]
    pub fn_: BTreeSet<String>,
}

impl ConfusionPartition {
    pub fn len(&self) -> usize {
        self.tp.len() + self.tn.len() + self.fp.len() + self.fn_.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// FP ∪ FN.
    pub fn mispredicted(&self) -> BTreeSet<String> {
        self.fp.union(&self.fn_).cloned().collect()
    }

    pub fn outcome_of(&self, session_id: &str) -> Option<Outcome> {
        [
            (&self.tp, Outcome::TruePositive),
            (&self.tn, Outcome::TrueNegative),
            (&self.fp, Outcome::FalsePositive),
            (&self.fn_, Outcome::FalseNegative),
        ]
        .into_iter()
        .find(|(set, _)| set.contains(session_id))
        .map(|(_, o)| o)
    }
}

/// Partitions `(session_id, probability, observed)` triples; a session is
/// predicted positive when its probability is at least `threshold`.
pub fn partition_predictions(scored: &[(String, f64, bool)], threshold: f64) -> Result<ConfusionPartition> {
    let mut out = ConfusionPartition { threshold, ..ConfusionPartition::default() };
    let mut seen = BTreeSet::new();
    for (id, p, y) in scored {
        if !seen.insert(id.as_str()) {
            return Err(Error::Input(format!("session {id} appears twice in the evaluated set")));
        }
        let set = match (*p >= threshold, *y) {
            (true, true) => &mut out.tp,
            (false, false) => &mut out.tn,
            (true, false) => &mut out.fp,
            (false, true) => &mut out.fn_,
        };
        set.insert(id.clone());
    }
    Ok(out)
}

/// Full-sequence predictions on `data`, partitioned at `threshold`.
pub fn confusion_partition(model: &TrainedModel, data: &[LabeledSequence], threshold: f64) -> Result<ConfusionPartition> {
    use rayon::prelude::*;
    if data.is_empty() {
        return Err(Error::Input("cannot partition an empty labeled set".into()));
    }
    let scored = data
        .par_iter()
        .map(|d| Ok((d.session_id().to_string(), model.predict(&d.sequence)?, d.label.is_positive())))
        .collect::<Result<Vec<_>>>()?;
    partition_predictions(&scored, threshold)
}
