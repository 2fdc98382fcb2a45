use std::collections::{BTreeMap, BTreeSet};

use super::dataset::LabeledSequence;
use crate::ingest::LabelRecord;
use crate::{Error, Result};

/// Anything tagged with a time window.
pub trait Windowed {
    fn window(&self) -> &str;
}

impl Windowed for LabeledSequence {
    fn window(&self) -> &str {
        &self.window
    }
}

impl Windowed for LabelRecord {
    fn window(&self) -> &str {
        &self.window
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSplit<T> {
    pub train: Vec<T>,
    /// Held-out items keyed by window; windows may lie before or after the
    /// training window.
    pub eval: BTreeMap<String, Vec<T>>,
    pub warnings: Vec<String>,
}

impl<T> TimeSplit<T> {
    pub fn eval_len(&self) -> usize {
        self.eval.values().map(Vec::len).sum()
    }

    pub fn eval_items(&self) -> impl Iterator<Item = &T> {
        self.eval.values().flatten()
    }
}

/// Items whose window is in `train_windows` go to training; everything
/// else goes to the evaluation set of its own window.
pub fn split_by_time<T: Windowed>(items: Vec<T>, train_windows: &[String]) -> Result<TimeSplit<T>> {
    let train_set: BTreeSet<&str> = train_windows.iter().map(String::as_str).collect();
    let mut split = TimeSplit { train: Vec::new(), eval: BTreeMap::new(), warnings: Vec::new() };
    for item in items {
        if train_set.contains(item.window()) {
            split.train.push(item);
        } else {
            split.eval.entry(item.window().to_string()).or_default().push(item);
        }
    }
    if split.train.is_empty() {
        return Err(Error::Split(format!("no items fall in the training windows {train_windows:?}")));
    }
    if split.eval.is_empty() {
        split.warnings.push("training windows cover every item; evaluation set is empty".into());
    }
    Ok(split)
}
