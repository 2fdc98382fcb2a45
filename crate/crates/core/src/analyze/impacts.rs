use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::series::AnalyzedSession;
use crate::ingest::EventSnapshot;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Rose,
    Fell,
    Unchanged,
}

/// An event after which the predicted outcome moved by at least the
/// analysis threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactEvent {
    pub session_id: String,
    /// 0-based index of the event within the analyzed session.
    pub event_index: usize,
    pub distance: f64,
    pub direction: Direction,
    pub before: f64,
    pub after: f64,
    pub snapshot: EventSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "value", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Absolute(f64),
    /// Percentile in `[0, 100]` of every distance in the collection,
    /// linearly interpolated.
    Percentile(f64),
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::Percentile(95.0)
    }
}

impl std::str::FromStr for ThresholdPolicy {
    type Err = Error;

    /// `p95` / `p99.5` for percentiles, a bare number for an absolute value.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid threshold {s:?} (e.g. 0.2 or p95)"));
        let policy = match s.strip_prefix('p') {
            Some(q) => Self::Percentile(q.parse().map_err(|_| bad())?),
            None => Self::Absolute(s.parse().map_err(|_| bad())?),
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Absolute(v) if v.is_finite() && v >= 0.0 => Ok(()),
            Self::Percentile(q) if (0.0..=100.0).contains(&q) => Ok(()),
            other => Err(Error::Config(format!("invalid threshold policy {other:?}"))),
        }
    }

    /// Concrete cut-off for a pool of distances; `None` when the pool is empty.
    pub fn resolve(&self, distances: &[f64]) -> Option<f64> {
        if distances.is_empty() {
            return None;
        }
        match *self {
            Self::Absolute(v) => Some(v),
            Self::Percentile(q) => {
                let mut sorted = distances.to_vec();
                sorted.sort_by(f64::total_cmp);
                let pos = q / 100.0 * (sorted.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
            }
        }
    }
}

fn impact_at(s: &AnalyzedSession, j: usize) -> ImpactEvent {
    let (before, after) = (s.predictions[j], s.predictions[j + 1]);
    let direction = match after.partial_cmp(&before) {
        Some(Ordering::Greater) => Direction::Rose,
        Some(Ordering::Less) => Direction::Fell,
        _ => Direction::Unchanged,
    };
    ImpactEvent {
        session_id: s.session_id.clone(),
        event_index: j + 1,
        distance: s.distances[j],
        direction,
        before,
        after,
        snapshot: s.events.get(j + 1).cloned().unwrap_or_default(),
    }
}

fn by_rank(a: &ImpactEvent, b: &ImpactEvent) -> Ordering {
    b.distance
        .total_cmp(&a.distance)
        .then_with(|| a.session_id.cmp(&b.session_id))
        .then_with(|| a.event_index.cmp(&b.event_index))
}

/// Every event at or above the policy's threshold, highest distance first.
/// Ties are ordered by session id, then event index.
pub fn rank_impacts(sessions: &[AnalyzedSession], policy: ThresholdPolicy) -> Result<Vec<ImpactEvent>> {
    policy.validate()?;
    let pool: Vec<f64> = sessions.iter().flat_map(|s| s.distances.iter().copied()).collect();
    let Some(threshold) = policy.resolve(&pool) else {
        return Ok(Vec::new());
    };
    let mut out: Vec<ImpactEvent> = sessions
        .iter()
        .flat_map(|s| (0..s.distances.len()).filter(|&j| s.distances[j] >= threshold).map(move |j| impact_at(s, j)))
        .collect();
    out.sort_by(by_rank);
    Ok(out)
}

/// The single largest change within one session, earliest on ties.
pub fn top_impact(session: &AnalyzedSession) -> Option<ImpactEvent> {
    (0..session.distances.len()).map(|j| impact_at(session, j)).min_by(by_rank)
}
