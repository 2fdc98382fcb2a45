//! Seeded synthetic clickstreams with planted, recoverable signal.
//!
//! Each session draws an archetype, walks a first-order transition table
//! over page types with log-normal dwell gaps, optionally receives a
//! planted motif (a contiguous run of pages that sets the conversion
//! probability) and shock events (pages that scale the conversion
//! probability down). The outcome is drawn last, from an independent
//! uniform, so toggling a rule changes labels without touching events.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::{
    AttrValue, Derivation, FeatureDef, FeatureKind, FeatureSchema, LabelRecord, OutcomeLabel, RawEvent,
};
use crate::{Error, Result};

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    /// Share of sessions drawn from this archetype.
    pub weight: f64,
    /// Distribution of the first page type.
    pub initial: Vec<f64>,
    /// Row-stochastic page-type transition table.
    pub transitions: Vec<Vec<f64>>,
    pub min_events: usize,
    pub max_events: usize,
    /// Log-normal dwell gap: ln(ms) ~ N(mu, sigma²).
    pub dwell_mu: f64,
    pub dwell_sigma: f64,
    pub conversion_prob: f64,
}

/// A contiguous page run that, when present, sets the conversion probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifSpec {
    pub pages: Vec<String>,
    /// Probability that the motif is planted into a session.
    pub insert_prob: f64,
    pub prob_present: f64,
    /// Conversion probability when the motif is absent; the archetype's own
    /// probability when `None`.
    pub prob_absent: Option<f64>,
}

/// A page type that suppresses conversion wherever it occurs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    pub page_type: String,
    pub insert_prob: f64,
    /// Conversion probability is multiplied by this when a shock is present.
    pub conversion_multiplier: f64,
    /// Smallest 0-based position a shock may take (at least 1, so the shock
    /// always has a predecessor).
    pub min_position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub sessions: usize,
    pub start_ms: i64,
    /// Time windows in chronological order; sessions are spread evenly.
    pub windows: Vec<String>,
    pub window_span_ms: i64,
    pub page_types: Vec<String>,
    pub categories: Vec<String>,
    pub event_types: Vec<String>,
    pub event_type_weights: Vec<f64>,
    pub archetypes: Vec<Archetype>,
    pub motif: Option<MotifSpec>,
    pub shock: Option<ShockSpec>,
}

/// Per-session facts known only to the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub session_id: String,
    pub archetype: String,
    pub window: String,
    pub outcome: OutcomeLabel,
    pub motif_present: bool,
    /// 0-based event indices of shock events.
    pub shock_positions: Vec<usize>,
    pub base_conversion_prob: f64,
    pub conversion_prob: f64,
}

impl GroundTruth {
    /// True when the observed outcome is the minority outcome for this
    /// session's behaviour, i.e. the session belongs to a misprediction mode
    /// by construction.
    pub fn contradicts_behaviour(&self) -> bool {
        self.outcome.is_positive() != (self.conversion_prob >= 0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub events: Vec<RawEvent>,
    pub labels: Vec<LabelRecord>,
    pub truth: Vec<GroundTruth>,
}

const PAGES: [&str; 8] = ["home", "search", "listing", "event", "cart", "checkout", "help", "promo"];
const CATEGORIES: [&str; 4] = ["concerts", "sports", "theater", "comedy"];

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Transition table where each page moves to `next[page]` with probability
/// `advance` and otherwise follows `pref`.
fn funnel_table(pref: &[f64], next: &[usize], advance: f64) -> Vec<Vec<f64>> {
    let n = pref.len();
    let total: f64 = pref.iter().sum();
    (0..n)
        .map(|i| {
            let mut row: Vec<f64> = pref.iter().map(|p| (1.0 - advance) * p / total).collect();
            row[next[i]] += advance;
            row
        })
        .collect()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

// home search listing event cart checkout help promo
const NEXT: [usize; 8] = [1, 2, 3, 4, 5, 0, 0, 3];

fn buyer(weight: f64, conversion_prob: f64) -> Archetype {
    let pref = [1.0, 2.0, 2.0, 3.0, 1.5, 0.8, 0.3, 0.6];
    Archetype {
        name: "buyer".into(),
        weight,
        initial: normalized(&[3.0, 2.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.5]),
        transitions: funnel_table(&pref, &NEXT, 0.4),
        min_events: 8,
        max_events: 18,
        dwell_mu: 9.0,
        dwell_sigma: 0.6,
        conversion_prob,
    }
}

fn browser(weight: f64, conversion_prob: f64) -> Archetype {
    let pref = [2.0, 3.0, 3.0, 1.5, 0.3, 0.05, 0.8, 0.6];
    Archetype {
        name: "browser".into(),
        weight,
        initial: normalized(&[4.0, 2.0, 1.0, 0.5, 0.0, 0.0, 0.5, 0.5]),
        transitions: funnel_table(&pref, &[1, 2, 1, 2, 0, 0, 0, 2], 0.2),
        min_events: 8,
        max_events: 18,
        dwell_mu: 8.3,
        dwell_sigma: 0.8,
        conversion_prob,
    }
}

/// Browses at a buyer's pace without ever reaching the cart or checkout.
fn window_shopper(weight: f64, conversion_prob: f64) -> Archetype {
    let pref = [2.0, 3.0, 3.0, 0.2, 0.0, 0.0, 1.5, 0.6];
    Archetype {
        name: "window_shopper".into(),
        transitions: funnel_table(&pref, &[1, 2, 1, 2, 0, 0, 0, 2], 0.2),
        dwell_mu: 9.0,
        dwell_sigma: 0.6,
        ..browser(weight, conversion_prob)
    }
}

/// A buyer who moves quickly through the funnel and nearly always reaches
/// the cart.
fn committed_buyer(weight: f64, conversion_prob: f64) -> Archetype {
    let pref = [1.0, 2.0, 2.0, 3.0, 1.5, 0.8, 0.3, 0.6];
    Archetype {
        name: "committed_buyer".into(),
        transitions: funnel_table(&pref, &NEXT, 0.6),
        min_events: 10,
        ..buyer(weight, conversion_prob)
    }
}

fn undecided(weight: f64, conversion_prob: f64) -> Archetype {
    let pref = [1.5, 2.0, 2.0, 2.0, 1.0, 0.4, 1.0, 0.6];
    Archetype {
        name: "undecided".into(),
        weight,
        initial: normalized(&[3.0, 2.0, 1.0, 1.0, 0.0, 0.0, 0.5, 0.5]),
        transitions: funnel_table(&pref, &NEXT, 0.25),
        min_events: 8,
        max_events: 18,
        dwell_mu: 8.7,
        dwell_sigma: 0.7,
        conversion_prob,
    }
}

impl SimConfig {
    fn base(seed: u64, sessions: usize, archetypes: Vec<Archetype>) -> Self {
        Self {
            seed,
            sessions,
            start_ms: 1_451_606_400_000, // 2016-01-01T00:00:00Z
            windows: strings(&["2016-02", "2016-10", "2016-11", "2016-12", "2017-02"]),
            window_span_ms: 28 * 24 * 3600 * 1000,
            page_types: strings(&PAGES),
            categories: strings(&CATEGORIES),
            event_types: strings(&["click", "scroll", "tap"]),
            event_type_weights: vec![0.7, 0.2, 0.1],
            archetypes,
            motif: None,
            shock: None,
        }
    }

    /// Marketplace-like mix of buyers, browsers and undecided visitors, with
    /// an error page that suppresses conversion.
    pub fn marketplace(seed: u64, sessions: usize) -> Self {
        let mut cfg = Self::base(seed, sessions, vec![buyer(0.3, 0.8), browser(0.45, 0.05), undecided(0.25, 0.35)]);
        cfg.shock = Some(ShockSpec {
            page_type: "error".into(),
            insert_prob: 0.15,
            conversion_multiplier: 0.1,
            min_position: 1,
        });
        cfg
    }

    /// Labels are fully determined by the contiguous page run `promo → cart`.
    pub fn planted_motif(seed: u64, sessions: usize) -> Self {
        let mut cfg = Self::base(seed, sessions, vec![buyer(0.5, 0.5), browser(0.5, 0.5)]);
        cfg.motif = Some(MotifSpec {
            pages: strings(&["promo", "cart"]),
            insert_prob: 0.45,
            prob_present: 1.0,
            prob_absent: Some(0.0),
        });
        cfg
    }

    /// Mostly converting sessions where an error page kills conversion.
    pub fn planted_shock(seed: u64, sessions: usize) -> Self {
        let mut cfg = Self::base(seed, sessions, vec![buyer(0.7, 0.9), undecided(0.3, 0.7)]);
        cfg.shock = Some(ShockSpec {
            page_type: "error".into(),
            insert_prob: 0.4,
            conversion_multiplier: 0.0,
            min_position: 2,
        });
        cfg
    }

    /// Committed buyers who mostly convert and window shoppers who mostly do not. The
    /// minority outcome of each archetype forms its own misprediction mode:
    /// abandoning buyers end up as false positives, converting shoppers as
    /// false negatives.
    pub fn misprediction_modes(seed: u64, sessions: usize) -> Self {
        Self::base(seed, sessions, vec![committed_buyer(0.5, 0.85), window_shopper(0.5, 0.15)])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.sessions == 0 {
            return bad("session count must be at least 1".into());
        }
        if self.windows.is_empty() || self.window_span_ms <= 0 || self.start_ms < 0 {
            return bad("need at least one window with positive span and non-negative start".into());
        }
        if self.page_types.is_empty() || self.categories.is_empty() || self.event_types.is_empty() {
            return bad("page, category and event type lists must be non-empty".into());
        }
        check_distribution("event_type_weights", &self.event_type_weights, self.event_types.len())?;
        if self.archetypes.is_empty() {
            return bad("at least one archetype is required".into());
        }
        let mix: Vec<f64> = self.archetypes.iter().map(|a| a.weight).collect();
        check_distribution("archetype mix", &mix, self.archetypes.len())?;
        let n = self.page_types.len();
        for a in &self.archetypes {
            check_distribution(&format!("{} initial", a.name), &a.initial, n)?;
            if a.transitions.len() != n {
                return bad(format!("{} transition table needs {n} rows", a.name));
            }
            for (i, row) in a.transitions.iter().enumerate() {
                check_distribution(&format!("{} transitions row {i}", a.name), row, n)?;
            }
            if a.min_events == 0 || a.min_events > a.max_events {
                return bad(format!("{}: need 1 <= min_events <= max_events", a.name));
            }
            check_prob(&format!("{} conversion_prob", a.name), a.conversion_prob)?;
            if !(a.dwell_sigma >= 0.0) || !a.dwell_mu.is_finite() {
                return bad(format!("{}: invalid dwell parameters", a.name));
            }
        }
        if let Some(m) = &self.motif {
            if m.pages.is_empty() {
                return bad("motif needs at least one page".into());
            }
            check_prob("motif insert_prob", m.insert_prob)?;
            check_prob("motif prob_present", m.prob_present)?;
            if let Some(p) = m.prob_absent {
                check_prob("motif prob_absent", p)?;
            }
        }
        if let Some(s) = &self.shock {
            check_prob("shock insert_prob", s.insert_prob)?;
            check_prob("shock conversion_multiplier", s.conversion_multiplier)?;
            if s.min_position == 0 {
                return bad("shock min_position must be at least 1".into());
            }
        }
        Ok(())
    }

    /// Every page token the generator can emit.
    pub fn page_vocabulary(&self) -> Vec<String> {
        let mut pages = self.page_types.clone();
        let extra = self.motif.iter().flat_map(|m| m.pages.iter()).chain(self.shock.iter().map(|s| &s.page_type));
        for p in extra {
            if !pages.contains(p) {
                pages.push(p.clone());
            }
        }
        pages
    }

    /// A feature schema covering everything this configuration emits.
    pub fn default_schema(&self) -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureDef {
                name: "page_type".into(),
                kind: FeatureKind::Categorical { source: "page_type".into(), vocabulary: self.page_vocabulary() },
            },
            FeatureDef {
                name: "event_type".into(),
                kind: FeatureKind::Categorical { source: "event_type".into(), vocabulary: self.event_types.clone() },
            },
            FeatureDef {
                name: "category".into(),
                kind: FeatureKind::Categorical { source: "category".into(), vocabulary: self.categories.clone() },
            },
            FeatureDef { name: "gap_ms".into(), kind: FeatureKind::Derived { derive: Derivation::InterEventGap } },
            FeatureDef { name: "scroll_depth".into(), kind: FeatureKind::Numeric { source: "scroll_depth".into() } },
        ])
        .expect("generated schema is valid")
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {p} is not a probability")))
    }
}

fn check_distribution(name: &str, p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::Config(format!("{name} has {} entries, expected {len}", p.len())));
    }
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Config(format!("{name} has an entry outside [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Config(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

fn draw_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding slack: last index with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn contains_run(pages: &[String], motif: &[String]) -> bool {
    motif.len() <= pages.len() && pages.windows(motif.len()).any(|w| w == motif)
}

/// Generates events, observed labels and ground truth for `config`.
///
/// Session `i` draws from its own ChaCha stream, so output depends only on
/// the seed and the configuration.
pub fn generate(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let width = (config.sessions as f64).log10().floor() as usize + 1;
    let mut out = SimOutput { events: Vec::new(), labels: Vec::new(), truth: Vec::new() };
    let mix: Vec<f64> = config.archetypes.iter().map(|a| a.weight).collect();
    let nwin = config.windows.len();

    for i in 0..config.sessions {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let session_id = format!("s{i:0width$}");
        let arch = &config.archetypes[draw_index(&mut rng, &mix)];

        let len = rng.random_range(arch.min_events..=arch.max_events);
        let mut pages = Vec::with_capacity(len + 4);
        let mut page = draw_index(&mut rng, &arch.initial);
        pages.push(config.page_types[page].clone());
        for _ in 1..len {
            page = draw_index(&mut rng, &arch.transitions[page]);
            pages.push(config.page_types[page].clone());
        }

        // draws are unconditional so every rule consumes the same randomness
        if let Some(m) = &config.motif {
            let plant = rng.random_bool(m.insert_prob);
            let at = rng.random_range(0..=pages.len());
            if plant {
                pages.splice(at..at, m.pages.iter().cloned());
            }
        }
        if let Some(s) = &config.shock {
            let plant = rng.random_bool(s.insert_prob);
            let lo = s.min_position.min(pages.len());
            let at = rng.random_range(lo..=pages.len());
            if plant {
                pages.insert(at, s.page_type.clone());
            }
        }
        let shock_positions: Vec<usize> = match &config.shock {
            Some(s) => pages.iter().enumerate().filter(|(_, p)| **p == s.page_type).map(|(i, _)| i).collect(),
            None => Vec::new(),
        };

        let win_idx = i * nwin / config.sessions;
        // leave an hour at the end of the window for the session itself
        let room = (config.window_span_ms - 3_600_000).max(1);
        let mut ts = config.start_ms + win_idx as i64 * config.window_span_ms + rng.random_range(0..room);
        let dwell = LogNormal::new(arch.dwell_mu, arch.dwell_sigma).map_err(|e| Error::Config(e.to_string()))?;
        for (t, page) in pages.iter().enumerate() {
            if t > 0 {
                ts += (dwell.sample(&mut rng).round() as i64).max(1);
            }
            let event_type = config.event_types[draw_index(&mut rng, &config.event_type_weights)].clone();
            let category = config.categories[rng.random_range(0..config.categories.len())].clone();
            let depth: f64 = rng.random();
            let mut extras = BTreeMap::new();
            extras.insert("scroll_depth".to_string(), AttrValue::Number((depth * 1000.0).round() / 1000.0));
            out.events.push(RawEvent {
                session_id: session_id.clone(),
                timestamp: ts,
                event_type,
                page_type: page.clone(),
                category,
                extras,
            });
        }

        let motif_present = config.motif.as_ref().is_some_and(|m| contains_run(&pages, &m.pages));
        let base = match &config.motif {
            Some(m) if motif_present => m.prob_present,
            Some(m) => m.prob_absent.unwrap_or(arch.conversion_prob),
            None => arch.conversion_prob,
        };
        let prob = match &config.shock {
            Some(s) if !shock_positions.is_empty() => base * s.conversion_multiplier,
            _ => base,
        };
        let u: f64 = rng.random();
        let outcome = OutcomeLabel::from(u < prob);
        let window = config.windows[win_idx].clone();

        out.labels.push(LabelRecord { session_id: session_id.clone(), outcome, window: window.clone() });
        out.truth.push(GroundTruth {
            session_id,
            archetype: arch.name.clone(),
            window,
            outcome,
            motif_present,
            shock_positions,
            base_conversion_prob: base,
            conversion_prob: prob,
        });
    }
    Ok(out)
}

pub fn write_truth<W: Write>(mut writer: W, truth: &[GroundTruth]) -> Result<()> {
    for t in truth {
        serde_json::to_writer(&mut writer, t)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_truth<R: BufRead>(reader: R) -> Result<Vec<GroundTruth>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
