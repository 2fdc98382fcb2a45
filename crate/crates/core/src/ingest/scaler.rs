use serde::{Deserialize, Serialize};

use super::schema::{ActionSequence, FeatureSchema, SchemaFingerprint};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub column: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Per-column z-scoring of numeric features, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub fingerprint: SchemaFingerprint,
    pub width: usize,
    pub columns: Vec<ColumnStats>,
}

impl Scaler {
    /// Scales one feature row in place.
    pub fn scale_row(&self, row: &mut [f64]) {
        for c in &self.columns {
            row[c.column] = if c.std > 0.0 { (row[c.column] - c.mean) / c.std } else { 0.0 };
        }
    }
}

/// Fits mean and standard deviation of every numeric column over all rows
/// of the training sequences pooled together.
pub fn fit_scaler(train: &[ActionSequence], schema: &FeatureSchema) -> Result<Scaler> {
    let fingerprint = schema.fingerprint();
    let width = schema.width();
    for seq in train {
        if seq.fingerprint != fingerprint {
            return Err(Error::Schema(format!(
                "sequence {} was encoded with schema {}, scaler expects {fingerprint}",
                seq.session_id, seq.fingerprint
            )));
        }
        if seq.scaled {
            return Err(Error::Input(format!("sequence {} is already scaled", seq.session_id)));
        }
        if let Some(bad) = seq.features.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("sequence {} contains non-finite value {bad}", seq.session_id)));
        }
    }
    let rows: usize = train.iter().map(ActionSequence::len).sum();
    if rows == 0 {
        return Err(Error::Input("cannot fit a scaler on zero rows".into()));
    }
    let n = rows as f64;
    let columns = schema
        .numeric_columns()
        .into_iter()
        .map(|column| {
            let values = || train.iter().flat_map(|s| s.features.column(column).to_vec());
            let mean = values().sum::<f64>() / n;
            let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            ColumnStats { column, mean, std: var.sqrt() }
        })
        .collect();
    Ok(Scaler { fingerprint, width, columns })
}

/// Returns a standardised copy; categorical columns are left untouched.
pub fn apply_scaler(seq: &ActionSequence, scaler: &Scaler) -> Result<ActionSequence> {
    if seq.fingerprint != scaler.fingerprint {
        return Err(Error::Schema(format!(
            "sequence {} uses schema {}, scaler was fitted on {}",
            seq.session_id, seq.fingerprint, scaler.fingerprint
        )));
    }
    if seq.width() != scaler.width {
        return Err(Error::Shape(format!("sequence width {} != scaler width {}", seq.width(), scaler.width)));
    }
    if seq.scaled {
        return Err(Error::Input(format!("sequence {} is already scaled", seq.session_id)));
    }
    let mut out = seq.clone();
    for mut row in out.features.rows_mut() {
        scaler.scale_row(row.as_slice_mut().expect("standard layout"));
    }
    out.scaled = true;
    Ok(out)
}
