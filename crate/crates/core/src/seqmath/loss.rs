use crate::{Error, Result};

/// Probabilities are clamped to `[DEFAULT_CLIP, 1 - DEFAULT_CLIP]` before the log.
pub const DEFAULT_CLIP: f64 = 1e-7;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn check_label(label: f64) -> Result<()> {
    if label == 0.0 || label == 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("label must be 0 or 1, got {label}")))
    }
}

/// Binary cross-entropy with an optional positive-class weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bce {
    pub clip: f64,
    pub pos_weight: f64,
}

impl Default for Bce {
    fn default() -> Self {
        Self { clip: DEFAULT_CLIP, pos_weight: 1.0 }
    }
}

impl Bce {
    pub fn loss(&self, z: f64, label: f64) -> Result<f64> {
        check_label(label)?;
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::Input(format!("probability {z} outside [0, 1]")));
        }
        let z = z.clamp(self.clip, 1.0 - self.clip);
        Ok(-(self.pos_weight * label * z.ln() + (1.0 - label) * (1.0 - z).ln()))
    }

    /// Derivative of the loss with respect to the pre-sigmoid logit.
    ///
    /// Uses the unclamped `z`; this equals the derivative of the clamped
    /// loss whenever `z` lies inside the clamp band.
    pub fn dlogit(&self, z: f64, label: f64) -> f64 {
        self.pos_weight * label * (z - 1.0) + (1.0 - label) * z
    }
}

/// `-[y ln z + (1 - y) ln(1 - z)]` with the default clamp and unit weights.
pub fn bce_loss(z: f64, label: f64) -> Result<f64> {
    Bce::default().loss(z, label)
}
