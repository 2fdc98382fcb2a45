use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledSequence;
use crate::ingest::{apply_scaler, fit_scaler, ActionSequence, FeatureSchema, Scaler, SchemaFingerprint};
use crate::seqmath::{
    backward_with, dense_head, lstm_forward, AdadeltaConfig, AdadeltaState, Bce, Embedding, GradientSet, InitConfig,
    Network,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub rho: f64,
    pub epsilon: f64,
    pub init_scale: f64,
    pub forget_bias: f64,
    /// Weight of the positive-class term in the loss.
    pub pos_weight: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        let ada = AdadeltaConfig::default();
        let init = InitConfig::default();
        Self {
            hidden_dim: 32,
            epochs: 30,
            batch_size: 32,
            rho: ada.rho,
            epsilon: ada.epsilon,
            init_scale: init.scale,
            forget_bias: init.forget_bias,
            pos_weight: 1.0,
        }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("hidden_dim and batch_size must be positive".into()));
        }
        if !(self.pos_weight > 0.0) || !(self.init_scale >= 0.0) {
            return Err(Error::Config("pos_weight must be positive and init_scale non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub hyperparams: Hyperparams,
    /// Time windows the training data came from.
    pub data_windows: Vec<String>,
    pub train_sequences: usize,
}

/// A fitted predictor together with everything needed to apply it to raw
/// sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub scaler: Scaler,
    pub schema: FeatureSchema,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub model: TrainedModel,
    /// Mean training loss before any update.
    pub initial_loss: f64,
    /// Mean training loss per epoch, accumulated during the epoch.
    pub loss_curve: Vec<f64>,
}

impl TrainedModel {
    pub fn fingerprint(&self) -> SchemaFingerprint {
        self.scaler.fingerprint
    }

    /// Scales a raw sequence with the model's scaler; already-scaled
    /// sequences are checked and passed through.
    pub fn prepare(&self, seq: &ActionSequence) -> Result<ActionSequence> {
        if seq.fingerprint != self.fingerprint() {
            return Err(Error::Schema(format!(
                "sequence {} uses schema {}, model expects {}",
                seq.session_id,
                seq.fingerprint,
                self.fingerprint()
            )));
        }
        if seq.scaled {
            Ok(seq.clone())
        } else {
            apply_scaler(seq, &self.scaler)
        }
    }

    /// Hidden state after every event of `seq`.
    pub fn hidden_states(&self, seq: &ActionSequence) -> Result<(Array2<f64>, Embedding)> {
        let scaled = self.prepare(seq)?;
        lstm_forward(scaled.features.view(), &self.network.lstm)
    }

    pub fn embedding(&self, seq: &ActionSequence) -> Result<Embedding> {
        Ok(self.hidden_states(seq)?.1)
    }

    /// Outcome probability after the whole sequence.
    pub fn predict(&self, seq: &ActionSequence) -> Result<f64> {
        let emb = self.embedding(seq)?;
        Ok(dense_head(&self.network.dense, emb.values().view()))
    }
}

fn mean_loss(net: &Network, data: &[(ArrayView2<'_, f64>, f64)], bce: &Bce) -> Result<f64> {
    let losses: Vec<f64> = data
        .par_iter()
        .map(|(x, y)| {
            let (_, emb) = lstm_forward(*x, &net.lstm)?;
            bce.loss(dense_head(&net.dense, emb.values().view()), *y)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains a fresh model on raw (unscaled) sequences.
///
/// The scaler is fitted on `train` only. Each epoch shuffles with the run
/// seed, sums per-sequence gradients over each mini-batch in batch order
/// and applies one Adadelta step per batch.
pub fn train_model(
    train: &[LabeledSequence],
    schema: &FeatureSchema,
    hp: &Hyperparams,
    seed: u64,
) -> Result<TrainingRun> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let raw: Vec<ActionSequence> = train.iter().map(|t| t.sequence.clone()).collect();
    let scaler = fit_scaler(&raw, schema)?;
    let scaled: Vec<ActionSequence> = raw.iter().map(|s| apply_scaler(s, &scaler)).collect::<Result<_>>()?;
    let data: Vec<(ArrayView2<'_, f64>, f64)> =
        scaled.iter().zip(train).map(|(s, t)| (s.features.view(), t.label.as_f64())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = InitConfig { scale: hp.init_scale, forget_bias: hp.forget_bias };
    let mut net = Network::init(schema.width(), hp.hidden_dim, init, &mut rng);
    let mut opt = AdadeltaState::new(&net, AdadeltaConfig { rho: hp.rho, epsilon: hp.epsilon })?;
    let bce = Bce { pos_weight: hp.pos_weight, ..Bce::default() };

    let initial_loss = mean_loss(&net, &data, &bce)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_curve = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(hp.batch_size).enumerate() {
            let results: Vec<(f64, GradientSet)> = batch
                .par_iter()
                .map(|&i| backward_with(data[i].0, data[i].1, &net.lstm, &net.dense, &bce))
                .collect::<Result<_>>()?;
            let mut grads = GradientSet::zeros_like(&net);
            for (&i, (loss, g)) in batch.iter().zip(&results) {
                if !loss.is_finite() || !g.l2_norm().is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss {loss} at epoch {epoch}, batch {b}, session {}",
                        train[i].session_id()
                    )));
                }
                epoch_loss += loss;
                grads.accumulate(g)?;
            }
            opt.step(&mut net, &grads)?;
        }
        loss_curve.push(epoch_loss / data.len() as f64);
    }

    let meta = TrainingMeta {
        seed,
        hyperparams: hp.clone(),
        data_windows: {
            let mut w: Vec<String> = train.iter().map(|t| t.window.clone()).collect();
            w.sort();
            w.dedup();
            w
        },
        train_sequences: train.len(),
    };
    Ok(TrainingRun {
        model: TrainedModel { network: net, scaler, schema: schema.clone(), meta },
        initial_loss,
        loss_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FeatureDef, FeatureKind, OutcomeLabel};
    use rand::Rng;

    fn toy_schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureDef { name: "signal".into(), kind: FeatureKind::Numeric { source: "signal".into() } },
            FeatureDef { name: "noise".into(), kind: FeatureKind::Numeric { source: "noise".into() } },
        ])
        .unwrap()
    }

    /// Label is the sign of the (constant) first feature.
    fn toy_set(n: usize, seed: u64) -> Vec<LabeledSequence> {
        let schema = toy_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let positive = i % 2 == 0;
                let sign = if positive { 1.0 } else { -1.0 };
                let len = rng.random_range(2..6);
                let features = Array2::from_shape_fn((len, 2), |(_, c)| {
                    if c == 0 { sign * rng.random_range(0.5..2.0) } else { rng.random_range(-1.0..1.0) }
                });
                LabeledSequence {
                    sequence: ActionSequence {
                        session_id: format!("t{i}"),
                        features,
                        fingerprint: schema.fingerprint(),
                        scaled: false,
                        dropped_prefix: 0,
                    },
                    label: OutcomeLabel::from(positive),
                    window: "w".into(),
                    snapshots: vec![Default::default(); len],
                }
            })
            .collect()
    }

    #[test]
    fn separable_toy_set_loss_drops_below_a_fifth() {
        let data = toy_set(8, 1);
        let hp = Hyperparams { hidden_dim: 8, epochs: 150, batch_size: 2, ..Hyperparams::default() };
        let run = train_model(&data, &toy_schema(), &hp, 42).unwrap();
        let last = *run.loss_curve.last().unwrap();
        assert!(last < 0.2 * run.initial_loss, "initial {} final {last}", run.initial_loss);
        for item in &data {
            let p = run.model.predict(&item.sequence).unwrap();
            assert_eq!(p >= 0.5, item.label.is_positive());
        }
    }

    #[test]
    fn zero_epochs_returns_seeded_initialisation() {
        let data = toy_set(4, 2);
        let hp = Hyperparams { hidden_dim: 5, epochs: 0, ..Hyperparams::default() };
        let run = train_model(&data, &toy_schema(), &hp, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let expected = Network::init(2, 5, InitConfig::default(), &mut rng);
        assert_eq!(run.model.network, expected);
        assert!(run.loss_curve.is_empty());
    }

    #[test]
    fn same_seed_same_model() {
        let data = toy_set(40, 3);
        let hp = Hyperparams { hidden_dim: 6, epochs: 3, batch_size: 7, ..Hyperparams::default() };
        let a = train_model(&data, &toy_schema(), &hp, 5).unwrap();
        let b = train_model(&data, &toy_schema(), &hp, 5).unwrap();
        assert_eq!(a, b);
        let bits = |m: &TrainedModel| m.network.tensors().iter().flat_map(|t| t.iter().map(|x| x.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&a.model), bits(&b.model));
        let c = train_model(&data, &toy_schema(), &hp, 6).unwrap();
        assert_ne!(a.model.network, c.model.network);
    }

    #[test]
    fn rejects_empty_or_foreign_input() {
        let hp = Hyperparams::default();
        assert!(matches!(train_model(&[], &toy_schema(), &hp, 1), Err(Error::Input(_))));
        let mut data = toy_set(2, 4);
        data[1].sequence.fingerprint = SchemaFingerprint(7);
        assert!(matches!(train_model(&data, &toy_schema(), &hp, 1), Err(Error::Schema(_))));
    }

    #[test]
    fn non_finite_features_abort_training() {
        let mut data = toy_set(4, 5);
        let hp = Hyperparams { hidden_dim: 3, epochs: 1, init_scale: 0.0, ..Hyperparams::default() };
        // an infinite feature must be refused before any update
        data[0].sequence.features[[0, 1]] = f64::INFINITY;
        let err = train_model(&data, &toy_schema(), &hp, 1).unwrap_err();
        assert!(matches!(err, Error::Input(_) | Error::Training(_)), "{err}");
    }
}
