use super::params::{GradientSet, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        Self { rho: 0.95, epsilon: 1e-6 }
    }
}

/// Running averages for Adadelta, one entry per parameter.
///
/// ```text
/// E[g²]  = ρ E[g²]  + (1-ρ) g²
/// Δx     = -sqrt(E[Δx²] + ε) / sqrt(E[g²] + ε) · g
/// E[Δx²] = ρ E[Δx²] + (1-ρ) Δx²
/// x     += Δx
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub config: AdadeltaConfig,
    sq_grad: GradientSet,
    sq_update: GradientSet,
}

impl AdadeltaState {
    pub fn new(params: &Network, config: AdadeltaConfig) -> Result<Self> {
        if !(config.rho > 0.0 && config.rho < 1.0) || !(config.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "adadelta needs 0 < rho < 1 and epsilon > 0, got rho={} epsilon={}",
                config.rho, config.epsilon
            )));
        }
        Ok(Self {
            config,
            sq_grad: GradientSet::zeros_like(params),
            sq_update: GradientSet::zeros_like(params),
        })
    }

    /// Accumulated `E[g²]`.
    pub fn mean_sq_grad(&self) -> &GradientSet {
        &self.sq_grad
    }

    /// Accumulated `E[Δx²]`.
    pub fn mean_sq_update(&self) -> &GradientSet {
        &self.sq_update
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut Network, grads: &GradientSet) -> Result<()> {
        if !grads.is_congruent(params) || !self.sq_grad.is_congruent(params) {
            return Err(Error::Shape("adadelta: parameters, gradients and state differ in shape".into()));
        }
        let AdadeltaConfig { rho, epsilon } = self.config;
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.sq_grad.tensors_mut().into_iter().zip(self.sq_update.tensors_mut()));
        for ((x, g), (eg, edx)) in tensors {
            for k in 0..x.len() {
                eg[k] = rho * eg[k] + (1.0 - rho) * g[k] * g[k];
                let dx = -((edx[k] + epsilon).sqrt() / (eg[k] + epsilon).sqrt()) * g[k];
                edx[k] = rho * edx[k] + (1.0 - rho) * dx * dx;
                x[k] += dx;
            }
        }
        Ok(())
    }
}

/// Value-returning form of [`AdadeltaState::step`].
pub fn adadelta_step(
    params: &Network,
    grads: &GradientSet,
    state: &AdadeltaState,
) -> Result<(Network, AdadeltaState)> {
    let mut params = params.clone();
    let mut state = state.clone();
    state.step(&mut params, grads)?;
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmath::InitConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(x: f64) -> Network {
        let mut net = Network::zeros(1, 1);
        net.dense.bias = x;
        net
    }

    fn scalar_grad(g: f64) -> GradientSet {
        let mut grads = GradientSet::zeros(1, 1);
        grads.dense.bias = g;
        grads
    }

    /// Independent scalar re-implementation of the recurrence.
    fn scalar_reference(x: &mut f64, eg: &mut f64, edx: &mut f64, g: f64, rho: f64, eps: f64) {
        *eg = rho * *eg + (1.0 - rho) * g * g;
        let rms_dx = (*edx + eps).sqrt();
        let rms_g = (*eg + eps).sqrt();
        let dx = -(rms_dx / rms_g) * g;
        *edx = rho * *edx + (1.0 - rho) * dx * dx;
        *x += dx;
    }

    #[test]
    fn first_step_with_unit_gradient() {
        let params = scalar_net(0.0);
        let state = AdadeltaState::new(&params, AdadeltaConfig::default()).unwrap();
        let (next, state) = adadelta_step(&params, &scalar_grad(1.0), &state).unwrap();
        let expected = -(1e-6f64 / 0.050001).sqrt();
        assert!((next.dense.bias - expected).abs() < 1e-15);
        assert!((next.dense.bias + 0.004_472_091_234_310_839).abs() < 1e-15);
        assert!((state.mean_sq_grad().dense.bias - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = Network::init(2, 2, InitConfig::default(), &mut rng);
        let mut state = AdadeltaState::new(&params, AdadeltaConfig::default()).unwrap();
        let mut g = GradientSet::zeros_like(&params);
        g.lstm.bias.fill(1.0);
        state.step(&mut params, &g).unwrap();
        let before_params = params.clone();
        let before = state.mean_sq_grad().lstm.bias[0];
        let before_dx = state.mean_sq_update().lstm.bias[0];
        let zero = GradientSet::zeros_like(&params);
        state.step(&mut params, &zero).unwrap();
        assert_eq!(params, before_params);
        assert!((state.mean_sq_grad().lstm.bias[0] - 0.95 * before).abs() < 1e-18);
        assert!((state.mean_sq_update().lstm.bias[0] - 0.95 * before_dx).abs() < 1e-18);
    }

    #[test]
    fn repeated_steps_match_scalar_reference() {
        let mut params = scalar_net(0.3);
        let mut state = AdadeltaState::new(&params, AdadeltaConfig::default()).unwrap();
        let (mut x, mut eg, mut edx) = (0.3, 0.0, 0.0);
        for g in [0.7, 0.7, -0.2, 1.5] {
            state.step(&mut params, &scalar_grad(g)).unwrap();
            scalar_reference(&mut x, &mut eg, &mut edx, g, 0.95, 1e-6);
            assert_eq!(params.dense.bias.to_bits(), x.to_bits());
            assert_eq!(state.mean_sq_grad().dense.bias.to_bits(), eg.to_bits());
            assert_eq!(state.mean_sq_update().dense.bias.to_bits(), edx.to_bits());
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = Network::zeros(2, 3);
        let mut state = AdadeltaState::new(&params, AdadeltaConfig::default()).unwrap();
        let g = GradientSet::zeros(2, 4);
        assert!(matches!(state.step(&mut params, &g), Err(Error::Shape(_))));
        assert!(AdadeltaState::new(&params, AdadeltaConfig { rho: 1.0, epsilon: 1e-6 }).is_err());
    }

    #[test]
    fn accumulators_stay_non_negative() {
        let mut params = scalar_net(0.0);
        let mut state = AdadeltaState::new(&params, AdadeltaConfig::default()).unwrap();
        for k in 0..50 {
            let g = ((k as f64) * 1.3).sin() * 4.0;
            state.step(&mut params, &scalar_grad(g)).unwrap();
            assert!(state.mean_sq_grad().dense.bias >= 0.0);
            assert!(state.mean_sq_update().dense.bias >= 0.0);
        }
    }
}
