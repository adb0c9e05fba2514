use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::grads::GradientSet;
use super::mlp::Mlp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 1e-3,
            alpha: 0.99,
            epsilon: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(
                "rmsprop",
                format!("alpha {} outside (0, 1)", self.alpha),
            ));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::invalid("rmsprop", "epsilon must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("rmsprop", "learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Maximize: parameters move along the gradient.
    Ascend,
    /// Minimize: parameters move against the gradient.
    Descend,
}

/// Running mean of squared gradients, one accumulator per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    accum: Vec<(Array2<f64>, Array1<f64>)>,
}

impl RmsPropState {
    pub fn new(net: &Mlp, config: RmsPropConfig) -> Result<Self> {
        config.validate()?;
        Ok(RmsPropState {
            config,
            accum: net
                .layers()
                .iter()
                .map(|l| {
                    (
                        Array2::zeros(l.weights.raw_dim()),
                        Array1::zeros(l.bias.len()),
                    )
                })
                .collect(),
        })
    }

    pub fn accumulators(&self) -> &[(Array2<f64>, Array1<f64>)] {
        &self.accum
    }

    /// `v ← αv + (1−α)g²`, then `θ ← θ ± lr·g/(√v + ε)`.
    pub fn step(&mut self, net: &mut Mlp, grads: &GradientSet, direction: Direction) -> Result<()> {
        if !grads.matches(net) || self.accum.len() != net.layers().len() {
            return Err(Error::shape(
                "rmsprop step",
                format!("{:?}", net.sizes()),
                "gradient set of different shape",
            ));
        }
        let RmsPropConfig {
            learning_rate,
            alpha,
            epsilon,
        } = self.config;
        let sign = match direction {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        };
        let update = |theta: &mut f64, v: &mut f64, &g: &f64| {
            *v = alpha * *v + (1.0 - alpha) * g * g;
            *theta += sign * learning_rate * g / (v.sqrt() + epsilon);
        };
        for ((layer, g), (vw, vb)) in net
            .layers_mut()
            .iter_mut()
            .zip(grads.layers())
            .zip(self.accum.iter_mut())
        {
            Zip::from(&mut layer.weights)
                .and(vw)
                .and(&g.weights)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(vb)
                .and(&g.bias)
                .for_each(update);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DenseLayer, HiddenActivation, LayerGrad, OutputActivation};
    use ndarray::array;

    fn scalar_net(theta: f64) -> Mlp {
        let layer = DenseLayer {
            weights: array![[theta]],
            bias: array![0.0],
        };
        Mlp::new(
            vec![layer],
            HiddenActivation::LeakyRelu(0.2),
            OutputActivation::Identity,
        )
        .unwrap()
    }

    fn scalar_grad(g: f64) -> GradientSet {
        GradientSet::from_layers(vec![LayerGrad {
            weights: array![[g]],
            bias: array![0.0],
        }])
    }

    #[test]
    fn zero_gradient_only_decays_accumulators() {
        let mut net = scalar_net(0.7);
        let mut state = RmsPropState::new(&net, RmsPropConfig::default()).unwrap();
        state
            .step(&mut net, &scalar_grad(2.0), Direction::Descend)
            .unwrap();
        let v1 = state.accumulators()[0].0[[0, 0]];
        let before = net.clone();
        state
            .step(&mut net, &scalar_grad(0.0), Direction::Descend)
            .unwrap();
        assert_eq!(net, before);
        assert_eq!(state.accumulators()[0].0[[0, 0]], 0.99 * v1);
    }

    #[test]
    fn first_step_hand_value() {
        let mut net = scalar_net(0.0);
        let mut state = RmsPropState::new(&net, RmsPropConfig::default()).unwrap();
        state
            .step(&mut net, &scalar_grad(1.0), Direction::Descend)
            .unwrap();
        let expected = -1e-3 / (0.01f64.sqrt() + 1e-8);
        assert!((net.layers()[0].weights[[0, 0]] - expected).abs() < 1e-15);
        assert!((expected + 0.01).abs() < 1e-9);
    }

    #[test]
    fn second_step_is_smaller() {
        let mut net = scalar_net(0.0);
        let mut state = RmsPropState::new(&net, RmsPropConfig::default()).unwrap();
        state
            .step(&mut net, &scalar_grad(1.0), Direction::Descend)
            .unwrap();
        let after_one = net.layers()[0].weights[[0, 0]];
        state
            .step(&mut net, &scalar_grad(1.0), Direction::Descend)
            .unwrap();
        let second = after_one - net.layers()[0].weights[[0, 0]];
        // v₁ = 0.01, v₂ = 0.99·0.01 + 0.01 = 0.0199
        let v2 = state.accumulators()[0].0[[0, 0]];
        assert!((v2 - 0.0199).abs() < 1e-15);
        let expected = 1e-3 / (0.0199f64.sqrt() + 1e-8);
        assert!((second - expected).abs() < 1e-15);
        assert!(second < -after_one);
    }

    #[test]
    fn ascend_moves_along_gradient() {
        let mut net = scalar_net(0.0);
        let mut state = RmsPropState::new(&net, RmsPropConfig::default()).unwrap();
        state
            .step(&mut net, &scalar_grad(1.0), Direction::Ascend)
            .unwrap();
        assert!(net.layers()[0].weights[[0, 0]] > 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = scalar_net(0.0);
        let mut state = RmsPropState::new(&net, RmsPropConfig::default()).unwrap();
        let bad = GradientSet::from_layers(vec![LayerGrad {
            weights: array![[1.0, 2.0]],
            bias: array![0.0],
        }]);
        assert!(state.step(&mut net, &bad, Direction::Descend).is_err());
    }

    #[test]
    fn invalid_hyperparameters() {
        let net = scalar_net(0.0);
        let bad_alpha = RmsPropConfig {
            alpha: 1.0,
            ..Default::default()
        };
        assert!(RmsPropState::new(&net, bad_alpha).is_err());
        let bad_eps = RmsPropConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(RmsPropState::new(&net, bad_eps).is_err());
    }
}
