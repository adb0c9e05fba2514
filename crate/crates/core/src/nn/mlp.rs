use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grads::{GradientSet, LayerGrad};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    LeakyRelu(f64),
}

impl HiddenActivation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            HiddenActivation::LeakyRelu(slope) => z.max(0.0) + slope * z.min(0.0),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            HiddenActivation::LeakyRelu(slope) => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseLayer {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform(−a, a) with a = √(6 / (fan_in + fan_out)); zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let a = (6.0 / (input + output) as f64).sqrt();
        let weights = Array2::from_shape_fn((output, input), |_| rng.random_range(-a..a));
        DenseLayer {
            weights,
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.bias.len() != self.output_dim() {
            return Err(Error::shape(
                "dense layer bias",
                self.output_dim(),
                self.bias.len(),
            ));
        }
        if !self
            .weights
            .iter()
            .chain(self.bias.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite { layer: index });
        }
        Ok(())
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[k]` is the input to layer `k`.
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pub pre: Vec<Array2<f64>>,
    /// Final activated output (unclamped).
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    hidden: HiddenActivation,
    output: OutputActivation,
}

impl Mlp {
    pub fn new(
        layers: Vec<DenseLayer>,
        hidden: HiddenActivation,
        output: OutputActivation,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("mlp", "at least one layer is required"));
        }
        let HiddenActivation::LeakyRelu(slope) = hidden;
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::invalid(
                "mlp",
                format!("leaky relu slope {slope} outside (0, 1)"),
            ));
        }
        for (k, layer) in layers.iter().enumerate() {
            layer.validate(k)?;
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    "mlp layer chain",
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        Ok(Mlp {
            layers,
            hidden,
            output,
        })
    }

    /// Builds a network with layer widths `sizes` (input first) and Glorot
    /// initialization.
    pub fn init<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: HiddenActivation,
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("mlp", format!("layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer::glorot(w[0], w[1], rng))
            .collect();
        Mlp::new(layers, hidden, output)
    }

    pub fn zeros(
        sizes: &[usize],
        hidden: HiddenActivation,
        output: OutputActivation,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("mlp", format!("layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1]))
            .collect();
        Mlp::new(layers, hidden, output)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> HiddenActivation {
        self.hidden
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::output_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flat parameter access in layer order, weights (row-major) before bias.
    pub fn param_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            if index < nw {
                let cols = layer.weights.ncols();
                return layer.weights.get_mut((index / cols, index % cols));
            }
            index -= nw;
            if index < layer.bias.len() {
                return layer.bias.get_mut(index);
            }
            index -= layer.bias.len();
        }
        None
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_batch(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::shape("mlp input", self.input_dim(), batch.ncols()));
        }
        Ok(())
    }

    /// Output for a batch (rows are samples). Sigmoid outputs are pushed
    /// strictly inside (0, 1).
    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = self.forward_trace(batch)?.output;
        if self.output == OutputActivation::Sigmoid {
            out.mapv_inplace(|p| p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0));
        }
        Ok(out)
    }

    pub fn forward_trace(&self, batch: ArrayView2<f64>) -> Result<Trace> {
        self.check_batch(&batch)?;
        if !batch.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { layer: 0 });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = batch.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer
                .bias
                .broadcast((current.nrows(), layer.output_dim()))
                .expect("bias matches layer width")
                .to_owned();
            general_mat_mul(1.0, &current, &layer.weights.t(), 1.0, &mut z);
            if !z.iter().fold(true, |ok, v| ok & v.is_finite()) {
                return Err(Error::NonFinite { layer: k });
            }
            let activated = if k < last {
                let act = self.hidden;
                z.mapv(|v| act.apply(v))
            } else {
                apply_output(self.output, &z)
            };
            inputs.push(current);
            pre.push(z);
            current = activated;
        }
        Ok(Trace {
            inputs,
            pre,
            output: current,
        })
    }

    /// Backpropagates `grad_pre_out` (gradient with respect to the final
    /// pre-activation) through the network.
    pub fn backprop(
        &self,
        trace: &Trace,
        grad_pre_out: Array2<f64>,
        want_input_grad: bool,
    ) -> Result<(GradientSet, Option<Array2<f64>>)> {
        let n = self.layers.len();
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(n);
        let mut delta = grad_pre_out;
        let mut input_grad = None;
        for k in (0..n).rev() {
            if !delta.iter().fold(true, |ok, v| ok & v.is_finite()) {
                return Err(Error::NonFinite { layer: k });
            }
            let layer = &self.layers[k];
            let weights = delta.t().dot(&trace.inputs[k]);
            let bias = delta.sum_axis(Axis(0));
            grads.push(LayerGrad { weights, bias });
            if k > 0 || want_input_grad {
                let mut upstream = delta.dot(&layer.weights);
                if k > 0 {
                    let act = self.hidden;
                    ndarray::Zip::from(&mut upstream)
                        .and(&trace.pre[k - 1])
                        .for_each(|g, &z| *g *= act.derivative(z));
                    delta = upstream;
                } else {
                    input_grad = Some(upstream);
                }
            }
        }
        grads.reverse();
        Ok((GradientSet::from_layers(grads), input_grad))
    }
}

impl Mlp {
    /// Gradient with respect to the network input only; parameter gradients
    /// are not formed.
    pub fn input_gradient(&self, trace: &Trace, grad_pre_out: Array2<f64>) -> Result<Array2<f64>> {
        let mut delta = grad_pre_out;
        for k in (0..self.layers.len()).rev() {
            if !delta.iter().fold(true, |ok, v| ok & v.is_finite()) {
                return Err(Error::NonFinite { layer: k });
            }
            let mut upstream = delta.dot(&self.layers[k].weights);
            if k > 0 {
                let act = self.hidden;
                ndarray::Zip::from(&mut upstream)
                    .and(&trace.pre[k - 1])
                    .for_each(|g, &z| *g *= act.derivative(z));
            }
            delta = upstream;
        }
        Ok(delta)
    }
}

fn apply_output(kind: OutputActivation, z: &Array2<f64>) -> Array2<f64> {
    match kind {
        OutputActivation::Identity => z.clone(),
        OutputActivation::Sigmoid => z.mapv(sigmoid),
        OutputActivation::Softmax => {
            let mut out = z.clone();
            for mut row in out.rows_mut() {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum);
            }
            out
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
