//! The three agents: conditional generator, discriminator bank and routing
//! classifier.
//!
//! All agents accept and emit data-space coordinates. Internally the networks
//! see standardized coordinates `(x − shift) / scale`, a fixed affine map
//! derived from the target mixture.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{categorical_index, MixtureSpec};
use crate::error::{Error, Result};
use crate::nn::{HiddenActivation, Mlp, OutputActivation};

/// Fixed affine map between data space and network space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: Vec<f64>,
    pub scale: f64,
}

impl Standardizer {
    pub fn identity(dims: usize) -> Self {
        Standardizer {
            shift: vec![0.0; dims],
            scale: 1.0,
        }
    }

    /// Centers on the mixture mean, scales by the largest per-axis deviation.
    pub fn for_mixture(spec: &MixtureSpec) -> Self {
        let scale = spec.std_dev().into_iter().fold(0.0, f64::max);
        Standardizer {
            shift: spec.mean(),
            scale: if scale > 0.0 { scale } else { 1.0 },
        }
    }

    pub fn dims(&self) -> usize {
        self.shift.len()
    }

    pub fn to_model(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (v, s) in row.iter_mut().zip(&self.shift) {
                *v = (*v - s) / self.scale;
            }
        }
        out
    }

    pub fn to_data(&self, u: ArrayView2<f64>) -> Array2<f64> {
        let mut out = u.to_owned();
        for mut row in out.rows_mut() {
            for (v, s) in row.iter_mut().zip(&self.shift) {
                *v = s + self.scale * *v;
            }
        }
        out
    }
}

/// Hidden widths and activation slope shared by every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden: vec![128, 128],
            leaky_slope: 0.2,
        }
    }
}

impl Architecture {
    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(output))
            .collect()
    }

    fn activation(&self) -> HiddenActivation {
        HiddenActivation::LeakyRelu(self.leaky_slope)
    }
}

/// `G(z, c)` with input layout `[z ‖ code_scale · one-hot c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub net: Mlp,
    pub noise_dim: usize,
    pub n_codes: usize,
    /// Height of the one-hot entry fed to the network. The code columns of
    /// the first layer act as a per-code bias; scaling the entry scales
    /// that bias's initial spread and its effective step size.
    pub code_scale: f64,
    pub scaler: Standardizer,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(
        noise_dim: usize,
        n_codes: usize,
        arch: &Architecture,
        scaler: Standardizer,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = arch.sizes(noise_dim + n_codes, scaler.dims());
        let net = Mlp::init(&sizes, arch.activation(), OutputActivation::Identity, rng)?;
        Generator::from_net(net, noise_dim, n_codes, scaler)
    }

    pub fn from_net(
        net: Mlp,
        noise_dim: usize,
        n_codes: usize,
        scaler: Standardizer,
    ) -> Result<Self> {
        if net.input_dim() != noise_dim + n_codes || net.output_dim() != scaler.dims() {
            return Err(Error::shape(
                "generator network",
                format!("{} -> {}", noise_dim + n_codes, scaler.dims()),
                format!("{} -> {}", net.input_dim(), net.output_dim()),
            ));
        }
        if net.output_activation() != OutputActivation::Identity {
            return Err(Error::invalid(
                "generator",
                "output activation must be identity",
            ));
        }
        Ok(Generator {
            net,
            noise_dim,
            n_codes,
            code_scale: 1.0,
            scaler,
        })
    }

    pub fn with_code_scale(mut self, code_scale: f64) -> Result<Self> {
        if !(code_scale > 0.0 && code_scale.is_finite()) {
            return Err(Error::invalid(
                "generator",
                format!("code scale {code_scale} must be positive"),
            ));
        }
        self.code_scale = code_scale;
        Ok(self)
    }

    pub fn data_dim(&self) -> usize {
        self.scaler.dims()
    }

    /// Concatenated network input `[z ‖ c]`.
    pub fn input(&self, z: ArrayView2<f64>, one_hot: ArrayView2<f64>) -> Result<Array2<f64>> {
        if z.nrows() != one_hot.nrows() {
            return Err(Error::shape(
                "generator batch rows",
                z.nrows(),
                one_hot.nrows(),
            ));
        }
        if z.ncols() != self.noise_dim || one_hot.ncols() != self.n_codes {
            return Err(Error::shape(
                "generator inputs",
                format!("noise {} + codes {}", self.noise_dim, self.n_codes),
                format!("noise {} + codes {}", z.ncols(), one_hot.ncols()),
            ));
        }
        let k = self.code_scale;
        Ok(concatenate![Axis(1), z, one_hot.mapv(|v| v * k)])
    }

    /// Data-space samples `G(z, c)`.
    pub fn generate(&self, z: ArrayView2<f64>, one_hot: ArrayView2<f64>) -> Result<Array2<f64>> {
        let input = self.input(z, one_hot)?;
        let out = self.net.forward(input.view())?;
        Ok(self.scaler.to_data(out.view()))
    }
}

/// `N` independent scalar sigmoid discriminators.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorBank {
    pub nets: Vec<Mlp>,
    pub scaler: Standardizer,
}

impl DiscriminatorBank {
    /// Discriminator `i` is initialized from `rng_for(i)`.
    pub fn new<R: Rng, F: FnMut(usize) -> R>(
        n: usize,
        arch: &Architecture,
        scaler: Standardizer,
        mut rng_for: F,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid(
                "discriminator bank",
                "needs at least one discriminator",
            ));
        }
        let sizes = arch.sizes(scaler.dims(), 1);
        let nets = (0..n)
            .map(|i| {
                Mlp::init(
                    &sizes,
                    arch.activation(),
                    OutputActivation::Sigmoid,
                    &mut rng_for(i),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        DiscriminatorBank::from_nets(nets, scaler)
    }

    pub fn from_nets(nets: Vec<Mlp>, scaler: Standardizer) -> Result<Self> {
        let first = nets.first().ok_or_else(|| {
            Error::invalid("discriminator bank", "needs at least one discriminator")
        })?;
        let sizes = first.sizes();
        for net in &nets {
            if net.sizes() != sizes
                || net.output_activation() != OutputActivation::Sigmoid
                || net.output_dim() != 1
                || net.input_dim() != scaler.dims()
            {
                return Err(Error::invalid(
                    "discriminator bank",
                    "members must share one scalar-sigmoid architecture over the data dimension",
                ));
            }
        }
        Ok(DiscriminatorBank { nets, scaler })
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    pub fn net(&self, idx: usize) -> Result<&Mlp> {
        self.nets.get(idx).ok_or(Error::IndexOutOfRange {
            index: idx,
            len: self.nets.len(),
        })
    }

    /// Per-sample scores `D_idx(x) ∈ (0, 1)`.
    pub fn discriminate(&self, idx: usize, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let net = self.net(idx)?;
        let u = self.scaler.to_model(x);
        Ok(net.forward(u.view())?.column(0).to_owned())
    }
}

/// `Q(x)`, a categorical distribution over the discriminators.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub net: Mlp,
    pub scaler: Standardizer,
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(
        n: usize,
        arch: &Architecture,
        scaler: Standardizer,
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = arch.sizes(scaler.dims(), n);
        let net = Mlp::init(&sizes, arch.activation(), OutputActivation::Softmax, rng)?;
        Classifier::from_net(net, scaler)
    }

    pub fn from_net(net: Mlp, scaler: Standardizer) -> Result<Self> {
        if net.output_activation() != OutputActivation::Softmax || net.input_dim() != scaler.dims()
        {
            return Err(Error::invalid(
                "classifier",
                "softmax network over the data dimension required",
            ));
        }
        Ok(Classifier { net, scaler })
    }

    pub fn n_classes(&self) -> usize {
        self.net.output_dim()
    }

    /// Row-stochastic class probabilities.
    pub fn classify(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let u = self.scaler.to_model(x);
        self.net.forward(u.view())
    }
}

/// Training-time routing `σ ~ Q(x)`: one categorical draw per row.
pub fn route<R: Rng + ?Sized>(probs: ArrayView2<f64>, rng: &mut R) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| categorical_index(row, rng.random::<f64>()))
        .collect()
}

/// Evaluation-only routing: the most probable class of each row.
pub fn route_argmax(probs: ArrayView2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                    if p > best.1 {
                        (i, p)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}
