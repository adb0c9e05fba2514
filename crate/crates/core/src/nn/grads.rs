use ndarray::{Array1, Array2};

use super::mlp::Mlp;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// One gradient tensor per parameter tensor of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn from_layers(layers: Vec<LayerGrad>) -> Self {
        GradientSet { layers }
    }

    pub fn zeros_like(net: &Mlp) -> Self {
        GradientSet {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerGrad] {
        &mut self.layers
    }

    pub fn matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers().len()
            && self
                .layers
                .iter()
                .zip(net.layers())
                .all(|(g, l)| g.weights.dim() == l.weights.dim() && g.bias.len() == l.bias.len())
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights *= factor;
            g.bias *= factor;
        }
    }

    pub fn negate(&mut self) {
        for g in &mut self.layers {
            g.weights.mapv_inplace(|v| -v);
            g.bias.mapv_inplace(|v| -v);
        }
    }

    /// Flat view in the same order as [`Mlp::param_mut`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()).copied())
            .collect()
    }

    pub fn flat_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for g in &mut self.layers {
            let nw = g.weights.len();
            if index < nw {
                let cols = g.weights.ncols();
                return g.weights.get_mut((index / cols, index % cols));
            }
            index -= nw;
            if index < g.bias.len() {
                return g.bias.get_mut(index);
            }
            index -= g.bias.len();
        }
        None
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}
