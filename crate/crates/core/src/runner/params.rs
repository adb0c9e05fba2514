//! `params.bin`: all agent weights in a small little-endian container.
//!
//! ```text
//! "DPNP" u16:version
//! u32:noise_dim u32:n_codes f64:code_scale
//! u32:dims f64×dims:shift f64:scale
//! net:generator u32:n_disc net×n_disc u8:has_classifier [net:classifier]
//! net   = f64:leaky_slope u8:output u32:n_layers layer×n_layers
//! layer = u32:out u32:in f64×(out·in):weights f64×out:bias
//! ```

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::models::{Classifier, DiscriminatorBank, Generator, Standardizer};
use crate::nn::{DenseLayer, HiddenActivation, Mlp, OutputActivation};
use crate::training::TrainState;

const MAGIC: &[u8; 4] = b"DPNP";
const VERSION: u16 = 1;
const MAX_DIM: usize = 1 << 20;

/// The trained agents, without optimizer or random state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub generator: Generator,
    pub bank: DiscriminatorBank,
    pub classifier: Option<Classifier>,
}

impl ModelParams {
    pub fn from_state(state: &TrainState) -> Self {
        ModelParams {
            generator: state.generator.clone(),
            bank: state.bank.clone(),
            classifier: state.classifier.clone(),
        }
    }
}

pub fn encode_params(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, params.generator.noise_dim);
    put_u32(&mut out, params.generator.n_codes);
    put_f64(&mut out, params.generator.code_scale);
    let scaler = &params.generator.scaler;
    put_u32(&mut out, scaler.dims());
    scaler.shift.iter().for_each(|&v| put_f64(&mut out, v));
    put_f64(&mut out, scaler.scale);
    put_net(&mut out, &params.generator.net);
    put_u32(&mut out, params.bank.len());
    params.bank.nets.iter().for_each(|n| put_net(&mut out, n));
    match &params.classifier {
        Some(q) => {
            out.push(1);
            put_net(&mut out, &q.net);
        }
        None => out.push(0),
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_net(out: &mut Vec<u8>, net: &Mlp) {
    let HiddenActivation::LeakyRelu(slope) = net.hidden_activation();
    put_f64(out, slope);
    out.push(match net.output_activation() {
        OutputActivation::Identity => 0,
        OutputActivation::Sigmoid => 1,
        OutputActivation::Softmax => 2,
    });
    put_u32(out, net.layers().len());
    for layer in net.layers() {
        put_u32(out, layer.weights.nrows());
        put_u32(out, layer.weights.ncols());
        layer.weights.iter().for_each(|&v| put_f64(out, v));
        layer.bias.iter().for_each(|&v| put_f64(out, v));
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn dim(&mut self) -> Result<usize> {
        let v = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        if v > MAX_DIM {
            return Err(bad(format!("dimension {v} too large")));
        }
        Ok(v)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| bad("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn net(&mut self) -> Result<Mlp> {
        let slope = self.f64()?;
        let output = match self.u8()? {
            0 => OutputActivation::Identity,
            1 => OutputActivation::Sigmoid,
            2 => OutputActivation::Softmax,
            t => return Err(bad(format!("unknown output activation tag {t}"))),
        };
        let n_layers = self.dim()?;
        if n_layers == 0 {
            return Err(bad("network without layers"));
        }
        let mut layers = Vec::new();
        for _ in 0..n_layers {
            let rows = self.dim()?;
            let cols = self.dim()?;
            let weights = self.f64s(
                rows.checked_mul(cols)
                    .ok_or_else(|| bad("layer size overflow"))?,
            )?;
            let bias = self.f64s(rows)?;
            layers.push(DenseLayer {
                weights: Array2::from_shape_vec((rows, cols), weights)
                    .map_err(|e| bad(e.to_string()))?,
                bias: Array1::from(bias),
            });
        }
        Mlp::new(layers, HiddenActivation::LeakyRelu(slope), output)
            .map_err(|e| bad(format!("invalid network: {e}")))
    }
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("params.bin", reason)
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let noise_dim = cur.dim()?;
    let n_codes = cur.dim()?;
    let code_scale = cur.f64()?;
    let dims = cur.dim()?;
    let shift = cur.f64s(dims)?;
    let scale = cur.f64()?;
    if !(scale > 0.0 && scale.is_finite()) || shift.iter().any(|v| !v.is_finite()) {
        return Err(bad("invalid standardizer"));
    }
    let scaler = Standardizer { shift, scale };
    let generator = Generator::from_net(cur.net()?, noise_dim, n_codes, scaler.clone())
        .and_then(|g| g.with_code_scale(code_scale))
        .map_err(|e| bad(e.to_string()))?;
    let n_disc = cur.dim()?;
    let nets = (0..n_disc).map(|_| cur.net()).collect::<Result<Vec<_>>>()?;
    let bank =
        DiscriminatorBank::from_nets(nets, scaler.clone()).map_err(|e| bad(e.to_string()))?;
    let classifier = match cur.u8()? {
        0 => None,
        1 => Some(Classifier::from_net(cur.net()?, scaler).map_err(|e| bad(e.to_string()))?),
        t => return Err(bad(format!("bad classifier flag {t}"))),
    };
    if cur.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(ModelParams {
        generator,
        bank,
        classifier,
    })
}
