use ndarray::{Array2, ArrayView2};

use super::grads::GradientSet;
use super::mlp::{Mlp, OutputActivation, Trace};
use crate::error::{Error, Result};

/// Probabilities entering a logarithm are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-7;

/// Batch-mean losses. Every variant is a quantity to be *minimized*; callers
/// that ascend an objective negate the gradient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LossSpec {
    /// `−mean log D(x)`
    BceReal,
    /// `−mean log(1 − D(x))`
    BceFake,
    /// `mean log(1 − D(x))`, the saturating generator loss.
    BceGenerator,
    /// `−mean log Q(x)[target]`
    CrossEntropy(Vec<usize>),
}

impl LossSpec {
    fn check(&self, net: &Mlp, rows: usize) -> Result<()> {
        match self {
            LossSpec::BceReal | LossSpec::BceFake | LossSpec::BceGenerator => {
                if net.output_activation() != OutputActivation::Sigmoid || net.output_dim() != 1 {
                    return Err(Error::invalid(
                        "loss spec",
                        "binary cross-entropy needs a scalar sigmoid output",
                    ));
                }
            }
            LossSpec::CrossEntropy(targets) => {
                if net.output_activation() != OutputActivation::Softmax {
                    return Err(Error::invalid(
                        "loss spec",
                        "cross-entropy needs a softmax output",
                    ));
                }
                if targets.len() != rows {
                    return Err(Error::shape("cross-entropy targets", rows, targets.len()));
                }
                if let Some(&bad) = targets.iter().find(|&&t| t >= net.output_dim()) {
                    return Err(Error::IndexOutOfRange {
                        index: bad,
                        len: net.output_dim(),
                    });
                }
            }
        }
        if rows == 0 {
            return Err(Error::invalid("loss batch", "empty batch"));
        }
        Ok(())
    }
}

#[inline]
fn in_range(p: f64) -> bool {
    (PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&p)
}

#[inline]
fn clamp(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Loss value and its gradient with respect to the final pre-activation.
fn loss_and_grad(spec: &LossSpec, trace: &Trace) -> (f64, Array2<f64>) {
    let out = &trace.output;
    let rows = out.nrows();
    let inv = 1.0 / rows as f64;
    let mut grad = Array2::zeros(out.raw_dim());
    let mut total = 0.0;
    match spec {
        LossSpec::BceReal => {
            for (g, &p) in grad.iter_mut().zip(out.iter()) {
                total -= clamp(p).ln();
                if in_range(p) {
                    *g = -(1.0 - p) * inv;
                }
            }
        }
        LossSpec::BceFake => {
            for (g, &p) in grad.iter_mut().zip(out.iter()) {
                total -= (1.0 - clamp(p)).ln();
                if in_range(p) {
                    *g = p * inv;
                }
            }
        }
        LossSpec::BceGenerator => {
            for (g, &p) in grad.iter_mut().zip(out.iter()) {
                total += (1.0 - clamp(p)).ln();
                if in_range(p) {
                    *g = -p * inv;
                }
            }
        }
        LossSpec::CrossEntropy(targets) => {
            // Only the lower clamp matters for −log p; the log-softmax route
            // keeps a single-class softmax at exactly zero loss.
            let floor = PROB_FLOOR.ln();
            let logits = trace.pre.last().expect("mlp has layers");
            for (r, &t) in targets.iter().enumerate() {
                let row = logits.row(r);
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
                let log_p = row[t] - lse;
                total -= log_p.max(floor);
                if log_p > floor {
                    for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
                        let indicator = if j == t { 1.0 } else { 0.0 };
                        *g = (out[[r, j]] - indicator) * inv;
                    }
                }
            }
        }
    }
    (total * inv, grad)
}

/// Mean loss of `net` on `batch` without gradients.
pub fn loss_value(net: &Mlp, batch: ArrayView2<f64>, spec: &LossSpec) -> Result<f64> {
    spec.check(net, batch.nrows())?;
    let trace = net.forward_trace(batch)?;
    Ok(loss_and_grad(spec, &trace).0)
}

/// Mean loss and exact parameter gradients.
pub fn backward(net: &Mlp, batch: ArrayView2<f64>, spec: &LossSpec) -> Result<(f64, GradientSet)> {
    spec.check(net, batch.nrows())?;
    let trace = net.forward_trace(batch)?;
    let (loss, grad) = loss_and_grad(spec, &trace);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            layer: net.layers().len() - 1,
        });
    }
    let (grads, _) = net.backprop(&trace, grad, false)?;
    Ok((loss, grads))
}

/// Like [`backward`], additionally returning the gradient with respect to
/// the input batch.
pub fn backward_with_input(
    net: &Mlp,
    batch: ArrayView2<f64>,
    spec: &LossSpec,
) -> Result<(f64, GradientSet, Array2<f64>)> {
    spec.check(net, batch.nrows())?;
    let trace = net.forward_trace(batch)?;
    let (loss, grad) = loss_and_grad(spec, &trace);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            layer: net.layers().len() - 1,
        });
    }
    let (grads, input) = net.backprop(&trace, grad, true)?;
    Ok((loss, grads, input.expect("input gradient requested")))
}

/// Mean loss and its gradient with respect to the input batch only.
pub fn loss_input_gradient(
    net: &Mlp,
    batch: ArrayView2<f64>,
    spec: &LossSpec,
) -> Result<(f64, Array2<f64>)> {
    spec.check(net, batch.nrows())?;
    let trace = net.forward_trace(batch)?;
    let (loss, grad) = loss_and_grad(spec, &trace);
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            layer: net.layers().len() - 1,
        });
    }
    Ok((loss, net.input_gradient(&trace, grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{HiddenActivation, Mlp};
    use ndarray::array;

    const LEAKY: HiddenActivation = HiddenActivation::LeakyRelu(0.2);

    #[test]
    fn bce_real_at_half_is_log2() {
        let net = Mlp::zeros(&[3, 4, 1], LEAKY, OutputActivation::Sigmoid).unwrap();
        let (loss, _) =
            backward(&net, array![[0.2, 1.0, -4.0]].view(), &LossSpec::BceReal).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn uniform_two_class_cross_entropy_is_log2() {
        let net = Mlp::zeros(&[1, 2], LEAKY, OutputActivation::Softmax).unwrap();
        let spec = LossSpec::CrossEntropy(vec![1]);
        let loss = loss_value(&net, array![[3.0]].view(), &spec).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn single_class_cross_entropy_is_exactly_zero() {
        let net = Mlp::zeros(&[2, 8, 1], LEAKY, OutputActivation::Softmax).unwrap();
        let spec = LossSpec::CrossEntropy(vec![0, 0]);
        let (loss, grads) = backward(&net, array![[1.0, 2.0], [-3.0, 0.5]].view(), &spec).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn mismatched_loss_spec_is_rejected() {
        let net = Mlp::zeros(&[1, 2], LEAKY, OutputActivation::Softmax).unwrap();
        assert!(backward(&net, array![[0.0]].view(), &LossSpec::BceReal).is_err());
        let sig = Mlp::zeros(&[1, 1], LEAKY, OutputActivation::Sigmoid).unwrap();
        assert!(backward(&sig, array![[0.0]].view(), &LossSpec::CrossEntropy(vec![0])).is_err());
        assert!(backward(&net, array![[0.0]].view(), &LossSpec::CrossEntropy(vec![2])).is_err());
    }

    #[test]
    fn input_gradient_agrees_with_full_backward() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::init(&[2, 7, 5, 1], LEAKY, OutputActivation::Sigmoid, &mut rng).unwrap();
        let x = array![[0.3, -1.2], [2.0, 0.7], [-0.4, 0.0]];
        let (l1, _, full) = backward_with_input(&net, x.view(), &LossSpec::BceGenerator).unwrap();
        let (l2, only) = loss_input_gradient(&net, x.view(), &LossSpec::BceGenerator).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(full, only);
        // central differences on the input
        let h = 1e-6;
        for r in 0..3 {
            for c in 0..2 {
                let mut plus = x.clone();
                plus[[r, c]] += h;
                let mut minus = x.clone();
                minus[[r, c]] -= h;
                let fd = (loss_value(&net, plus.view(), &LossSpec::BceGenerator).unwrap()
                    - loss_value(&net, minus.view(), &LossSpec::BceGenerator).unwrap())
                    / (2.0 * h);
                assert!((fd - only[[r, c]]).abs() < 1e-7, "{fd} vs {}", only[[r, c]]);
            }
        }
    }

    #[test]
    fn generator_loss_is_negated_fake_loss() {
        let net = Mlp::zeros(&[1, 1], LEAKY, OutputActivation::Sigmoid).unwrap();
        let x = array![[0.0], [1.0]];
        let fake = loss_value(&net, x.view(), &LossSpec::BceFake).unwrap();
        let gen = loss_value(&net, x.view(), &LossSpec::BceGenerator).unwrap();
        assert_eq!(fake, -gen);
        assert!((gen - 0.5f64.ln()).abs() < 1e-15);
    }
}
