use ndarray::ArrayView2;

use super::grads::GradientSet;
use super::loss::{backward, loss_value, LossSpec};
use super::mlp::Mlp;
use crate::error::{Error, Result};

/// Largest `|analytic − central difference| / max(1, |analytic|)` over every
/// parameter, using the gradients produced by [`backward`].
pub fn finite_difference_check(
    net: &Mlp,
    spec: &LossSpec,
    batch: ArrayView2<f64>,
    h: f64,
) -> Result<f64> {
    let (_, analytic) = backward(net, batch, spec)?;
    max_relative_error(net, spec, batch, h, &analytic)
}

/// Compares an arbitrary gradient set against central differences of the
/// loss. The difference quotient only ever calls the forward pass.
pub fn max_relative_error(
    net: &Mlp,
    spec: &LossSpec,
    batch: ArrayView2<f64>,
    h: f64,
    analytic: &GradientSet,
) -> Result<f64> {
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::invalid(
            "finite difference step",
            format!("{h} outside (0, 1e-3]"),
        ));
    }
    if !analytic.matches(net) {
        return Err(Error::shape(
            "gradient check",
            net.param_count(),
            "gradient set",
        ));
    }
    let flat = analytic.flat();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (i, &a) in flat.iter().enumerate() {
        let original = *probe.param_mut(i).expect("index within param count");
        *probe.param_mut(i).expect("index") = original + h;
        let plus = loss_value(&probe, batch, spec)?;
        *probe.param_mut(i).expect("index") = original - h;
        let minus = loss_value(&probe, batch, spec)?;
        *probe.param_mut(i).expect("index") = original;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
