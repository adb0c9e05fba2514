//! Sample-based metrics and discriminator diagnostics.

mod divergence;
mod field;
mod histogram;
mod modes;

pub use divergence::{chi_square, kl_divergence};
pub use field::{
    gradient_field, score_heatmap, FieldGrid, FieldLayer, FieldMode, GridAxis, GridSpec,
    ScoreHeatmap,
};
pub use histogram::{build_histogram, BinAxis, Histogram, HistogramSpec};
pub use modes::{
    assign_mode, cluster_purity, mode_coverage, ClusterPurity, ModeCoverage, COVERED_FRACTION,
    OVERSAMPLED_MULTIPLE,
};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::distributions::MixtureSpec;
use crate::error::Result;

/// How a trained model is scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub histogram: HistogramSpec,
    /// Samples drawn from each of the model and the target.
    pub samples: usize,
    /// Mode assignment radius in units of the mode's σ.
    pub k_sigma: f64,
}

impl EvalSpec {
    pub fn for_target(target: &MixtureSpec) -> Self {
        EvalSpec {
            histogram: if target.dims() == 1 {
                HistogramSpec::standard_1d()
            } else {
                HistogramSpec::standard_2d()
            },
            samples: 1_000_000,
            k_sigma: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub kl: f64,
    pub chi_square: f64,
    pub coverage: ModeCoverage,
    /// Present when generator codes are available.
    pub purity: Option<ClusterPurity>,
    pub generated_out_of_range: u64,
    pub real_out_of_range: u64,
}

/// Scores generated samples against real ones. `codes` labels generated rows.
pub fn compute_metrics(
    real: ArrayView2<f64>,
    generated: ArrayView2<f64>,
    codes: Option<(&[usize], usize)>,
    target: &MixtureSpec,
    spec: &EvalSpec,
) -> Result<Metrics> {
    let hg = build_histogram(generated, &spec.histogram)?;
    let hd = build_histogram(real, &spec.histogram)?;
    let purity = codes
        .map(|(c, n)| cluster_purity(generated, c, n, target))
        .transpose()?;
    Ok(Metrics {
        kl: kl_divergence(&hg, &hd)?,
        chi_square: chi_square(&hg, &hd)?,
        coverage: mode_coverage(generated, target, spec.k_sigma)?,
        purity,
        generated_out_of_range: hg.out_of_range,
        real_out_of_range: hd.out_of_range,
    })
}
