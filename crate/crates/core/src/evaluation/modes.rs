use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::distributions::MixtureSpec;
use crate::error::{Error, Result};

/// A mode counts as covered when it receives at least this fraction of its fair share.
pub const COVERED_FRACTION: f64 = 0.2;
/// A mode counts as oversampled when it receives at least this multiple of its fair share.
pub const OVERSAMPLED_MULTIPLE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverage {
    /// Fraction of all samples assigned to each mode.
    pub mass: Vec<f64>,
    /// Fraction of samples farther than kσ from every mode.
    pub unassigned: f64,
    pub covered: Vec<bool>,
    pub oversampled: Vec<bool>,
}

impl ModeCoverage {
    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }
}

/// Nearest mode of `x` if within `k_sigma` of that mode's scale.
pub fn assign_mode(target: &MixtureSpec, x: &[f64], k_sigma: f64) -> Option<usize> {
    let (idx, dist) = target.nearest_mode(x);
    (dist <= k_sigma * target.scales()[idx]).then_some(idx)
}

pub fn mode_coverage(
    samples: ArrayView2<f64>,
    target: &MixtureSpec,
    k_sigma: f64,
) -> Result<ModeCoverage> {
    check_samples(samples, target, k_sigma)?;
    let m = target.modes();
    let mut counts = vec![0usize; m];
    let mut unassigned = 0usize;
    for row in samples.rows() {
        match assign_mode(target, &row.to_vec(), k_sigma) {
            Some(k) => counts[k] += 1,
            None => unassigned += 1,
        }
    }
    let n = samples.nrows();
    if n == 0 {
        return Ok(ModeCoverage {
            mass: vec![0.0; m],
            unassigned: 0.0,
            covered: vec![false; m],
            oversampled: vec![false; m],
        });
    }
    let mass: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let fair = 1.0 / m as f64;
    Ok(ModeCoverage {
        covered: mass.iter().map(|&p| p >= COVERED_FRACTION * fair).collect(),
        oversampled: mass
            .iter()
            .map(|&p| p >= OVERSAMPLED_MULTIPLE * fair)
            .collect(),
        unassigned: unassigned as f64 / n as f64,
        mass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPurity {
    /// Share of each code's samples whose nearest mode is the code's majority mode.
    pub per_code: Vec<f64>,
    pub majority_mode: Vec<usize>,
    /// Unweighted mean of `per_code`.
    pub mean: f64,
}

/// Purity of the samples produced under each code; `codes[i]` labels row i.
/// Every sample counts toward its nearest mode regardless of distance.
pub fn cluster_purity(
    samples: ArrayView2<f64>,
    codes: &[usize],
    n_codes: usize,
    target: &MixtureSpec,
) -> Result<ClusterPurity> {
    check_samples(samples, target, 1.0)?;
    if codes.len() != samples.nrows() {
        return Err(Error::shape("purity codes", samples.nrows(), codes.len()));
    }
    if n_codes == 0 {
        return Err(Error::invalid("cluster purity", "no codes"));
    }
    let m = target.modes();
    let mut table = vec![vec![0usize; m]; n_codes];
    let mut per_code_total = vec![0usize; n_codes];
    for (row, &c) in samples.rows().into_iter().zip(codes) {
        if c >= n_codes {
            return Err(Error::IndexOutOfRange {
                index: c,
                len: n_codes,
            });
        }
        per_code_total[c] += 1;
        table[c][target.nearest_mode(&row.to_vec()).0] += 1;
    }
    if let Some(empty) = per_code_total.iter().position(|&t| t == 0) {
        return Err(Error::invalid(
            "cluster purity",
            format!("code {empty} has no samples"),
        ));
    }
    let mut per_code = Vec::with_capacity(n_codes);
    let mut majority_mode = Vec::with_capacity(n_codes);
    for (row, &total) in table.iter().zip(&per_code_total) {
        let (best, &hits) = row
            .iter()
            .enumerate()
            .max_by_key(|&(k, &v)| (v, std::cmp::Reverse(k)))
            .expect("at least one mode");
        per_code.push(hits as f64 / total as f64);
        majority_mode.push(best);
    }
    let mean = per_code.iter().sum::<f64>() / n_codes as f64;
    Ok(ClusterPurity {
        per_code,
        majority_mode,
        mean,
    })
}

fn check_samples(samples: ArrayView2<f64>, target: &MixtureSpec, k_sigma: f64) -> Result<()> {
    if samples.ncols() != target.dims() {
        return Err(Error::shape("mode samples", target.dims(), samples.ncols()));
    }
    if !(k_sigma > 0.0 && k_sigma.is_finite()) {
        return Err(Error::invalid(
            "k_sigma",
            format!("{k_sigma} must be positive"),
        ));
    }
    Ok(())
}
