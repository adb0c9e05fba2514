use super::histogram::Histogram;
use crate::error::{Error, Result};

/// `KL(p_gen ‖ p_data)` in nats over in-range bin frequencies.
///
/// When any bin is empty in either histogram, ε = 1/(10·n) is added to every
/// frequency of a histogram with n in-range samples and the result is
/// renormalized. Otherwise raw frequencies are used.
pub fn kl_divergence(gen: &Histogram, data: &Histogram) -> Result<f64> {
    if gen.spec != data.spec {
        return Err(Error::SpecMismatch);
    }
    let (ng, nd) = (gen.in_range(), data.in_range());
    if ng == 0 || nd == 0 {
        return Err(Error::invalid(
            "kl divergence",
            "histogram has no in-range samples",
        ));
    }
    let smooth = gen
        .counts
        .iter()
        .zip(&data.counts)
        .any(|(&g, &d)| g == 0 || d == 0);
    let p = frequencies(&gen.counts, ng, smooth);
    let q = frequencies(&data.counts, nd, smooth);
    let kl = p
        .iter()
        .zip(&q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<f64>();
    // identical inputs give exactly zero; rounding can otherwise dip below
    Ok(kl.max(0.0))
}

fn frequencies(counts: &[u64], total: u64, smooth: bool) -> Vec<f64> {
    let n = total as f64;
    if !smooth {
        return counts.iter().map(|&c| c as f64 / n).collect();
    }
    let eps = 1.0 / (10.0 * n);
    let norm = 1.0 + eps * counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 / n + eps) / norm)
        .collect()
}

/// `Σ_b (g_b − d_b)² / (g_b + d_b)` over raw counts, skipping bins empty in both.
pub fn chi_square(gen: &Histogram, data: &Histogram) -> Result<f64> {
    if gen.spec != data.spec {
        return Err(Error::SpecMismatch);
    }
    Ok(gen
        .counts
        .iter()
        .zip(&data.counts)
        .filter(|(&g, &d)| g + d > 0)
        .map(|(&g, &d)| {
            let diff = g as f64 - d as f64;
            diff * diff / (g + d) as f64
        })
        .sum())
}
