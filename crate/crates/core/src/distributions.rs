//! Target mixtures, the noise prior and the code prior.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counter-based generator used for every random stream in the crate.
pub type StreamRng = ChaCha8Rng;

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const WEIGHT_TOL: f64 = 1e-12;

/// Isotropic Gaussian mixture in one or two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    dims: usize,
    means: Vec<Vec<f64>>,
    scales: Vec<f64>,
    weights: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(
        dims: usize,
        means: Vec<Vec<f64>>,
        scales: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let spec = MixtureSpec {
            dims,
            means,
            scales,
            weights,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Equal weights for every mode.
    pub fn equal_weights(dims: usize, means: Vec<Vec<f64>>, scales: Vec<f64>) -> Result<Self> {
        let m = means.len();
        MixtureSpec::new(dims, means, scales, vec![1.0 / m.max(1) as f64; m])
    }

    /// Five 1D modes at 10, 20, 60, 80, 110 with σ = 3, 3, 2, 2, 1.
    pub fn five_mode_1d() -> Self {
        MixtureSpec::equal_weights(
            1,
            [10.0, 20.0, 60.0, 80.0, 110.0]
                .iter()
                .map(|&m| vec![m])
                .collect(),
            vec![3.0, 3.0, 2.0, 2.0, 1.0],
        )
        .expect("static spec is valid")
    }

    /// `modes` equal-weight modes on the unit circle at angles 2πk/modes.
    pub fn ring(modes: usize, sigma: f64) -> Result<Self> {
        if modes == 0 {
            return Err(Error::invalid("ring mixture", "at least one mode"));
        }
        let means = (0..modes)
            .map(|k| {
                let angle = 2.0 * PI * k as f64 / modes as f64;
                vec![angle.cos(), angle.sin()]
            })
            .collect();
        MixtureSpec::equal_weights(2, means, vec![sigma; modes])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims != 1 && self.dims != 2 {
            return Err(Error::invalid(
                "mixture",
                format!("dims {} not in {{1, 2}}", self.dims),
            ));
        }
        let m = self.means.len();
        if m == 0 || self.scales.len() != m || self.weights.len() != m {
            return Err(Error::invalid(
                "mixture",
                format!(
                    "{} means, {} scales, {} weights",
                    m,
                    self.scales.len(),
                    self.weights.len()
                ),
            ));
        }
        if self
            .means
            .iter()
            .any(|p| p.len() != self.dims || p.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::invalid(
                "mixture",
                "means must be finite points of the declared dimension",
            ));
        }
        if self.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("mixture", "scales must be positive"));
        }
        if self.weights.iter().any(|&w| w.is_nan() || w < 0.0) {
            return Err(Error::invalid("mixture", "weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid("mixture", format!("weights sum to {total}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn modes(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mixture mean per dimension.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.dims)
            .map(|d| {
                self.weights
                    .iter()
                    .zip(&self.means)
                    .map(|(w, m)| w * m[d])
                    .sum()
            })
            .collect()
    }

    /// Mixture standard deviation per dimension.
    pub fn std_dev(&self) -> Vec<f64> {
        let mean = self.mean();
        (0..self.dims)
            .map(|d| {
                self.weights
                    .iter()
                    .zip(&self.means)
                    .zip(&self.scales)
                    .map(|((w, m), s)| w * (s * s + (m[d] - mean[d]).powi(2)))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Draws `n` points; also returns the component each came from.
    pub fn sample_with_components<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> (Array2<f64>, Vec<usize>) {
        let mut out = Array2::zeros((n, self.dims));
        let mut comps = Vec::with_capacity(n);
        let weights = ArrayView1::from(&self.weights[..]);
        for mut row in out.rows_mut() {
            let k = categorical_index(weights, rng.random::<f64>());
            for (d, v) in row.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v = self.means[k][d] + self.scales[k] * z;
            }
            comps.push(k);
        }
        (out, comps)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        self.sample_with_components(n, rng).0
    }

    /// Density of one mode at `x`.
    pub fn component_pdf(&self, k: usize, x: &[f64]) -> f64 {
        let s = self.scales[k];
        let sq: f64 = x
            .iter()
            .zip(&self.means[k])
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let norm = (2.0 * PI * s * s).powf(self.dims as f64 / 2.0);
        (-sq / (2.0 * s * s)).exp() / norm
    }

    /// `Σ_k w_k N(x; μ_k, σ_k² I)`
    pub fn pdf(&self, x: &[f64]) -> f64 {
        (0..self.modes())
            .map(|k| self.weights[k] * self.component_pdf(k, x))
            .sum()
    }

    /// Index of the mode mean closest to `x` and the distance to it.
    pub fn nearest_mode(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, m) in self.means.iter().enumerate() {
            let d: f64 = x
                .iter()
                .zip(m)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }
}

/// Draw `z ~ U(low, high)^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePriorSpec {
    pub dim: usize,
    pub low: f64,
    pub high: f64,
}

impl Default for NoisePriorSpec {
    fn default() -> Self {
        NoisePriorSpec {
            dim: 64,
            low: -1.0,
            high: 1.0,
        }
    }
}

impl NoisePriorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("noise prior", "dimension must be positive"));
        }
        if self.low >= self.high || !self.low.is_finite() || !self.high.is_finite() {
            return Err(Error::invalid(
                "noise prior",
                format!("need low < high, got [{}, {})", self.low, self.high),
            ));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        self.validate()?;
        let (low, high) = (self.low, self.high);
        Ok(Array2::from_shape_simple_fn((n, self.dim), || {
            rng.random_range(low..high)
        }))
    }
}

/// Categorical prior over one-hot codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodePriorSpec {
    pub probabilities: Vec<f64>,
}

impl CodePriorSpec {
    pub fn uniform(n_codes: usize) -> Self {
        CodePriorSpec {
            probabilities: vec![1.0 / n_codes as f64; n_codes],
        }
    }

    pub fn n_codes(&self) -> usize {
        self.probabilities.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.probabilities.is_empty() {
            return Err(Error::invalid("code prior", "at least one code"));
        }
        if self.probabilities.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::invalid("code prior", "negative probability"));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(
                "code prior",
                format!("probabilities sum to {total}"),
            ));
        }
        Ok(())
    }

    /// Code indices and their one-hot rows.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(Vec<usize>, Array2<f64>)> {
        self.validate()?;
        let probs = ArrayView1::from(&self.probabilities[..]);
        let indices: Vec<usize> = (0..n)
            .map(|_| categorical_index(probs, rng.random::<f64>()))
            .collect();
        Ok((indices.clone(), one_hot(&indices, self.n_codes())))
    }
}

pub fn one_hot(indices: &[usize], n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), n));
    for (r, &i) in indices.iter().enumerate() {
        out[[r, i]] = 1.0;
    }
    out
}

/// Inverse-CDF draw from a categorical row given `u ∈ [0, 1)`. Rounding slack
/// at the top lands on the last index with positive probability.
pub fn categorical_index(probs: ArrayView1<f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Empirical frequency of each index.
pub fn frequencies(indices: &[usize], n: usize) -> Array1<f64> {
    let mut f = Array1::zeros(n);
    for &i in indices {
        f[i] += 1.0;
    }
    f / indices.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_mode_proportions() {
        let spec = MixtureSpec::five_mode_1d();
        let mut rng = stream_rng(11, 0);
        let (_, comps) = spec.sample_with_components(65536, &mut rng);
        for f in frequencies(&comps, 5) {
            assert!((f - 0.2).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn degenerate_mode_collapses_to_mean() {
        let spec = MixtureSpec::new(1, vec![vec![4.25]], vec![1e-12], vec![1.0]).unwrap();
        let x = spec.sample(100, &mut stream_rng(0, 0));
        assert!(x.iter().all(|v| (v - 4.25).abs() < 1e-9));
    }

    #[test]
    fn ring3_sample_mean_matches_centroid() {
        let spec = MixtureSpec::ring(3, 0.1).unwrap();
        let x = spec.sample(200_000, &mut stream_rng(5, 1));
        let centroid = spec.mean();
        let emp = x.mean_axis(ndarray::Axis(0)).unwrap();
        for d in 0..2 {
            assert!(centroid[d].abs() < 1e-12);
            assert!((emp[d] - centroid[d]).abs() < 0.01, "{emp}");
        }
    }

    #[test]
    fn ring_geometry() {
        let four = MixtureSpec::ring(4, 0.1).unwrap();
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (m, e) in four.means().iter().zip(expect) {
            assert!((m[0] - e[0]).abs() < 1e-15 && (m[1] - e[1]).abs() < 1e-15);
        }
        let three = MixtureSpec::ring(3, 0.1).unwrap();
        for (k, m) in three.means().iter().enumerate() {
            let angle = m[1].atan2(m[0]).rem_euclid(2.0 * PI).to_degrees();
            assert!((angle - 120.0 * k as f64).abs() < 1e-9);
        }
        let eight = MixtureSpec::ring(8, 0.3).unwrap();
        let chord = 2.0 * (PI / 8.0).sin();
        for k in 0..8 {
            let (a, b) = (&eight.means()[k], &eight.means()[(k + 1) % 8]);
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!((d - chord).abs() < 1e-12);
        }
        assert_eq!(eight.weights(), &[0.125; 8]);
        assert!(MixtureSpec::ring(0, 0.1).is_err());
    }

    #[test]
    fn pdf_point_values() {
        let normal = MixtureSpec::new(1, vec![vec![0.0]], vec![1.0], vec![1.0]).unwrap();
        assert!((normal.pdf(&[0.0]) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);

        let sym =
            MixtureSpec::equal_weights(1, vec![vec![-2.0], vec![2.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(sym.component_pdf(0, &[0.0]), sym.component_pdf(1, &[0.0]));

        let five = MixtureSpec::five_mode_1d();
        let means: [f64; 5] = [10.0, 20.0, 60.0, 80.0, 110.0];
        let sds: [f64; 5] = [3.0, 3.0, 2.0, 2.0, 1.0];
        let direct: f64 = means
            .iter()
            .zip(sds)
            .map(|(m, s)| {
                0.2 * (-(10.0 - m) * (10.0 - m) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
            })
            .sum();
        assert!((five.pdf(&[10.0]) - direct).abs() < 1e-15);
    }

    #[test]
    fn pdf_integrates_to_one() {
        let five = MixtureSpec::five_mode_1d();
        let h = 0.01;
        let total: f64 = (0..14000)
            .map(|i| five.pdf(&[-10.0 + (i as f64 + 0.5) * h]) * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");

        let ring = MixtureSpec::ring(8, 0.1).unwrap();
        let h: f64 = 0.005;
        let cells = (2.8 / h).round() as usize;
        let mut total = 0.0;
        for i in 0..cells {
            for j in 0..cells {
                let x = [-1.4 + (i as f64 + 0.5) * h, -1.4 + (j as f64 + 0.5) * h];
                total += ring.pdf(&x) * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn invalid_mixtures() {
        assert!(MixtureSpec::new(1, vec![vec![0.0]], vec![0.0], vec![1.0]).is_err());
        assert!(MixtureSpec::new(1, vec![vec![0.0]], vec![1.0], vec![0.9]).is_err());
        assert!(MixtureSpec::new(3, vec![vec![0.0; 3]], vec![1.0], vec![1.0]).is_err());
        assert!(MixtureSpec::new(1, vec![], vec![], vec![]).is_err());
        assert!(MixtureSpec::new(2, vec![vec![0.0]], vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn noise_prior() {
        let spec = NoisePriorSpec {
            dim: 1,
            low: -1.0,
            high: 1.0,
        };
        let z = spec.sample(1_000_000, &mut stream_rng(2, 0)).unwrap();
        assert!(z.mean().unwrap().abs() < 0.005);
        assert!(z.iter().all(|&v| (-1.0..1.0).contains(&v)));

        let wide = NoisePriorSpec::default()
            .sample(10, &mut stream_rng(2, 0))
            .unwrap();
        assert_eq!(wide.dim(), (10, 64));

        let empty = NoisePriorSpec {
            dim: 4,
            low: 1.0,
            high: 1.0,
        };
        assert!(empty.sample(3, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn code_prior() {
        let (idx, oh) = CodePriorSpec::uniform(1)
            .sample(50, &mut stream_rng(0, 0))
            .unwrap();
        assert!(idx.iter().all(|&i| i == 0));
        assert!(oh.iter().all(|&v| v == 1.0));

        let (idx, oh) = CodePriorSpec::uniform(5)
            .sample(1_000_000, &mut stream_rng(9, 3))
            .unwrap();
        for f in frequencies(&idx, 5) {
            assert!((f - 0.2).abs() < 0.002, "{f}");
        }
        for (r, row) in oh.rows().into_iter().enumerate().take(1000) {
            assert_eq!(row.sum(), 1.0);
            assert_eq!(row[idx[r]], 1.0);
        }

        let pinned = CodePriorSpec {
            probabilities: vec![1.0, 0.0, 0.0],
        };
        let (idx, _) = pinned.sample(10_000, &mut stream_rng(1, 1)).unwrap();
        assert!(idx.iter().all(|&i| i == 0));

        assert!(CodePriorSpec {
            probabilities: vec![0.5, 0.6]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let spec = MixtureSpec::five_mode_1d();
        let a = spec.sample(64, &mut stream_rng(7, 2));
        let b = spec.sample(64, &mut stream_rng(7, 2));
        let c = spec.sample(64, &mut stream_rng(7, 3));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
