use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open binning of one axis: bins `[lo + k·w, lo + (k+1)·w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinAxis {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

impl BinAxis {
    pub fn bins(&self) -> usize {
        ((self.hi - self.lo) / self.width).round() as usize
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.width
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.width > 0.0 && self.lo < self.hi) {
            return Err(Error::invalid("histogram axis", format!("{self:?}")));
        }
        let exact = (self.hi - self.lo) / self.width;
        if self.bins() < 1 || (exact - self.bins() as f64).abs() > 0.5 {
            return Err(Error::invalid("histogram axis", format!("{exact} bins")));
        }
        Ok(())
    }

    /// Bin holding `x`, consistent with [`BinAxis::edge`].
    pub fn index(&self, x: f64) -> Option<usize> {
        let n = self.bins();
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        let mut k = (((x - self.lo) / self.width).floor() as usize).min(n - 1);
        if k > 0 && x < self.edge(k) {
            k -= 1;
        } else if k + 1 < n && x >= self.edge(k + 1) {
            k += 1;
        }
        Some(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub axes: Vec<BinAxis>,
}

impl HistogramSpec {
    pub fn new(axes: Vec<BinAxis>) -> Result<Self> {
        let spec = HistogramSpec { axes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn one_d(lo: f64, hi: f64, width: f64) -> Result<Self> {
        HistogramSpec::new(vec![BinAxis { lo, hi, width }])
    }

    pub fn square(lo: f64, hi: f64, width: f64) -> Result<Self> {
        let axis = BinAxis { lo, hi, width };
        HistogramSpec::new(vec![axis, axis])
    }

    /// `[−10, 130)` with width 0.1.
    pub fn standard_1d() -> Self {
        HistogramSpec::one_d(-10.0, 130.0, 0.1).expect("static spec")
    }

    /// `[−1.4, 1.4)²` with width 0.0028.
    pub fn standard_2d() -> Self {
        HistogramSpec::square(-1.4, 1.4, 0.0028).expect("static spec")
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::invalid("histogram spec", "one or two axes"));
        }
        self.axes.iter().try_for_each(BinAxis::validate)
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(BinAxis::bins).collect()
    }

    pub fn n_bins(&self) -> usize {
        self.shape().iter().product()
    }

    /// Row-major flat bin index.
    pub fn locate(&self, point: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for (axis, &x) in self.axes.iter().zip(point) {
            flat = flat * axis.bins() + axis.index(x)?;
        }
        Some(flat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub spec: HistogramSpec,
    pub counts: Vec<u64>,
    pub total: u64,
    pub out_of_range: u64,
}

impl Histogram {
    pub fn empty(spec: HistogramSpec) -> Self {
        let n = spec.n_bins();
        Histogram {
            spec,
            counts: vec![0; n],
            total: 0,
            out_of_range: 0,
        }
    }

    pub fn in_range(&self) -> u64 {
        self.total - self.out_of_range
    }

    pub fn add(&mut self, point: &[f64]) {
        self.total += 1;
        match self.spec.locate(point) {
            Some(k) => self.counts[k] += 1,
            None => self.out_of_range += 1,
        }
    }
}

/// Bins every row of `samples`; rows outside the range are tallied separately.
pub fn build_histogram(samples: ArrayView2<f64>, spec: &HistogramSpec) -> Result<Histogram> {
    spec.validate()?;
    if samples.ncols() != spec.dims() {
        return Err(Error::shape(
            "histogram samples",
            spec.dims(),
            samples.ncols(),
        ));
    }
    let mut hist = Histogram::empty(spec.clone());
    let mut point = vec![0.0; spec.dims()];
    for row in samples.rows() {
        point.iter_mut().zip(row.iter()).for_each(|(p, &v)| *p = v);
        hist.add(&point);
    }
    Ok(hist)
}
