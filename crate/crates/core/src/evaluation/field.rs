use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{route_argmax, Classifier, DiscriminatorBank};
use crate::nn::{loss_input_gradient, LossSpec};

/// Evenly spaced points covering `[lo, hi]` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.hi
                } else {
                    self.lo + i as f64 * step
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.points == 0 || !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::invalid("grid axis", format!("{self:?}")));
        }
        Ok(())
    }
}

/// Rectangular evaluation grid in data space, one axis per data dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::invalid("grid spec", "one or two axes"));
        }
        self.axes.iter().try_for_each(GridAxis::validate)
    }

    /// Grid points, first axis varying slowest.
    pub fn points(&self) -> Result<Array2<f64>> {
        self.validate()?;
        let values: Vec<Vec<f64>> = self.axes.iter().map(GridAxis::values).collect();
        let n: usize = values.iter().map(Vec::len).product();
        let mut out = Array2::zeros((n, values.len()));
        for (row, mut point) in out.rows_mut().into_iter().enumerate() {
            let mut rest = row;
            for (d, axis) in values.iter().enumerate().rev() {
                point[d] = axis[rest % axis.len()];
                rest /= axis.len();
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// Each point uses the discriminator its classifier argmax selects.
    Routed,
    /// One field per discriminator over the whole grid.
    PerDiscriminator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldLayer {
    /// `None` for the routed composite.
    pub discriminator: Option<usize>,
    /// Discriminator used at each grid point.
    pub assignment: Vec<usize>,
    pub vectors: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub points: Array2<f64>,
    pub layers: Vec<FieldLayer>,
}

/// `−∇ₓ log(1 − D_i(x))` for every point, in data coordinates.
fn pull(bank: &DiscriminatorBank, idx: usize, points: ArrayView2<f64>) -> Result<Array2<f64>> {
    let net = bank.net(idx)?;
    let u = bank.scaler.to_model(points);
    let (_, grad) = loss_input_gradient(net, u.view(), &LossSpec::BceFake)?;
    // undo the batch mean and the standardization
    Ok(grad * (points.nrows() as f64 / bank.scaler.scale))
}

/// Vector field a generator sample would follow at each grid point.
pub fn gradient_field(
    bank: &DiscriminatorBank,
    classifier: Option<&Classifier>,
    grid: &GridSpec,
    mode: FieldMode,
) -> Result<FieldGrid> {
    let points = grid.points()?;
    if points.ncols() != bank.scaler.dims() {
        return Err(Error::shape(
            "field grid",
            bank.scaler.dims(),
            points.ncols(),
        ));
    }
    let layers = match mode {
        FieldMode::PerDiscriminator => (0..bank.len())
            .map(|i| {
                Ok(FieldLayer {
                    discriminator: Some(i),
                    assignment: vec![i; points.nrows()],
                    vectors: pull(bank, i, points.view())?,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        FieldMode::Routed => {
            let q = classifier.ok_or_else(|| {
                Error::invalid("gradient field", "routed mode needs a classifier")
            })?;
            let assignment = route_argmax(q.classify(points.view())?.view());
            let mut vectors = Array2::zeros(points.raw_dim());
            for i in 0..bank.len() {
                let rows: Vec<usize> = (0..points.nrows())
                    .filter(|&r| assignment[r] == i)
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                let sub = points.select(ndarray::Axis(0), &rows);
                let v = pull(bank, i, sub.view())?;
                for (k, &r) in rows.iter().enumerate() {
                    vectors.row_mut(r).assign(&v.row(k));
                }
            }
            vec![FieldLayer {
                discriminator: None,
                assignment,
                vectors,
            }]
        }
    };
    Ok(FieldGrid { points, layers })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHeatmap {
    pub points: Array2<f64>,
    /// `D_i(x)` per discriminator.
    pub scores: Vec<Array1<f64>>,
    /// `Q(x)_i` per discriminator when a classifier is given.
    pub routing: Option<Array2<f64>>,
}

impl ScoreHeatmap {
    /// `D_i(x)·Q(x)_i` per discriminator, when routing probabilities exist.
    pub fn weighted(&self) -> Option<Vec<Array1<f64>>> {
        let q = self.routing.as_ref()?;
        Some(
            self.scores
                .iter()
                .enumerate()
                .map(|(i, d)| d * &q.column(i))
                .collect(),
        )
    }
}

pub fn score_heatmap(
    bank: &DiscriminatorBank,
    classifier: Option<&Classifier>,
    grid: &GridSpec,
) -> Result<ScoreHeatmap> {
    let points = grid.points()?;
    if points.ncols() != bank.scaler.dims() {
        return Err(Error::shape(
            "heatmap grid",
            bank.scaler.dims(),
            points.ncols(),
        ));
    }
    let scores = (0..bank.len())
        .map(|i| bank.discriminate(i, points.view()))
        .collect::<Result<Vec<_>>>()?;
    let routing = classifier.map(|q| q.classify(points.view())).transpose()?;
    Ok(ScoreHeatmap {
        points,
        scores,
        routing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::stream_rng;
    use crate::models::{Architecture, Standardizer};
    use crate::nn::{Mlp, OutputActivation};

    fn bank(n: usize, dims: usize) -> DiscriminatorBank {
        let arch = Architecture {
            hidden: vec![8, 8],
            leaky_slope: 0.2,
        };
        let scaler = Standardizer {
            shift: vec![0.3; dims],
            scale: 2.0,
        };
        DiscriminatorBank::new(n, &arch, scaler, |i| stream_rng(5, 1000 + i as u64)).unwrap()
    }

    fn grid2() -> GridSpec {
        let axis = GridAxis {
            lo: -1.0,
            hi: 1.0,
            points: 5,
        };
        GridSpec {
            axes: vec![axis, axis],
        }
    }

    #[test]
    fn grid_covers_range_exactly() {
        let axis = GridAxis {
            lo: -1.4,
            hi: 1.4,
            points: 15,
        };
        let v = axis.values();
        assert_eq!(v[0], -1.4);
        assert_eq!(v[14], 1.4);
        let pts = grid2().points().unwrap();
        assert_eq!(pts.nrows(), 25);
        assert_eq!(pts.row(1).to_vec(), vec![-1.0, -0.5]);
        assert_eq!(pts.row(5).to_vec(), vec![-0.5, -1.0]);
    }

    #[test]
    fn field_matches_finite_differences() {
        let b = bank(2, 2);
        let field = gradient_field(&b, None, &grid2(), FieldMode::PerDiscriminator).unwrap();
        assert_eq!(field.layers.len(), 2);
        let h = 1e-6;
        let g = |i: usize, x: &[f64]| {
            let d = b
                .discriminate(
                    i,
                    ndarray::Array2::from_shape_vec((1, 2), x.to_vec())
                        .unwrap()
                        .view(),
                )
                .unwrap()[0];
            -(1.0 - d).ln()
        };
        for layer in &field.layers {
            let i = layer.discriminator.unwrap();
            for (p, v) in field.points.rows().into_iter().zip(layer.vectors.rows()) {
                for d in 0..2 {
                    let mut up = p.to_vec();
                    let mut dn = p.to_vec();
                    up[d] += h;
                    dn[d] -= h;
                    let fd = (g(i, &up) - g(i, &dn)) / (2.0 * h);
                    assert!((fd - v[d]).abs() < 1e-6, "{fd} vs {}", v[d]);
                }
            }
        }
    }

    #[test]
    fn routed_field_picks_assigned_discriminator() {
        let b = bank(3, 2);
        let q = Classifier::new(
            3,
            &Architecture::default(),
            b.scaler.clone(),
            &mut stream_rng(5, 3),
        )
        .unwrap();
        let grid = grid2();
        let routed = gradient_field(&b, Some(&q), &grid, FieldMode::Routed).unwrap();
        let each = gradient_field(&b, None, &grid, FieldMode::PerDiscriminator).unwrap();
        let layer = &routed.layers[0];
        for (r, &i) in layer.assignment.iter().enumerate() {
            let expect = each.layers[i].vectors.row(r);
            for (a, e) in layer.vectors.row(r).iter().zip(expect) {
                assert!((a - e).abs() < 1e-9);
            }
        }
        assert!(gradient_field(&b, None, &grid, FieldMode::Routed).is_err());

        let heat = score_heatmap(&b, Some(&q), &grid).unwrap();
        let weighted = heat.weighted().unwrap();
        for p in 0..heat.points.nrows() {
            let mix: f64 = weighted.iter().map(|w| w[p]).sum();
            let best = heat.scores.iter().map(|s| s[p]).fold(0.0, f64::max);
            assert!(mix <= best + 1e-15);
        }
    }

    #[test]
    fn zero_discriminator_pulls_nowhere() {
        let net = Mlp::zeros(
            &[1, 4, 1],
            crate::nn::HiddenActivation::LeakyRelu(0.2),
            OutputActivation::Sigmoid,
        )
        .unwrap();
        let b = DiscriminatorBank::from_nets(vec![net], Standardizer::identity(1)).unwrap();
        let grid = GridSpec {
            axes: vec![GridAxis {
                lo: 0.0,
                hi: 1.0,
                points: 3,
            }],
        };
        let field = gradient_field(&b, None, &grid, FieldMode::PerDiscriminator).unwrap();
        assert!(field.layers[0].vectors.iter().all(|&v| v == 0.0));
        let heat = score_heatmap(&b, None, &grid).unwrap();
        assert!(heat.scores[0].iter().all(|&s| s == 0.5));
        assert!(heat.routing.is_none());
    }
}
