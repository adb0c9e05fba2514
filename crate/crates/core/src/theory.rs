//! The partitioned minimax game evaluated on densities discretized over a 1D
//! grid, independent of any training.
//!
//! For a partition `S_1..S_N` of the support with masses `ρ_i`, per-partition
//! targets `p_dⁱ = p_d·1[S_i]/ρ_i` and per-code generator densities `p_gⁱ`, the
//! optimal discriminators are
//! `D*_i = ρ_i p_dⁱ / (ρ_i p_dⁱ + p_gⁱ/N)` and the game value is
//! `Σ_i ρ_i E_{p_dⁱ}[log D*_i] + (1/N) E_{p_gⁱ}[log(1 − D*_i)]`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::distributions::MixtureSpec;
use crate::error::{Error, Result};
use crate::models::{route_argmax, Classifier};

/// Normalization tolerance for discretized densities.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Uniform 1D cells `[lo + k·w, lo + (k+1)·w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub lo: f64,
    pub width: f64,
    pub cells: usize,
}

impl CellGrid {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(
                "cell grid",
                format!("[{lo}, {hi}) with {cells} cells"),
            ));
        }
        Ok(CellGrid {
            lo,
            width: (hi - lo) / cells as f64,
            cells,
        })
    }

    /// 2,000 cells spanning every mode's ±6σ.
    pub fn for_mixture(target: &MixtureSpec) -> Result<Self> {
        if target.dims() != 1 {
            return Err(Error::invalid(
                "cell grid",
                "only 1D targets are discretized",
            ));
        }
        let (lo, hi) = target
            .means()
            .iter()
            .zip(target.scales())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (m, s)| {
                (lo.min(m[0] - 6.0 * s), hi.max(m[0] + 6.0 * s))
            });
        CellGrid::new(lo, hi, 2000)
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|k| self.center(k)).collect()
    }

    /// Evaluates `f` at cell centers and rescales so the cells integrate to one.
    pub fn density<F: Fn(f64) -> f64>(&self, f: F) -> Result<Vec<f64>> {
        let raw: Vec<f64> = self.centers().into_iter().map(f).collect();
        let mass = raw.iter().sum::<f64>() * self.width;
        if !(mass > 0.0 && mass.is_finite()) || raw.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid(
                "density",
                "must be nonnegative with positive finite mass",
            ));
        }
        Ok(raw.into_iter().map(|v| v / mass).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedPartition {
    pub grid: CellGrid,
    /// Data density per cell.
    pub p_data: Vec<f64>,
    /// Partition index of each cell.
    pub labels: Vec<usize>,
    /// Generator density per code, per cell.
    pub p_gen: Vec<Vec<f64>>,
}

impl DiscretizedPartition {
    pub fn new(
        grid: CellGrid,
        p_data: Vec<f64>,
        labels: Vec<usize>,
        p_gen: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let part = DiscretizedPartition {
            grid,
            p_data,
            labels,
            p_gen,
        };
        part.validate()?;
        Ok(part)
    }

    /// Partition whose generator densities equal the per-partition targets.
    pub fn matched(grid: CellGrid, p_data: Vec<f64>, labels: Vec<usize>, n: usize) -> Result<Self> {
        let placeholder = vec![vec![0.0; grid.cells]; n];
        let mut part = DiscretizedPartition {
            grid,
            p_data,
            labels,
            p_gen: placeholder,
        };
        part.p_gen = (0..n).map(|i| part.p_data_given(i)).collect();
        part.validate()?;
        Ok(part)
    }

    pub fn n(&self) -> usize {
        self.p_gen.len()
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.grid.cells;
        let n = self.n();
        if n == 0 {
            return Err(Error::invalid("partition", "needs at least one code"));
        }
        if self.p_data.len() != cells || self.labels.len() != cells {
            return Err(Error::shape(
                "partition cells",
                cells,
                self.p_data.len().min(self.labels.len()),
            ));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        check_density("p_data", &self.p_data, self.grid.width)?;
        for g in &self.p_gen {
            if g.len() != cells {
                return Err(Error::shape("generator density", cells, g.len()));
            }
            check_density("generator density", g, self.grid.width)?;
        }
        Ok(())
    }

    /// Data mass `ρ_i` falling in partition `i`.
    pub fn rho(&self, i: usize) -> f64 {
        self.p_data
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == i)
            .map(|(p, _)| p)
            .sum::<f64>()
            * self.grid.width
    }

    /// `p_dⁱ`: the data density restricted to `S_i` and renormalized.
    pub fn p_data_given(&self, i: usize) -> Vec<f64> {
        let rho = self.rho(i);
        self.p_data
            .iter()
            .zip(&self.labels)
            .map(|(&p, &l)| if l == i && rho > 0.0 { p / rho } else { 0.0 })
            .collect()
    }
}

fn check_density(what: &'static str, p: &[f64], width: f64) -> Result<()> {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid(
            what,
            "entries must be finite and nonnegative",
        ));
    }
    let mass = p.iter().sum::<f64>() * width;
    if (mass - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::invalid(what, format!("integrates to {mass}")));
    }
    Ok(())
}

fn d_star(rho: f64, pd: f64, pg: f64, n: usize) -> Option<f64> {
    let num = rho * pd;
    let den = num + pg / n as f64;
    (den > 0.0).then(|| num / den)
}

/// `D*_i` at one cell.
pub fn optimal_discriminator(part: &DiscretizedPartition, i: usize, cell: usize) -> Result<f64> {
    let n = part.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    if cell >= part.grid.cells {
        return Err(Error::IndexOutOfRange {
            index: cell,
            len: part.grid.cells,
        });
    }
    let rho = part.rho(i);
    let pd = if part.labels[cell] == i && rho > 0.0 {
        part.p_data[cell] / rho
    } else {
        0.0
    };
    d_star(rho, pd, part.p_gen[i][cell], n).ok_or(Error::UndefinedCell { partition: i, cell })
}

/// Game value with every discriminator at its optimum.
pub fn minimax_value(part: &DiscretizedPartition) -> f64 {
    let n = part.n();
    let w = part.grid.width;
    let mut total = 0.0;
    for i in 0..n {
        let rho = part.rho(i);
        let pd_i = part.p_data_given(i);
        for (&pd, &pg) in pd_i.iter().zip(&part.p_gen[i]) {
            let Some(d) = d_star(rho, pd, pg, n) else {
                continue;
            };
            if pd > 0.0 {
                total += rho * pd * d.ln() * w;
            }
            if pg > 0.0 {
                total += pg * (1.0 - d).ln() * w / n as f64;
            }
        }
    }
    total
}

/// Value attained at `p_gⁱ = p_dⁱ` for the partition's own masses.
pub fn matched_value(part: &DiscretizedPartition) -> f64 {
    let n = part.n() as f64;
    (0..part.n())
        .map(|i| part.rho(i))
        .filter(|&rho| rho > 0.0)
        .map(|rho| rho * (rho * n / (rho * n + 1.0)).ln() + (1.0 / (rho * n + 1.0)).ln() / n)
        .sum()
}

/// `Σ_i p_gⁱ / N`, the distribution the conditional generator samples from.
pub fn generator_mixture(part: &DiscretizedPartition) -> Vec<f64> {
    let n = part.n() as f64;
    (0..part.grid.cells)
        .map(|c| part.p_gen.iter().map(|g| g[c]).sum::<f64>() / n)
        .collect()
}

/// `KL(a ‖ b)` between two densities on the same cells.
pub fn density_kl(a: &[f64], b: &[f64], width: f64) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| p * (p / q).ln() * width)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMap {
    pub grid: CellGrid,
    pub labels: Vec<usize>,
    /// Midpoints between adjacent cells whose labels differ.
    pub boundaries: Vec<f64>,
}

/// Labels each cell center by the classifier's most probable class.
pub fn extract_partition(q: &Classifier, grid: &CellGrid) -> Result<PartitionMap> {
    if q.scaler.dims() != 1 {
        return Err(Error::invalid("extract partition", "classifier must be 1D"));
    }
    let centers = Array2::from_shape_vec((grid.cells, 1), grid.centers()).expect("one column");
    let labels = route_argmax(q.classify(centers.view())?.view());
    let boundaries = labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(k, _)| grid.lo + (k + 1) as f64 * grid.width)
        .collect();
    Ok(PartitionMap {
        grid: *grid,
        labels,
        boundaries,
    })
}

/// Outcome of one self-check of the discretized game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Number of random perturbations tried by [`run_checks`].
pub const PERTURBATIONS: u64 = 100;

/// Three equal modes at 0, 20 and 40 (σ = 1), split at the midpoints, so
/// that every partition carries mass 1/3 up to tails below 1e-80.
pub fn separated_three_modes(cells: usize) -> Result<(CellGrid, Vec<f64>, Vec<usize>)> {
    let target =
        MixtureSpec::equal_weights(1, vec![vec![0.0], vec![20.0], vec![40.0]], vec![1.0; 3])?;
    let grid = CellGrid::new(-10.0, 50.0, cells)?;
    let pd = grid.density(|x| target.pdf(&[x]))?;
    let labels = grid
        .centers()
        .iter()
        .map(|&x| usize::from(x >= 10.0) + usize::from(x >= 30.0))
        .collect();
    Ok((grid, pd, labels))
}

/// The matched three-mode game with one code's density mixed with a
/// Gaussian bump drawn from `seed`.
pub fn perturbed_value(seed: u64) -> Result<f64> {
    use rand::Rng;
    let (grid, pd, labels) = separated_three_modes(600)?;
    let mut part = DiscretizedPartition::matched(grid, pd, labels, 3)?;
    let mut rng = crate::distributions::stream_rng(seed, 0);
    let i = rng.random_range(0..3);
    let at = rng.random_range(-10.0..50.0);
    let w = rng.random_range(0.5..5.0);
    let mix = rng.random_range(0.01..0.9);
    let bump = grid.density(|x| (-(x - at) * (x - at) / (2.0 * w * w)).exp())?;
    for (g, b) in part.p_gen[i].iter_mut().zip(&bump) {
        *g = (1.0 - mix) * *g + mix * b;
    }
    part.validate()?;
    Ok(minimax_value(&part))
}

/// Optimal discriminators at the matched point, the minimax value, random
/// perturbations of the generator and the single-discriminator reduction.
pub fn run_checks() -> Result<Vec<TheoryCheck>> {
    let log4 = 4f64.ln();
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(TheoryCheck {
            name: name.into(),
            passed,
            detail,
        })
    };

    let (grid, pd, labels) = separated_three_modes(3000)?;
    let part = DiscretizedPartition::matched(grid, pd, labels, 3)?;
    let rho_err = (0..3)
        .map(|i| (part.rho(i) - 1.0 / 3.0).abs())
        .fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for cell in 0..grid.cells {
        if part.p_data[cell] > 0.0 {
            let d = optimal_discriminator(&part, part.labels[cell], cell)?;
            worst = worst.max((d - 0.5).abs());
        }
    }
    // Equal dyadic masses make every intermediate exact, so D* must be
    // exactly 1/2; the Gaussian game is exact up to rounding of its masses.
    let dyadic = DiscretizedPartition::matched(
        CellGrid::new(0.0, 8.0, 8)?,
        vec![0.125; 8],
        (0..8).map(|c| c / 2).collect(),
        4,
    )?;
    let mut exact = true;
    for cell in 0..8 {
        exact &= optimal_discriminator(&dyadic, dyadic.labels[cell], cell)? == 0.5;
    }
    push(
        "optimal discriminator is 1/2 at the matched point",
        exact && worst <= 1e-12 && rho_err <= 1e-12,
        format!(
            "dyadic game exact: {exact}; Gaussian game max |D* - 1/2| = {worst:e}, \
             max |rho - 1/N| = {rho_err:e}"
        ),
    );
    let value = minimax_value(&part);
    push(
        "minimax value is -log 4 at the matched point",
        (value + log4).abs() <= 1e-6,
        format!("value {value:.12}, -log 4 = {:.12}", -log4),
    );

    let mut lowest = f64::INFINITY;
    for seed in 0..PERTURBATIONS {
        lowest = lowest.min(perturbed_value(seed)?);
    }
    push(
        "perturbed generators never go below -log 4",
        lowest >= -log4 - 1e-9,
        format!("lowest of {PERTURBATIONS} values {lowest:.12}"),
    );

    let target = MixtureSpec::five_mode_1d();
    let grid = CellGrid::for_mixture(&target)?;
    let pd = grid.density(|x| target.pdf(&[x]))?;
    let pg = grid.density(|x| (-(x - 50.0) * (x - 50.0) / 800.0).exp())?;
    let single =
        DiscretizedPartition::new(grid, pd.clone(), vec![0; grid.cells], vec![pg.clone()])?;
    let mut worst = 0.0f64;
    for c in 0..grid.cells {
        let classic = pd[c] / (pd[c] + pg[c]);
        worst = worst.max((optimal_discriminator(&single, 0, c)? - classic).abs());
    }
    push(
        "one discriminator reduces to p_d/(p_d+p_g)",
        worst <= 1e-12,
        format!("max deviation {worst:e}"),
    );
    Ok(checks)
}
