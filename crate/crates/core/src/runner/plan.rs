use serde::{Deserialize, Serialize};

use crate::distributions::{MixtureSpec, NoisePriorSpec};
use crate::error::{Error, Result};
use crate::evaluation::{EvalSpec, HistogramSpec};
use crate::models::Architecture;
use crate::nn::RmsPropConfig;
use crate::training::{Algorithm, GeneratorLoss, LrSchedule, TrainConfig};

/// Target distribution by preset name or explicit components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Five modes at 10, 20, 60, 80, 110.
    #[serde(rename = "five_mode_1d")]
    FiveMode1d,
    Ring {
        modes: usize,
        sigma: f64,
    },
    Mixture {
        dims: usize,
        means: Vec<Vec<f64>>,
        scales: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl TargetSpec {
    pub fn resolve(&self) -> Result<MixtureSpec> {
        match self {
            TargetSpec::FiveMode1d => Ok(MixtureSpec::five_mode_1d()),
            TargetSpec::Ring { modes, sigma } => MixtureSpec::ring(*modes, *sigma),
            TargetSpec::Mixture {
                dims,
                means,
                scales,
                weights,
            } => MixtureSpec::new(*dims, means.clone(), scales.clone(), weights.clone()),
        }
    }
}

/// Training settings; anything omitted takes the library default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub batch_size: Option<usize>,
    pub iterations: Option<u64>,
    pub learning_rate: Option<f64>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub leaky_slope: Option<f64>,
    pub noise_dim: Option<usize>,
    pub code_probabilities: Option<Vec<f64>>,
    pub log_every: Option<u64>,
    pub standardize: Option<bool>,
    pub code_scale: Option<f64>,
    pub generator_loss: Option<GeneratorLoss>,
    pub lr_schedule: Option<LrSchedule>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub samples: Option<usize>,
    pub k_sigma: Option<f64>,
    pub histogram: Option<HistogramSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Kl,
    ChiSquare,
}

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::Kl => "kl",
            Metric::ChiSquare => "chi_square",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// One row per cell group: the lowest metric value, plus mean ± std.
    Best,
    /// One row per run.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    pub rule: SelectionRule,
    pub metric: Metric,
}

impl Default for Selection {
    fn default() -> Self {
        Selection {
            rule: SelectionRule::Best,
            metric: Metric::Kl,
        }
    }
}

/// A sweep over algorithms × discriminator counts × seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub target: TargetSpec,
    pub algorithms: Vec<Algorithm>,
    pub n_discriminators: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub selection: Selection,
    /// Write field, heatmap and per-code diagnostics into each run directory.
    #[serde(default)]
    pub diagnostics: bool,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

/// One fully resolved training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub id: String,
    pub train: TrainConfig,
    pub eval: EvalSpec,
}

impl RunSpec {
    /// Runs sharing a group differ only in their seed.
    pub fn group(&self) -> (String, usize) {
        (self.train.algorithm.label(), self.train.n_discriminators)
    }
}

pub fn parse_plan(text: &str) -> Result<ExperimentPlan> {
    let plan: ExperimentPlan =
        toml::from_str(text).map_err(|e| Error::format("plan toml", e.to_string()))?;
    plan.validate()?;
    Ok(plan)
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::invalid("plan", "name must not be empty"));
        }
        if self.algorithms.is_empty() || self.n_discriminators.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid(
                "plan",
                "algorithms, n_discriminators and seeds must be nonempty",
            ));
        }
        // resolving checks every cell's configuration
        self.runs().map(|_| ())
    }

    pub fn train_config(&self, algorithm: Algorithm, n: usize, seed: u64) -> Result<TrainConfig> {
        let target = self.target.resolve()?;
        let defaults = TrainConfig::new(target.clone(), algorithm, n, seed);
        let t = &self.train;
        let config = TrainConfig {
            noise: NoisePriorSpec {
                dim: t.noise_dim.unwrap_or(defaults.noise.dim),
                ..defaults.noise
            },
            code_probabilities: t.code_probabilities.clone(),
            batch_size: t.batch_size.unwrap_or(defaults.batch_size),
            iterations: t
                .iterations
                .unwrap_or(if target.dims() == 1 { 20_000 } else { 30_000 }),
            optimizer: RmsPropConfig {
                learning_rate: t.learning_rate.unwrap_or(defaults.optimizer.learning_rate),
                alpha: t.alpha.unwrap_or(defaults.optimizer.alpha),
                epsilon: t.epsilon.unwrap_or(defaults.optimizer.epsilon),
            },
            architecture: Architecture {
                hidden: t
                    .hidden
                    .clone()
                    .unwrap_or(defaults.architecture.hidden.clone()),
                leaky_slope: t.leaky_slope.unwrap_or(defaults.architecture.leaky_slope),
            },
            log_every: t.log_every.unwrap_or(defaults.log_every),
            standardize: t.standardize.unwrap_or(defaults.standardize),
            code_scale: t.code_scale.unwrap_or(defaults.code_scale),
            generator_loss: t.generator_loss.unwrap_or(defaults.generator_loss),
            lr_schedule: t.lr_schedule.unwrap_or(defaults.lr_schedule),
            ..defaults
        };
        config.validate()?;
        Ok(config)
    }

    pub fn eval_spec(&self) -> Result<EvalSpec> {
        let target = self.target.resolve()?;
        let defaults = EvalSpec::for_target(&target);
        let spec = EvalSpec {
            histogram: self.eval.histogram.clone().unwrap_or(defaults.histogram),
            samples: self.eval.samples.unwrap_or(defaults.samples),
            k_sigma: self.eval.k_sigma.unwrap_or(defaults.k_sigma),
        };
        spec.histogram.validate()?;
        if spec.histogram.dims() != target.dims() {
            return Err(Error::invalid(
                "eval",
                "histogram dimension differs from the target",
            ));
        }
        if spec.samples == 0 || !(spec.k_sigma > 0.0 && spec.k_sigma.is_finite()) {
            return Err(Error::invalid(
                "eval",
                "samples must be positive and k_sigma > 0",
            ));
        }
        Ok(spec)
    }

    /// Every cell in sweep order. The standard GAN always uses one
    /// discriminator and appears once per seed.
    pub fn runs(&self) -> Result<Vec<RunSpec>> {
        let eval = self.eval_spec()?;
        let mut out: Vec<RunSpec> = Vec::new();
        for &alg in &self.algorithms {
            let ns: Vec<usize> = if alg == Algorithm::StandardGan {
                vec![1]
            } else {
                self.n_discriminators.clone()
            };
            for n in ns {
                for &seed in &self.seeds {
                    let id = format!("{}-n{}-s{}", alg.label(), n, seed);
                    if out.iter().any(|r| r.id == id) {
                        continue;
                    }
                    out.push(RunSpec {
                        id,
                        train: self.train_config(alg, n, seed)?,
                        eval: eval.clone(),
                    });
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::GmanVariant;

    const TABLE1: &str = r#"
name = "table1"
algorithms = ["dopanet", "gman-mean"]
n_discriminators = [5]
seeds = [0, 1, 2]

[target]
kind = "five_mode_1d"

[train]
iterations = 100
hidden = [16, 16]

[eval]
samples = 65536

[selection]
rule = "best"
metric = "kl"
"#;

    #[test]
    fn parses_and_expands() {
        let plan = parse_plan(TABLE1).unwrap();
        let runs = plan.runs().unwrap();
        assert_eq!(runs.len(), 6);
        assert_eq!(runs[0].id, "dopanet-n5-s0");
        assert_eq!(runs[5].id, "gman-mean-n5-s2");
        assert_eq!(runs[4].train.algorithm, Algorithm::Gman(GmanVariant::Mean));
        assert_eq!(runs[0].train.iterations, 100);
        assert_eq!(runs[0].train.batch_size, 256);
        assert_eq!(runs[0].eval.samples, 65536);
        assert_eq!(runs[0].eval.histogram, HistogramSpec::standard_1d());
    }

    #[test]
    fn defaults() {
        let plan = parse_plan(
            "name = \"x\"\nalgorithms = [\"standard_gan\", \"dopanet\"]\nn_discriminators = [8]\n[target]\nkind = \"ring\"\nmodes = 8\nsigma = 0.1\n",
        )
        .unwrap();
        assert_eq!(plan.seeds, vec![0, 1, 2, 3, 4]);
        let runs = plan.runs().unwrap();
        assert_eq!(runs.len(), 10);
        assert_eq!(runs[0].train.n_discriminators, 1);
        assert_eq!(runs[0].train.iterations, 30_000);
        assert_eq!(runs[0].eval.samples, 1_000_000);
        assert_eq!(runs[0].eval.histogram, HistogramSpec::standard_2d());
    }

    #[test]
    fn rejects_bad_plans() {
        assert!(parse_plan(&TABLE1.replace("seeds = [0, 1, 2]", "seeds = []")).is_err());
        assert!(parse_plan(&TABLE1.replace("\"gman-mean\"", "\"wgan\"")).is_err());
        assert!(parse_plan(&TABLE1.replace("[5]", "[0]")).is_err());
        assert!(parse_plan(&TABLE1.replace("hidden = [16, 16]", "hiden = [16]")).is_err());
        assert!(parse_plan(&TABLE1.replace("metric = \"kl\"", "metric = \"fid\"")).is_err());
        assert!(parse_plan("not toml [").is_err());
    }
}
