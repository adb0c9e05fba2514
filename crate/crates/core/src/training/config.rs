use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::{CodePriorSpec, MixtureSpec, NoisePriorSpec};
use crate::error::{Error, Result};
use crate::models::Architecture;
use crate::nn::{LossSpec, RmsPropConfig};

/// Generator aggregation over the discriminator bank in the GMAN baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lambda")]
pub enum GmanVariant {
    Mean,
    Max,
    /// Softmax weights with temperature λ over the per-discriminator losses.
    Weighted(f64),
}

impl GmanVariant {
    pub fn validate(&self) -> Result<()> {
        if let GmanVariant::Weighted(lambda) = self {
            if !(*lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::invalid(
                    "gman variant",
                    format!("lambda {lambda} must be >= 0"),
                ));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            GmanVariant::Mean => "gman-mean".into(),
            GmanVariant::Max => "gman-max".into(),
            GmanVariant::Weighted(l) => format!("gman-weighted({l})"),
        }
    }
}

/// Generator objective against the routed discriminator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// Descend `mean log(1 − D)`, as written in the minimax game.
    #[default]
    Saturating,
    /// Descend `−mean log D`; same fixed points, stronger early gradients.
    NonSaturating,
}

impl GeneratorLoss {
    pub fn spec(self) -> LossSpec {
        match self {
            GeneratorLoss::Saturating => LossSpec::BceGenerator,
            GeneratorLoss::NonSaturating => LossSpec::BceReal,
        }
    }
}

/// Learning-rate schedule applied to every agent's optimizer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear decay from the configured rate to `final_fraction` of it at
    /// the last iteration.
    Linear { final_fraction: f64 },
}

impl LrSchedule {
    /// Multiplier of the base learning rate at `iteration` out of `total`.
    pub fn factor(&self, iteration: u64, total: u64) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Linear { final_fraction } => {
                let t = if total > 1 {
                    iteration as f64 / (total - 1) as f64
                } else {
                    0.0
                };
                1.0 - (1.0 - final_fraction) * t.min(1.0)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LrSchedule::Linear { final_fraction } = self {
            if !(*final_fraction > 0.0 && *final_fraction <= 1.0) {
                return Err(Error::invalid(
                    "lr schedule",
                    format!("final fraction {final_fraction} outside (0, 1]"),
                ));
            }
        }
        Ok(())
    }
}

/// Serialized by label: `dopanet`, `standard_gan`, `gman-mean`, `gman-max`,
/// `gman-weighted(λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    Dopanet,
    StandardGan,
    Gman(GmanVariant),
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Algorithm::Dopanet => "dopanet".into(),
            Algorithm::StandardGan => "standard_gan".into(),
            Algorithm::Gman(v) => v.label(),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let alg = match s.trim() {
            "dopanet" => Algorithm::Dopanet,
            "standard_gan" | "gan" => Algorithm::StandardGan,
            "gman-mean" | "gman" => Algorithm::Gman(GmanVariant::Mean),
            "gman-max" => Algorithm::Gman(GmanVariant::Max),
            other => {
                let lambda = other
                    .strip_prefix("gman-weighted(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|l| l.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::invalid("algorithm", format!("unknown algorithm {other:?}"))
                    })?;
                let variant = GmanVariant::Weighted(lambda);
                variant.validate()?;
                Algorithm::Gman(variant)
            }
        };
        Ok(alg)
    }
}

impl TryFrom<String> for Algorithm {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.label()
    }
}

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub target: MixtureSpec,
    pub algorithm: Algorithm,
    pub n_discriminators: usize,
    pub noise: NoisePriorSpec,
    /// Code prior for the conditional generator; uniform over N when absent.
    pub code_probabilities: Option<Vec<f64>>,
    pub batch_size: usize,
    pub iterations: u64,
    pub optimizer: RmsPropConfig,
    pub architecture: Architecture,
    pub seed: u64,
    /// Record a log entry every this many iterations (and at the last one).
    pub log_every: u64,
    /// Map data to zero-mean, unit-scale network coordinates.
    pub standardize: bool,
    #[serde(default)]
    pub generator_loss: GeneratorLoss,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    /// See [`Generator::code_scale`](crate::models::Generator::code_scale).
    #[serde(default = "unit")]
    pub code_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl TrainConfig {
    pub fn new(
        target: MixtureSpec,
        algorithm: Algorithm,
        n_discriminators: usize,
        seed: u64,
    ) -> Self {
        TrainConfig {
            target,
            algorithm,
            n_discriminators,
            noise: NoisePriorSpec::default(),
            code_probabilities: None,
            batch_size: 256,
            iterations: 20_000,
            optimizer: RmsPropConfig::default(),
            architecture: Architecture::default(),
            seed,
            log_every: 100,
            standardize: true,
            generator_loss: GeneratorLoss::Saturating,
            lr_schedule: LrSchedule::Constant,
            code_scale: 1.0,
        }
    }

    /// Number of discriminators actually instantiated.
    pub fn bank_size(&self) -> usize {
        match self.algorithm {
            Algorithm::StandardGan => 1,
            _ => self.n_discriminators,
        }
    }

    /// Number of generator codes: N for DoPaNet, a single constant code otherwise.
    pub fn n_codes(&self) -> usize {
        match self.algorithm {
            Algorithm::Dopanet => self.n_discriminators,
            _ => 1,
        }
    }

    pub fn code_prior(&self) -> CodePriorSpec {
        match (&self.code_probabilities, self.algorithm) {
            (Some(p), Algorithm::Dopanet) => CodePriorSpec {
                probabilities: p.clone(),
            },
            _ => CodePriorSpec::uniform(self.n_codes()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        self.noise.validate()?;
        self.optimizer.validate()?;
        self.lr_schedule.validate()?;
        if self.n_discriminators == 0 {
            return Err(Error::invalid(
                "train config",
                "n_discriminators must be >= 1",
            ));
        }
        if self.algorithm == Algorithm::StandardGan && self.n_discriminators != 1 {
            return Err(Error::invalid(
                "train config",
                "standard_gan uses exactly one discriminator",
            ));
        }
        if let Algorithm::Gman(v) = self.algorithm {
            v.validate()?;
        }
        if !(self.code_scale > 0.0 && self.code_scale.is_finite()) {
            return Err(Error::invalid(
                "train config",
                "code_scale must be positive",
            ));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("train config", "batch_size must be >= 2"));
        }
        if self.log_every == 0 {
            return Err(Error::invalid("train config", "log_every must be >= 1"));
        }
        if self.architecture.hidden.is_empty() || self.architecture.hidden.contains(&0) {
            return Err(Error::invalid(
                "train config",
                "hidden layer widths must be positive",
            ));
        }
        let prior = self.code_prior();
        prior.validate()?;
        if prior.n_codes() != self.n_codes() {
            return Err(Error::invalid(
                "train config",
                "code prior length must equal N",
            ));
        }
        Ok(())
    }
}
