//! TOML run-configuration schema.
//!
//! The CLI owns its own section structs rather than deserializing the
//! library types directly: every field here is optional with a sane
//! default, unknown keys are rejected everywhere, and the conversion
//! into library configs is the single place the two schemas meet.

use std::path::PathBuf;

use serde::Deserialize;

use qgrad::attack::{AttackConfig, AttackKind};
use qgrad::eval::{GradientRepr, SweepAxis};
use qgrad::quantize::QuantizerKind;
use qgrad::train::{AdversarialTraining, Optimizer, TrainConfig};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub dataset: DatasetSection,
    pub train: Option<TrainSection>,
    pub attack: Option<AttackSection>,
    pub eval: Option<EvalSection>,
    pub histogram: Option<HistogramSection>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden layer widths, first to last; empty means a linear model.
    #[serde(default)]
    pub hidden: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "source", rename_all = "snake_case")]
pub enum DatasetSection {
    /// Procedurally generated class blobs; fully determined by its own
    /// seed, which is part of the data definition and deliberately not
    /// touched by `--seed`.
    Synthetic {
        examples: usize,
        side: usize,
        classes: usize,
        #[serde(default)]
        seed: u64,
        downscale: Option<usize>,
        limit: Option<usize>,
    },
    /// IDX image/label files, optionally gzipped. Relative paths are
    /// resolved against `QGRAD_DATA_DIR` when it is set.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        downscale: Option<usize>,
        limit: Option<usize>,
    },
}

fn default_epochs() -> usize {
    10
}
fn default_batch_size() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_epsilon() -> f64 {
    0.3
}
fn default_alpha() -> f64 {
    0.01
}
fn default_steps() -> usize {
    40
}
fn default_daa_weight() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_num_runs() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Momentum coefficient; omitted means plain SGD.
    pub momentum: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub log_robust: bool,
    pub adversarial: Option<AdversarialSection>,
}

impl TrainSection {
    pub fn to_config(&self, seed_override: Option<u64>) -> Result<TrainConfig, CliError> {
        let adversarial = self
            .adversarial
            .as_ref()
            .map(|adv| {
                Ok::<_, CliError>(AdversarialTraining {
                    kind: adv.attack.kind,
                    attack: adv.attack.to_config(seed_override)?,
                    clean_mix: adv.clean_mix,
                })
            })
            .transpose()?;
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: match self.momentum {
                Some(beta) => Optimizer::Momentum { beta },
                None => Optimizer::Sgd,
            },
            seed: seed_override.unwrap_or(self.seed),
            adversarial,
            log_robust: self.log_robust,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarialSection {
    #[serde(default)]
    pub clean_mix: f64,
    pub attack: AttackSection,
}

/// The attack table shared by `attack`, `eval`, `sweep` and adversarial
/// training: which loop to run plus its hyperparameters.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub restarts: usize,
    pub quantizer: Option<QuantizerSection>,
    #[serde(default = "default_daa_weight")]
    pub daa_weight: f64,
    pub kernel_bandwidth: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub random_start: bool,
    pub batch_size: Option<usize>,
}

impl AttackSection {
    pub fn to_config(&self, seed_override: Option<u64>) -> Result<AttackConfig, CliError> {
        Ok(AttackConfig {
            epsilon: self.epsilon,
            alpha: self.alpha,
            steps: self.steps,
            restarts: self.restarts,
            quantizer: match &self.quantizer {
                Some(q) => q.to_kind()?,
                None => QuantizerKind::Sign,
            },
            daa_weight: self.daa_weight,
            kernel_bandwidth: self.kernel_bandwidth,
            seed: seed_override.unwrap_or(self.seed),
            random_start: self.random_start,
            batch_size: self.batch_size,
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerName {
    Sign,
    Zeta,
    Qsgd,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSection {
    pub kind: QuantizerName,
    pub b: Option<u32>,
    pub s: Option<u32>,
    pub seed: Option<u64>,
}

impl QuantizerSection {
    pub fn to_kind(&self) -> Result<QuantizerKind, CliError> {
        match self.kind {
            QuantizerName::Sign => {
                if self.b.is_some() || self.s.is_some() || self.seed.is_some() {
                    return Err(CliError::Config(
                        "the sign quantizer takes no level or seed".into(),
                    ));
                }
                Ok(QuantizerKind::Sign)
            }
            QuantizerName::Zeta => {
                if self.s.is_some() || self.seed.is_some() {
                    return Err(CliError::Config(
                        "the zeta quantizer takes `b` only".into(),
                    ));
                }
                let b = self.b.ok_or_else(|| {
                    CliError::Config("the zeta quantizer needs a level `b`".into())
                })?;
                Ok(QuantizerKind::Zeta { b })
            }
            QuantizerName::Qsgd => {
                if self.b.is_some() {
                    return Err(CliError::Config(
                        "the qsgd quantizer takes `s` (and optionally `seed`), not `b`"
                            .into(),
                    ));
                }
                let s = self.s.ok_or_else(|| {
                    CliError::Config("the qsgd quantizer needs a level `s`".into())
                })?;
                Ok(QuantizerKind::Qsgd {
                    s,
                    seed: self.seed.unwrap_or(0),
                })
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_num_runs")]
    pub num_runs: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprName {
    Sign,
    Zeta,
    Raw,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSection {
    pub repr: ReprName,
    pub b: Option<u32>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl HistogramSection {
    pub fn to_repr(&self) -> Result<GradientRepr, CliError> {
        match self.repr {
            ReprName::Sign => {
                if self.b.is_some() {
                    return Err(CliError::Config(
                        "the sign representation takes no level".into(),
                    ));
                }
                Ok(GradientRepr::Sign)
            }
            ReprName::Zeta => {
                let b = self.b.ok_or_else(|| {
                    CliError::Config("the zeta representation needs a level `b`".into())
                })?;
                Ok(GradientRepr::Zeta { b })
            }
            ReprName::Raw => {
                let b = self.b.ok_or_else(|| {
                    CliError::Config("the raw representation needs a level `b`".into())
                })?;
                Ok(GradientRepr::Raw { b })
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kinds: Vec<AttackKind>,
    #[serde(default = "default_num_runs")]
    pub num_runs: usize,
    /// Exactly one of the three axes must be present.
    pub epsilons: Option<Vec<f64>>,
    pub steps: Option<Vec<usize>>,
    pub levels: Option<Vec<u32>>,
}

impl SweepSection {
    pub fn to_axis(&self) -> Result<SweepAxis, CliError> {
        match (&self.epsilons, &self.steps, &self.levels) {
            (Some(e), None, None) => Ok(SweepAxis::Epsilon(e.clone())),
            (None, Some(s), None) => Ok(SweepAxis::Steps(s.clone())),
            (None, None, Some(l)) => Ok(SweepAxis::Level(l.clone())),
            _ => Err(CliError::Config(
                "a sweep needs exactly one of `epsilons`, `steps`, `levels`".into(),
            )),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
