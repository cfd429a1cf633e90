use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::{DefenseChoice, DefenseKind};
use crate::attacks::{
    AttackConfig, AttackKind, BackdoorKind, BackdoorSpec, PatternSpec, PerturbationSign,
};
use crate::error::{Error, Result};
use crate::nn::TrainingConfig;

/// Parameters of the synthetic blob dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub spread: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 4,
            dim: 64,
            train_per_class: 500,
            test_per_class: 250,
            spread: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SynthSpec),
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl DatasetSource {
    /// MNIST distribution file names inside `dir`.
    pub fn mnist_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        DatasetSource::Idx {
            train_images: d.join("train-images-idx3-ubyte"),
            train_labels: d.join("train-labels-idx1-ubyte"),
            test_images: d.join("t10k-images-idx3-ubyte"),
            test_labels: d.join("t10k-labels-idx1-ubyte"),
        }
    }
}

/// Everything that determines one simulated training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub rounds: usize,
    pub defense: DefenseChoice,
    pub attack: AttackConfig,
    pub training: TrainingConfig,
    pub layer_sizes: Vec<usize>,
    pub dataset: DatasetSource,
    pub seed: u64,
    /// Worker training pool size; 0 lets the pool pick. Never affects results.
    pub threads: usize,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 51,
            m: 12,
            rounds: 60,
            defense: DefenseChoice::new(DefenseKind::NoDefense, 12),
            attack: AttackConfig::default(),
            training: TrainingConfig::default(),
            layer_sizes: vec![64, 16, 4],
            dataset: DatasetSource::Synthetic(SynthSpec::default()),
            seed: 0,
            threads: 0,
            out_csv: None,
            out_json: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m >= self.n {
            return Err(Error::Config(format!(
                "need 0 <= m < n, got n={}, m={}",
                self.n, self.m
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "bad layer sizes {:?}",
                self.layer_sizes
            )));
        }
        self.defense.validate(self.n)?;
        self.attack.validate()?;
        self.training.validate()?;
        if let DatasetSource::Synthetic(s) = &self.dataset {
            if s.classes == 0 || s.dim == 0 || s.train_per_class == 0 || s.test_per_class == 0 {
                return Err(Error::Config(format!("bad synthetic dataset {s:?}")));
            }
        }
        Ok(())
    }

    /// Parses a flat key/value TOML document; absent keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let flat: FlatConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        flat.into_config()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// On-disk configuration: one key per setting, no tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlatConfig {
    pub n: usize,
    pub m: usize,
    pub rounds: usize,
    pub seed: u64,
    pub threads: usize,

    pub defense: String,
    /// Defaults to `m`.
    pub m_assumed: Option<usize>,
    pub cluster_threshold: f64,

    pub attack: String,
    pub z: Option<f64>,
    pub alpha: f64,
    pub omniscient: bool,
    pub attack_epochs: usize,
    pub sign: PerturbationSign,
    pub backdoor: BackdoorKind,
    pub backdoor_samples: Vec<usize>,
    pub pattern_size: usize,
    pub pattern_intensity: f64,
    pub pattern_target: usize,
    pub pattern_samples: usize,

    pub learning_rate: f64,
    pub momentum: f64,
    pub l2_weight: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub layer_sizes: Vec<usize>,

    /// `synth`, or `mnist:<dir>` holding the four MNIST distribution files.
    pub dataset: String,
    pub synth_classes: usize,
    pub synth_dim: usize,
    pub synth_train_per_class: usize,
    pub synth_test_per_class: usize,
    pub synth_spread: f64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,

    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
}

impl Default for FlatConfig {
    fn default() -> Self {
        let base = ExperimentConfig::default();
        let synth = SynthSpec::default();
        let attack = AttackConfig::default();
        let pattern = PatternSpec::default();
        FlatConfig {
            n: base.n,
            m: base.m,
            rounds: base.rounds,
            seed: base.seed,
            threads: base.threads,
            defense: base.defense.kind.name().into(),
            m_assumed: None,
            cluster_threshold: base.defense.cluster_threshold,
            attack: "none".into(),
            z: attack.z,
            alpha: attack.alpha,
            omniscient: attack.omniscient,
            attack_epochs: attack.local_epochs,
            sign: attack.sign,
            backdoor: attack.backdoor.kind,
            backdoor_samples: attack.backdoor.sample_indices,
            pattern_size: pattern.size,
            pattern_intensity: pattern.intensity,
            pattern_target: pattern.target,
            pattern_samples: pattern.samples_per_round,
            learning_rate: base.training.learning_rate,
            momentum: base.training.momentum,
            l2_weight: base.training.l2_weight,
            batch_size: base.training.batch_size,
            local_epochs: base.training.epochs,
            layer_sizes: base.layer_sizes,
            dataset: "synth".into(),
            synth_classes: synth.classes,
            synth_dim: synth.dim,
            synth_train_per_class: synth.train_per_class,
            synth_test_per_class: synth.test_per_class,
            synth_spread: synth.spread,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            out_csv: None,
            out_json: None,
        }
    }
}

impl FlatConfig {
    pub fn into_config(self) -> Result<ExperimentConfig> {
        let kind: DefenseKind = self.defense.parse()?;
        let attack_kind: AttackKind = self.attack.parse()?;
        let dataset = match self.dataset.trim() {
            "synth" | "synthetic" => DatasetSource::Synthetic(SynthSpec {
                classes: self.synth_classes,
                dim: self.synth_dim,
                train_per_class: self.synth_train_per_class,
                test_per_class: self.synth_test_per_class,
                spread: self.synth_spread,
            }),
            "idx" => match (
                self.train_images,
                self.train_labels,
                self.test_images,
                self.test_labels,
            ) {
                (Some(a), Some(b), Some(c), Some(d)) => DatasetSource::Idx {
                    train_images: a,
                    train_labels: b,
                    test_images: c,
                    test_labels: d,
                },
                _ => return Err(Error::Config(
                    "dataset 'idx' needs train_images, train_labels, test_images and test_labels"
                        .into(),
                )),
            },
            other => match other.strip_prefix("mnist:") {
                Some(dir) => DatasetSource::mnist_dir(dir),
                None => return Err(Error::Config(format!("unknown dataset '{other}'"))),
            },
        };
        let config = ExperimentConfig {
            n: self.n,
            m: self.m,
            rounds: self.rounds,
            defense: DefenseChoice {
                kind,
                m_assumed: self.m_assumed.unwrap_or(self.m),
                cluster_threshold: self.cluster_threshold,
            },
            attack: AttackConfig {
                kind: attack_kind,
                z: self.z,
                omniscient: self.omniscient,
                alpha: self.alpha,
                backdoor: BackdoorSpec {
                    kind: self.backdoor,
                    sample_indices: self.backdoor_samples,
                    pattern: PatternSpec {
                        size: self.pattern_size,
                        intensity: self.pattern_intensity,
                        target: self.pattern_target,
                        samples_per_round: self.pattern_samples,
                    },
                },
                local_epochs: self.attack_epochs,
                sign: self.sign,
            },
            training: TrainingConfig {
                learning_rate: self.learning_rate,
                momentum: self.momentum,
                l2_weight: self.l2_weight,
                batch_size: self.batch_size,
                epochs: self.local_epochs,
            },
            layer_sizes: self.layer_sizes,
            dataset,
            seed: self.seed,
            threads: self.threads,
            out_csv: self.out_csv,
            out_json: self.out_json,
        };
        config.validate()?;
        Ok(config)
    }
}
