//! Flat key-value run configuration.
//!
//! Three layers, later ones winning: built-in defaults, an optional TOML
//! file (`--config` flag, else the `SIFTER_CONFIG` environment variable),
//! and repeated `--set key=value` flags. Unknown keys are rejected at every
//! layer. The fully resolved document is written next to every output
//! artifact so a run can always be reproduced from its own droppings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sifter_core::classify::TrainConfig;
use sifter_core::contrastive::{ContrastiveConfig, LossWeights};
use sifter_core::{Error, Result};

/// Environment variable naming a default config file, consulted when
/// `--config` is absent.
pub const CONFIG_ENV: &str = "SIFTER_CONFIG";

/// Every knob a run reads, in one flat document. Path-valued keys treat the
/// empty string as "not set"; command-line path flags override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Base seed for every random choice a command makes.
    pub seed: u64,
    /// Scalar width for training and checkpoints: "f64" or "f32".
    pub precision: String,
    /// Embedding width d_e. Mean pooling represents sentences in this width.
    pub embed_dim: usize,
    /// Recurrent width d_h, used by LSTM pooling and the classifier.
    pub hidden_dim: usize,
    /// Label count for classification.
    pub num_classes: usize,
    /// Sentence representation: "mean" (average embedding) or "lstm"
    /// (final hidden state).
    pub pooling: String,
    /// Softmax temperature of the contrastive loss.
    pub temperature: f64,
    /// Weight on the (x, y+) contrastive term.
    pub lambda_xy: f64,
    /// Weight on the (x, z+) contrastive term.
    pub lambda_xz: f64,
    /// Weight on the (y+, z+) contrastive term.
    pub lambda_yz: f64,
    pub dropout_contrastive: f64,
    pub dropout_classifier: f64,
    /// "adamw" (decoupled weight decay) or "adam".
    pub optimizer_contrastive: String,
    /// "adam" or "adamw".
    pub optimizer_classifier: String,
    pub learning_rate_contrastive: f64,
    pub learning_rate_classifier: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay strength when an optimizer is "adamw".
    pub weight_decay: f64,
    /// Coupled L2 strength for classifier training.
    pub l2_lambda: f64,
    pub batch_size_contrastive: usize,
    pub batch_size_classifier: usize,
    /// Steps between dev evaluations during contrastive training.
    pub validation_interval_contrastive: usize,
    /// Steps between dev evaluations during classifier training.
    pub validation_interval_classifier: usize,
    pub max_epochs_contrastive: usize,
    pub max_epochs_classifier: usize,
    /// Replacement word-list files for augmentation; empty = built-in list.
    pub deletion_lexicon: String,
    pub pronoun_lexicon: String,
    pub verb_lexicon: String,
    pub determiner_lexicon: String,
    /// Gate lexicon for the sifter classifier variant.
    pub classifier_lexicon: String,
    /// Default data paths, each overridable by the matching command flag.
    pub corpus_file: String,
    pub annotations_file: String,
    pub triples_file: String,
    pub dev_pairs_file: String,
    pub train_file: String,
    pub dev_file: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            precision: "f64".into(),
            embed_dim: 64,
            hidden_dim: 32,
            num_classes: 2,
            pooling: "mean".into(),
            temperature: 0.05,
            lambda_xy: 1.0,
            lambda_xz: 1.0,
            lambda_yz: 1.0,
            dropout_contrastive: 0.15,
            dropout_classifier: 0.2,
            optimizer_contrastive: "adamw".into(),
            optimizer_classifier: "adam".into(),
            learning_rate_contrastive: 1e-5,
            learning_rate_classifier: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            l2_lambda: 1e-7,
            batch_size_contrastive: 64,
            batch_size_classifier: 32,
            validation_interval_contrastive: 125,
            validation_interval_classifier: 50,
            max_epochs_contrastive: 1,
            max_epochs_classifier: 3,
            deletion_lexicon: String::new(),
            pronoun_lexicon: String::new(),
            verb_lexicon: String::new(),
            determiner_lexicon: String::new(),
            classifier_lexicon: String::new(),
            corpus_file: String::new(),
            annotations_file: String::new(),
            triples_file: String::new(),
            dev_pairs_file: String::new(),
            train_file: String::new(),
            dev_file: String::new(),
        }
    }
}

fn as_table(config: &Config) -> toml::Table {
    toml::Table::try_from(config).expect("config serializes to a flat table")
}

/// Parses one `key=value` override against the expected type of `key`
/// (taken from the defaults, which carry every key with its proper type).
fn apply_set(table: &mut toml::Table, expected: &toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("--set {spec:?}: expected key=value")))?;
    let (key, value) = (key.trim(), value.trim());
    let parsed = match expected.get(key) {
        None => return Err(Error::invalid(format!("--set {key}: unknown config key"))),
        Some(toml::Value::Integer(_)) => toml::Value::Integer(value.parse().map_err(|_| {
            Error::invalid(format!("--set {key}: expected an integer, got {value:?}"))
        })?),
        Some(toml::Value::Float(_)) => toml::Value::Float(value.parse().map_err(|_| {
            Error::invalid(format!("--set {key}: expected a number, got {value:?}"))
        })?),
        Some(toml::Value::Boolean(_)) => toml::Value::Boolean(value.parse().map_err(|_| {
            Error::invalid(format!("--set {key}: expected true or false, got {value:?}"))
        })?),
        Some(toml::Value::String(_)) => toml::Value::String(value.to_string()),
        Some(_) => return Err(Error::invalid(format!("--set {key}: unsupported key type"))),
    };
    table.insert(key.to_string(), parsed);
    Ok(())
}

impl Config {
    /// Builds the effective configuration. `file` falls back to the
    /// `SIFTER_CONFIG` environment variable; no file at all means pure
    /// defaults. A named file that cannot be read is an I/O error.
    pub fn resolve(file: Option<&Path>, sets: &[String]) -> Result<Config> {
        let defaults = as_table(&Config::default());
        let mut table = defaults.clone();

        let path = match file {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).map(PathBuf::from),
        };
        if let Some(p) = &path {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let file_table: toml::Table = text
                .parse()
                .map_err(|e| Error::invalid(format!("{}: {e}", p.display())))?;
            for (key, mut value) in file_table {
                match defaults.get(&key) {
                    None => {
                        return Err(Error::invalid(format!(
                            "{}: unknown config key {key:?}",
                            p.display()
                        )))
                    }
                    // TOML writes whole floats as integers; coerce them back.
                    Some(toml::Value::Float(_)) => {
                        if let toml::Value::Integer(i) = value {
                            value = toml::Value::Float(i as f64);
                        }
                    }
                    Some(_) => {}
                }
                table.insert(key, value);
            }
        }
        for spec in sets {
            apply_set(&mut table, &defaults, spec)?;
        }

        let config: Config = table
            .try_into()
            .map_err(|e| Error::invalid(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Structural checks; numeric hyperparameters are validated by the
    /// training configurations they feed.
    pub fn validate(&self) -> Result<()> {
        match self.precision.as_str() {
            "f32" | "f64" => {}
            other => {
                return Err(Error::invalid(format!(
                    "precision must be \"f32\" or \"f64\", got {other:?}"
                )))
            }
        }
        match self.pooling.as_str() {
            "mean" | "lstm" => {}
            other => {
                return Err(Error::invalid(format!(
                    "pooling must be \"mean\" or \"lstm\", got {other:?}"
                )))
            }
        }
        for (key, value) in [
            ("optimizer_contrastive", &self.optimizer_contrastive),
            ("optimizer_classifier", &self.optimizer_classifier),
        ] {
            match value.as_str() {
                "adam" | "adamw" => {}
                other => {
                    return Err(Error::invalid(format!(
                        "{key} must be \"adam\" or \"adamw\", got {other:?}"
                    )))
                }
            }
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid("encoder dimensions must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        Ok(())
    }

    /// The resolved document, every key materialized, keys in declaration
    /// order. Byte-stable for a given configuration.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            xy: self.lambda_xy,
            xz: self.lambda_xz,
            yz: self.lambda_yz,
            temperature: self.temperature,
        }
    }

    pub fn contrastive(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            learning_rate: self.learning_rate_contrastive,
            batch_size: self.batch_size_contrastive,
            weights: self.loss_weights(),
            dropout: self.dropout_contrastive,
            validation_interval: self.validation_interval_contrastive,
            max_epochs: self.max_epochs_contrastive,
            seed: self.seed,
            decoupled_decay: self.optimizer_contrastive == "adamw",
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn classifier(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate_classifier,
            batch_size: self.batch_size_classifier,
            l2_lambda: self.l2_lambda,
            dropout: self.dropout_classifier,
            validation_interval: self.validation_interval_classifier,
            max_epochs: self.max_epochs_classifier,
            seed: self.seed,
            decoupled_decay: self.optimizer_classifier == "adamw",
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// `None` for the empty-string "not set" sentinel.
pub fn opt_path(value: &str) -> Option<PathBuf> {
    if value.is_empty() {
        None
    } else {
        Some(PathBuf::from(value))
    }
}
