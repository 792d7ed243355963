//! Run configuration shared by every subcommand.
//!
//! Flat UTF-8 `key=value` lines with `#` comments. Every key is optional
//! (missing keys take defaults); unknown keys are rejected so typos fail
//! fast. All fields validate against their owning module's preconditions
//! at load time, and parse/serialize round-trips exactly.

use crate::cli::CliError;
use crate::network::{Activation, ConvLayer, NetworkConfig};
use crate::preprocess::Rotation;
use crate::training::{AdamConfig, TrainOptions};

/// The pipeline's knobs: preprocessing, architecture, training, folds,
/// and embedding, all downstream of one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Expected source-image side (synthesis and sanity checks).
    pub input_side: usize,
    /// Patch side; also the network's input side.
    pub patch_size: usize,
    pub patches_per_image: usize,
    pub rotations: Vec<u32>,
    pub routing_iterations: usize,
    pub lr: f64,
    pub stop_loss: f64,
    pub max_steps: usize,
    pub batch_size: usize,
    pub k_folds: usize,
    pub perplexity: f64,
    pub seed: u64,
    pub conv_layers: Vec<ConvLayer>,
    pub primary_capsule_dim: usize,
    pub class_capsule_dim: usize,
    pub activation: Activation,
}

impl Default for RunConfig {
    fn default() -> Self {
        let stock = NetworkConfig::default();
        RunConfig {
            input_side: 512,
            patch_size: 256,
            patches_per_image: 100,
            rotations: vec![0, 90, 180],
            routing_iterations: stock.routing_iterations,
            lr: 0.0001,
            stop_loss: 0.1,
            max_steps: 5000,
            batch_size: 16,
            k_folds: 5,
            perplexity: 30.0,
            seed: 0,
            conv_layers: stock.conv_layers,
            primary_capsule_dim: stock.primary_capsule_dim,
            class_capsule_dim: stock.class_capsule_dim,
            activation: stock.activation,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::BadConfig(format!(
        "key {key}: cannot parse {value:?}"
    )))
}

impl RunConfig {
    /// The network this configuration describes. Patches are the training
    /// unit, so the network's input side is the patch size; the class
    /// count is pinned to the four labels.
    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            input_channels: 3,
            input_side: self.patch_size,
            conv_layers: self.conv_layers.clone(),
            activation: self.activation,
            primary_capsule_dim: self.primary_capsule_dim,
            class_capsules: 4,
            class_capsule_dim: self.class_capsule_dim,
            routing_iterations: self.routing_iterations,
        }
    }

    /// Training options under a caller-chosen sub-seed.
    pub fn train_options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            stop_loss: self.stop_loss,
            max_steps: self.max_steps,
            batch_size: self.batch_size,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            seed,
            ..TrainOptions::default()
        }
    }

    /// Check every field against its owning module's preconditions.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.patch_size == 0 || self.patch_size > self.input_side {
            return Err(CliError::BadConfig(format!(
                "patch_size {} must be in 1..=input_side ({})",
                self.patch_size, self.input_side
            )));
        }
        if self.patches_per_image == 0 {
            return Err(CliError::BadConfig("patches_per_image must be positive".into()));
        }
        if self.rotations.is_empty() {
            return Err(CliError::BadConfig("rotations must not be empty".into()));
        }
        for &deg in &self.rotations {
            Rotation::from_degrees(deg)
                .map_err(|e| CliError::BadConfig(format!("rotations: {e}")))?;
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(CliError::BadConfig(format!("lr {} must be positive", self.lr)));
        }
        if !(self.stop_loss.is_finite() && self.stop_loss >= 0.0) {
            return Err(CliError::BadConfig(format!(
                "stop_loss {} must be nonnegative",
                self.stop_loss
            )));
        }
        if self.max_steps == 0 || self.batch_size == 0 {
            return Err(CliError::BadConfig(
                "max_steps and batch_size must be positive".into(),
            ));
        }
        if self.k_folds < 2 {
            return Err(CliError::BadConfig(format!(
                "k_folds {} must be at least 2",
                self.k_folds
            )));
        }
        if !(self.perplexity.is_finite() && self.perplexity > 1.0) {
            return Err(CliError::BadConfig(format!(
                "perplexity {} must exceed 1",
                self.perplexity
            )));
        }
        // Architecture checks (kernel fit, divisibility, ...) live with
        // the network config.
        self.network_config()
            .layer_shapes()
            .map_err(|e| CliError::BadConfig(e.to_string()))?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::default();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::BadConfig(format!("line {}: expected key=value, got {line:?}", number + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "input_side" => config.input_side = parse_value(key, value)?,
                "patch_size" => config.patch_size = parse_value(key, value)?,
                "patches_per_image" => config.patches_per_image = parse_value(key, value)?,
                "rotations" => {
                    config.rotations = value
                        .split(',')
                        .map(|s| parse_value::<u32>(key, s))
                        .collect::<Result<_, _>>()?;
                }
                "routing_iterations" => config.routing_iterations = parse_value(key, value)?,
                "lr" => config.lr = parse_value(key, value)?,
                "stop_loss" => config.stop_loss = parse_value(key, value)?,
                "max_steps" => config.max_steps = parse_value(key, value)?,
                "batch_size" => config.batch_size = parse_value(key, value)?,
                "k_folds" => config.k_folds = parse_value(key, value)?,
                "perplexity" => config.perplexity = parse_value(key, value)?,
                "seed" => config.seed = parse_value(key, value)?,
                "conv_layers" => {
                    config.conv_layers = value
                        .split(',')
                        .map(|s| {
                            ConvLayer::parse(s.trim()).map_err(|e| {
                                CliError::BadConfig(format!("key conv_layers: {e}"))
                            })
                        })
                        .collect::<Result<_, _>>()?;
                }
                "primary_capsule_dim" => config.primary_capsule_dim = parse_value(key, value)?,
                "class_capsule_dim" => config.class_capsule_dim = parse_value(key, value)?,
                "activation" => {
                    config.activation = Activation::parse(value)
                        .map_err(|e| CliError::BadConfig(format!("key activation: {e}")))?;
                }
                _ => {
                    return Err(CliError::BadConfig(format!(
                        "line {}: unknown key {key:?}",
                        number + 1
                    )))
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    pub fn serialize(&self) -> String {
        let rotations: Vec<String> = self.rotations.iter().map(u32::to_string).collect();
        let layers: Vec<String> = self.conv_layers.iter().map(ConvLayer::to_string).collect();
        format!(
            "input_side={}\npatch_size={}\npatches_per_image={}\nrotations={}\n\
             routing_iterations={}\nlr={}\nstop_loss={}\nmax_steps={}\nbatch_size={}\n\
             k_folds={}\nperplexity={}\nseed={}\nconv_layers={}\nprimary_capsule_dim={}\n\
             class_capsule_dim={}\nactivation={}\n",
            self.input_side,
            self.patch_size,
            self.patches_per_image,
            rotations.join(","),
            self.routing_iterations,
            self.lr,
            self.stop_loss,
            self.max_steps,
            self.batch_size,
            self.k_folds,
            self.perplexity,
            self.seed,
            layers.join(","),
            self.primary_capsule_dim,
            self.class_capsule_dim,
            self.activation.as_str(),
        )
    }
}
