//! Layered run configuration. Resolution order: built-in defaults, the
//! dimension preset for the scenario's grid, the user's TOML file, then
//! command-line flags (clap also fills those from `SGNO_*` environment
//! variables). The fully resolved configuration is echoed into every run
//! manifest and survives a serialize/parse round trip unchanged.

use serde::{Deserialize, Serialize};
use sgno::model::SgnoConfig;
use sgno::spectral::{FilterSpec, GridSpec};
use sgno::train::TrainConfig;
use sgno::{Result, SgnoError};
use std::path::Path;

/// Model hyperparameters as they appear in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub width: usize,
    /// Retained modes per axis (one cutoff shared by all axes).
    pub modes: usize,
    pub blocks: usize,
    pub alpha_g: f64,
    pub alpha_w: f64,
    pub use_beta: bool,
    pub margin: f64,
    /// `"none"` or `"smooth"`.
    pub filter: String,
    pub filter_strength: f64,
    pub filter_order: f64,
    pub coord_channels: bool,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    pub steps: usize,
    pub warmup: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub batch: usize,
    pub log_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub tau: f64,
    /// Rollout steps scored per trajectory (capped by trajectory length).
    pub horizon: usize,
    pub stride: usize,
    /// Horizon of the geometric-mean score.
    pub gmean_h: usize,
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

/// A config file: any subset of the fields above.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct PartialConfig {
    #[serde(default)]
    pub model: PartialModel,
    #[serde(default)]
    pub train: PartialTrain,
    #[serde(default)]
    pub eval: PartialEval,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct PartialModel {
    pub width: Option<usize>,
    pub modes: Option<usize>,
    pub blocks: Option<usize>,
    pub alpha_g: Option<f64>,
    pub alpha_w: Option<f64>,
    pub use_beta: Option<bool>,
    pub margin: Option<f64>,
    pub filter: Option<String>,
    pub filter_strength: Option<f64>,
    pub filter_order: Option<f64>,
    pub coord_channels: Option<bool>,
    pub padding: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct PartialTrain {
    pub steps: Option<usize>,
    pub warmup: Option<usize>,
    pub base_lr: Option<f64>,
    pub min_lr: Option<f64>,
    pub batch: Option<usize>,
    pub log_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct PartialEval {
    pub tau: Option<f64>,
    pub horizon: Option<usize>,
    pub stride: Option<usize>,
    pub gmean_h: Option<usize>,
}

impl RunConfig {
    /// Built-in defaults plus the dimension preset for `grid`.
    pub fn preset(grid: &GridSpec, state_channels: usize) -> RunConfig {
        let m = SgnoConfig::preset(grid.clone(), state_channels);
        let t = TrainConfig::desk_scale();
        RunConfig {
            model: ModelSection {
                width: m.width,
                modes: m.modes_per_axis[0],
                blocks: m.num_blocks,
                alpha_g: m.alpha_g,
                alpha_w: m.alpha_w,
                use_beta: m.use_beta,
                margin: m.margin,
                filter: match m.filter.kind {
                    sgno::spectral::FilterKind::None => "none".to_string(),
                    sgno::spectral::FilterKind::Smooth => "smooth".to_string(),
                },
                filter_strength: m.filter.strength,
                filter_order: m.filter.order,
                coord_channels: m.coord_channels,
                padding: m.padding,
            },
            train: TrainSection {
                steps: t.total_steps,
                warmup: t.warmup_steps,
                base_lr: t.base_lr,
                min_lr: t.min_lr,
                batch: t.batch_size,
                log_every: t.log_every,
            },
            eval: EvalSection {
                tau: 0.2,
                horizon: 200,
                stride: 1,
                gmean_h: 100,
            },
        }
    }

    /// Overwrites every field present in `partial`.
    pub fn merge(&mut self, partial: &PartialConfig) {
        macro_rules! take {
            ($dst:expr, $src:expr) => {
                if let Some(v) = &$src {
                    $dst = v.clone();
                }
            };
        }
        take!(self.model.width, partial.model.width);
        take!(self.model.modes, partial.model.modes);
        take!(self.model.blocks, partial.model.blocks);
        take!(self.model.alpha_g, partial.model.alpha_g);
        take!(self.model.alpha_w, partial.model.alpha_w);
        take!(self.model.use_beta, partial.model.use_beta);
        take!(self.model.margin, partial.model.margin);
        take!(self.model.filter, partial.model.filter);
        take!(self.model.filter_strength, partial.model.filter_strength);
        take!(self.model.filter_order, partial.model.filter_order);
        take!(self.model.coord_channels, partial.model.coord_channels);
        take!(self.model.padding, partial.model.padding);
        take!(self.train.steps, partial.train.steps);
        take!(self.train.warmup, partial.train.warmup);
        take!(self.train.base_lr, partial.train.base_lr);
        take!(self.train.min_lr, partial.train.min_lr);
        take!(self.train.batch, partial.train.batch);
        take!(self.train.log_every, partial.train.log_every);
        take!(self.eval.tau, partial.eval.tau);
        take!(self.eval.horizon, partial.eval.horizon);
        take!(self.eval.stride, partial.eval.stride);
        take!(self.eval.gmean_h, partial.eval.gmean_h);
    }

    /// Merges a TOML file over this configuration.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let partial: PartialConfig = toml::from_str(&text)
            .map_err(|e| SgnoError::Config(format!("{}: {e}", path.display())))?;
        self.merge(&partial);
        Ok(())
    }

    /// The filter described by the model section.
    pub fn filter_spec(&self) -> Result<FilterSpec> {
        match self.model.filter.as_str() {
            "none" => Ok(FilterSpec::none()),
            "smooth" => Ok(FilterSpec::smooth(
                self.model.filter_strength,
                self.model.filter_order,
            )),
            other => Err(SgnoError::Config(format!(
                "unknown filter {other:?}; expected \"none\" or \"smooth\""
            ))),
        }
    }

    /// Expands into the core model configuration for `grid`.
    pub fn model_config(&self, grid: GridSpec, state_channels: usize) -> Result<SgnoConfig> {
        let d = grid.sizes().len();
        let mut config = SgnoConfig::preset(grid, state_channels);
        config.width = self.model.width;
        config.modes_per_axis = vec![self.model.modes; d];
        config.num_blocks = self.model.blocks;
        config.alpha_g = self.model.alpha_g;
        config.alpha_w = self.model.alpha_w;
        config.use_beta = self.model.use_beta;
        config.margin = self.model.margin;
        config.filter = self.filter_spec()?;
        config.coord_channels = self.model.coord_channels;
        config.padding = self.model.padding;
        Ok(config)
    }

    /// Expands into the core training configuration.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            total_steps: self.train.steps,
            warmup_steps: self.train.warmup,
            base_lr: self.train.base_lr,
            min_lr: self.train.min_lr,
            weight_decay: 0.0,
            batch_size: self.train.batch,
            seed,
            log_every: self.train.log_every,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("a resolved config always serializes")
    }
}
