//! `sgno train`: fit the operator to a generated dataset and write the
//! checkpoint, training log, and run manifest.

use crate::config::RunConfig;
use crate::manifest::ManifestBuilder;
use clap::Args;
use sgno::data::Dataset;
use sgno::model::SgnoModel;
use sgno::train::train;
use sgno::Result;
use std::path::PathBuf;

/// Model hyperparameter overrides shared by the training-style commands.
#[derive(Debug, Args)]
pub struct ModelFlags {
    /// Scale of the learned forcing path.
    #[arg(long, env = "SGNO_ALPHA_G")]
    pub alpha_g: Option<f64>,

    /// Scale of the pointwise correction path.
    #[arg(long, env = "SGNO_ALPHA_W")]
    pub alpha_w: Option<f64>,

    /// Give the generator a learned imaginary part.
    #[arg(long, env = "SGNO_USE_BETA")]
    pub use_beta: Option<bool>,

    /// Forcing mask: "none" or "smooth".
    #[arg(long, env = "SGNO_FILTER")]
    pub filter: Option<String>,

    /// Number of shared time-advance blocks.
    #[arg(long, env = "SGNO_BLOCKS")]
    pub blocks: Option<usize>,
}

impl ModelFlags {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(v) = self.alpha_g {
            config.model.alpha_g = v;
        }
        if let Some(v) = self.alpha_w {
            config.model.alpha_w = v;
        }
        if let Some(v) = self.use_beta {
            config.model.use_beta = v;
        }
        if let Some(v) = &self.filter {
            config.model.filter = v.clone();
        }
        if let Some(v) = self.blocks {
            config.model.blocks = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,

    /// Output directory for model.ckpt, train.csv, and manifest.json.
    #[arg(long, env = "SGNO_OUT")]
    pub out: PathBuf,

    /// TOML config merged over the dimension preset.
    #[arg(long, env = "SGNO_CONFIG")]
    pub config: Option<PathBuf>,

    #[arg(long, env = "SGNO_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Optimizer steps (the warmup rescales to a fifth when it no longer fits).
    #[arg(long, env = "SGNO_STEPS")]
    pub steps: Option<usize>,

    #[command(flatten)]
    pub model: ModelFlags,
}

/// Builds the resolved run configuration for a dataset: preset for the
/// data's grid, then the user file, then flags.
pub fn resolve_config(
    dataset: &Dataset,
    file: Option<&PathBuf>,
    steps: Option<usize>,
    model: &ModelFlags,
) -> Result<(RunConfig, sgno::spectral::GridSpec)> {
    let grid = sgno::spectral::GridSpec::new(dataset.info.grid.clone())?;
    let mut config = RunConfig::preset(&grid, dataset.info.channels);
    if let Some(path) = file {
        config.merge_file(path)?;
    }
    model.apply(&mut config);
    if let Some(s) = steps {
        config.train.steps = s;
    }
    if config.train.warmup >= config.train.steps {
        config.train.warmup = config.train.steps / 5;
        eprintln!(
            "note: warmup clipped to {} steps to fit the schedule",
            config.train.warmup
        );
    }
    Ok((config, grid))
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let dataset = Dataset::load(&args.data)?;
    let (config, grid) = resolve_config(&dataset, args.config.as_ref(), args.steps, &args.model)?;

    let mut model_config = config.model_config(grid, dataset.info.channels)?;
    model_config.dt_data = dataset.info.dt;
    let mut model = SgnoModel::new(model_config, args.seed)?;

    let mut manifest = ManifestBuilder::new("train", args.seed).config(&config);
    std::fs::create_dir_all(&args.out)?;
    let log_path = args.out.join("train.csv");
    let tc = config.train_config(args.seed);
    let outcome = train(&mut model, &dataset.train, &tc, Some(&log_path))?;
    manifest.artifact("train.csv");

    let ckpt_path = args.out.join("model.ckpt");
    model.save_checkpoint(&ckpt_path)?;
    manifest.artifact("model.ckpt");
    crate::util::atomic_write(&args.out.join("config.toml"), config.to_toml().as_bytes())?;
    manifest.artifact("config.toml");
    manifest.write(&args.out)?;

    println!(
        "trained {} steps on {}: final loss {:.3e}, validation {:?}, max Re(lambda) {:.3e}",
        tc.total_steps,
        dataset.info.name,
        outcome.final_loss,
        outcome.validation_loss,
        model.max_re_lambda(),
    );
    Ok(())
}
