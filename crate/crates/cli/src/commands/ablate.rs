//! `sgno ablate`: train the full model and its two single-pathway ablations
//! under one shared protocol and report the three horizon scores side by
//! side.

use crate::config::RunConfig;
use crate::manifest::ManifestBuilder;
use crate::util::{median, write_json};
use clap::Args;
use serde::Serialize;
use sgno::eval::evaluate;
use sgno::model::SgnoModel;
use sgno::solver::{generate_dataset, Scenario};
use sgno::train::train;
use sgno::Result;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Scenario to ablate on.
    #[arg(long, env = "SGNO_SCENARIO")]
    pub task: String,

    /// Output directory for ablate.json and manifest.json.
    #[arg(long, env = "SGNO_OUT")]
    pub out: PathBuf,

    /// TOML config merged over the dimension preset.
    #[arg(long, env = "SGNO_CONFIG")]
    pub config: Option<PathBuf>,

    /// Dataset seed; training seeds count up from it.
    #[arg(long, env = "SGNO_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Training seeds, one run per seed per variant.
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    pub seeds: Vec<u64>,

    /// Optimizer steps per run.
    #[arg(long, env = "SGNO_STEPS")]
    pub steps: Option<usize>,
}

#[derive(Debug, Serialize)]
struct VariantResult {
    label: String,
    alpha_g: f64,
    alpha_w: f64,
    per_seed_gmean: Vec<f64>,
    median_gmean: f64,
}

#[derive(Debug, Serialize)]
struct AblateReport {
    task: String,
    gmean_horizon: usize,
    seeds: Vec<u64>,
    variants: Vec<VariantResult>,
}

pub fn run(args: &AblateArgs) -> Result<()> {
    let scenario = Scenario::named(&args.task)?;
    let grid = scenario.grid()?;
    let mut config = RunConfig::preset(&grid, 1);
    if let Some(path) = &args.config {
        config.merge_file(path)?;
    }
    if let Some(s) = args.steps {
        config.train.steps = s;
        if config.train.warmup >= s {
            config.train.warmup = s / 5;
        }
    }
    let mut manifest = ManifestBuilder::new("ablate", args.seed).config(&config);

    let dataset = generate_dataset(&scenario, args.seed)?;
    let base = (config.model.alpha_g, config.model.alpha_w);
    let triples = [
        ("full", base.0, base.1),
        ("alpha_w=0", base.0, 0.0),
        ("alpha_g=0", 0.0, base.1),
    ];

    let mut variants = Vec::new();
    for (label, alpha_g, alpha_w) in triples {
        let mut per_seed = Vec::new();
        for &seed in &args.seeds {
            let mut mc = config.model_config(grid.clone(), 1)?;
            mc.dt_data = dataset.info.dt;
            mc.alpha_g = alpha_g;
            mc.alpha_w = alpha_w;
            let mut model = SgnoModel::new(mc, seed)?;
            let tc = config.train_config(seed);
            train(&mut model, &dataset.train, &tc, None)?;
            let report = evaluate(
                &model,
                &dataset.test,
                Some(config.eval.gmean_h),
                config.eval.tau,
                config.eval.gmean_h,
            )?;
            per_seed.push(report.gmean.gmean_of_mean);
        }
        variants.push(VariantResult {
            label: label.to_string(),
            alpha_g,
            alpha_w,
            median_gmean: median(&per_seed),
            per_seed_gmean: per_seed,
        });
    }

    let report = AblateReport {
        task: args.task.clone(),
        gmean_horizon: config.eval.gmean_h,
        seeds: args.seeds.clone(),
        variants,
    };
    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("ablate.json"), &report)?;
    manifest.artifact("ablate.json");
    manifest.write(&args.out)?;

    println!(
        "{:<12} {:>12} {:>12} {:>12}",
        "task", report.variants[0].label, report.variants[1].label, report.variants[2].label
    );
    println!(
        "{:<12} {:>12.4} {:>12.4} {:>12.4}",
        report.task,
        report.variants[0].median_gmean,
        report.variants[1].median_gmean,
        report.variants[2].median_gmean
    );
    Ok(())
}
