//! `sgno rollout`: autoregressive evaluation of a checkpoint on a test
//! split, with optional stride composition, plus error-band and stable-step
//! plots.

use crate::config::RunConfig;
use crate::manifest::ManifestBuilder;
use crate::plot::{error_band_svg, stable_cdf_svg};
use crate::util::{atomic_write, write_json};
use clap::Args;
use serde::Serialize;
use sgno::data::Dataset;
use sgno::eval::{cdf_points, evaluate, quantile, stride_frames, Strided};
use sgno::model::SgnoModel;
use sgno::Result;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct RolloutArgs {
    /// Trained checkpoint to roll out.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Dataset directory; rollouts start from its test split.
    #[arg(long)]
    pub data: PathBuf,

    /// Output directory for rollout.json, plots, and manifest.json.
    #[arg(long, env = "SGNO_OUT")]
    pub out: PathBuf,

    /// TOML config merged over the dimension preset (eval section).
    #[arg(long, env = "SGNO_CONFIG")]
    pub config: Option<PathBuf>,

    /// Rollout steps to score per trajectory.
    #[arg(long, env = "SGNO_STEPS")]
    pub steps: Option<usize>,

    /// Stability threshold on nRMSE.
    #[arg(long, env = "SGNO_TAU")]
    pub tau: Option<f64>,

    /// Compose the one-step map this many times per compared frame.
    #[arg(long, env = "SGNO_STRIDE")]
    pub stride: Option<usize>,
}

#[derive(Debug, Serialize)]
struct RolloutReport {
    scenario: String,
    stride: usize,
    tau: f64,
    /// Steps actually scored per trajectory after striding and capping.
    scored_steps: usize,
    gmean_horizon: usize,
    /// Geometric mean over horizon steps of the across-trajectory mean error.
    gmean_of_mean: f64,
    /// Median across trajectories of per-trajectory geometric means.
    median_of_gmeans: f64,
    per_step_median: Vec<f64>,
    per_step_p10: Vec<f64>,
    per_step_p90: Vec<f64>,
    stable_steps: Vec<usize>,
    stable_cdf: Vec<(f64, f64)>,
    invalid_from: Vec<Option<usize>>,
}

pub fn run(args: &RolloutArgs) -> Result<()> {
    let model = SgnoModel::load_checkpoint(&args.checkpoint)?;
    let dataset = Dataset::load(&args.data)?;

    let grid = model.config().grid.clone();
    let mut config = RunConfig::preset(&grid, dataset.info.channels);
    if let Some(path) = &args.config {
        config.merge_file(path)?;
    }
    if let Some(s) = args.steps {
        config.eval.horizon = s;
    }
    if let Some(t) = args.tau {
        config.eval.tau = t;
    }
    if let Some(s) = args.stride {
        config.eval.stride = s;
    }
    let mut manifest = ManifestBuilder::new("rollout", 0).config(&config);

    let stride = config.eval.stride.max(1);
    let eval_set = stride_frames(&dataset.test, stride);
    let strided = Strided {
        inner: &model,
        steps: stride,
    };
    let report = evaluate(
        &strided,
        &eval_set,
        Some(config.eval.horizon),
        config.eval.tau,
        config.eval.gmean_h,
    )?;

    let steps = report
        .per_traj_nrmse
        .iter()
        .map(|t| t.len())
        .min()
        .unwrap_or(0);
    let mut per_step_median = Vec::with_capacity(steps);
    let mut per_step_p10 = Vec::with_capacity(steps);
    let mut per_step_p90 = Vec::with_capacity(steps);
    for s in 0..steps {
        let column: Vec<f64> = report.per_traj_nrmse.iter().map(|t| t[s]).collect();
        per_step_median.push(quantile(&column, 0.5)?);
        per_step_p10.push(quantile(&column, 0.1)?);
        per_step_p90.push(quantile(&column, 0.9)?);
    }
    let stable_f64: Vec<f64> = report.stable_steps.iter().map(|&s| s as f64).collect();
    let stable_cdf = cdf_points(&stable_f64);

    let out = RolloutReport {
        scenario: dataset.info.name.clone(),
        stride,
        tau: config.eval.tau,
        scored_steps: steps,
        gmean_horizon: config.eval.gmean_h,
        gmean_of_mean: report.gmean.gmean_of_mean,
        median_of_gmeans: report.gmean.median_of_gmeans,
        per_step_median: per_step_median.clone(),
        per_step_p10: per_step_p10.clone(),
        per_step_p90: per_step_p90.clone(),
        stable_steps: report.stable_steps.clone(),
        stable_cdf: stable_cdf.clone(),
        invalid_from: report.invalid_from.clone(),
    };

    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("rollout.json"), &out)?;
    manifest.artifact("rollout.json");
    let mut csv = String::from("traj");
    for s in 1..=steps {
        csv.push_str(&format!(",step_{s}"));
    }
    csv.push('\n');
    for (t, curve) in report.per_traj_nrmse.iter().enumerate() {
        csv.push_str(&t.to_string());
        for &e in curve.iter().take(steps) {
            csv.push_str(&format!(",{e}"));
        }
        csv.push('\n');
    }
    atomic_write(&args.out.join("nrmse.csv"), csv.as_bytes())?;
    manifest.artifact("nrmse.csv");
    atomic_write(
        &args.out.join("error_band.svg"),
        error_band_svg(&per_step_median, &per_step_p10, &per_step_p90).as_bytes(),
    )?;
    manifest.artifact("error_band.svg");
    atomic_write(
        &args.out.join("stable_cdf.svg"),
        stable_cdf_svg(&stable_cdf, steps as f64).as_bytes(),
    )?;
    manifest.artifact("stable_cdf.svg");
    manifest.write(&args.out)?;

    println!(
        "{}: {} trajectories x {} steps (stride {stride}), gmean{} of mean {:.4e}, median of gmeans {:.4e}",
        out.scenario,
        report.per_traj_nrmse.len(),
        steps,
        out.gmean_horizon,
        out.gmean_of_mean,
        out.median_of_gmeans,
    );
    Ok(())
}
