//! `sgno verify`: measure the stability constants of a trained checkpoint
//! and check every bound the analysis promises. A failed bound is a numeric
//! failure (exit code 2), not a warning.

use crate::manifest::ManifestBuilder;
use crate::util::write_json;
use clap::Args;
use sgno::data::Dataset;
use sgno::model::SgnoModel;
use sgno::verify::{verify_model, BoundReport, VerifyOptions};
use sgno::{Result, SgnoError};
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Trained checkpoint to verify.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Dataset directory; its training split supplies the visited states.
    #[arg(long)]
    pub data: PathBuf,

    /// Output directory for bounds.json and manifest.json.
    #[arg(long, env = "SGNO_OUT")]
    pub out: PathBuf,

    #[arg(long, env = "SGNO_SEED", default_value_t = 0)]
    pub seed: u64,
}

fn print_line(name: &str, passed: bool, detail: String) {
    println!(
        "{:<18} {}  {detail}",
        name,
        if passed { "PASS" } else { "FAIL" }
    );
}

pub fn print_report(report: &BoundReport) {
    print_line(
        "block gain",
        report.block_gain.passed,
        format!(
            "max {:.6} vs q {:.6} over {} pairs",
            report.block_gain.max_gain, report.q_block_upper, report.block_gain.pairs
        ),
    );
    print_line(
        "one-step bound",
        report.one_step.passed,
        format!(
            "max {:.6} vs q_data {:.6} over {} pairs",
            report.one_step.max_gain, report.q_data_upper, report.one_step.pairs
        ),
    );
    print_line(
        "error recursion",
        report.error_recursion.passed,
        format!(
            "worst unrolled violation {:.3e} over {} trajectories x {} steps",
            report.error_recursion.max_unrolled_violation,
            report.error_recursion.trajectories,
            report.error_recursion.steps
        ),
    );
    print_line(
        "propagator tables",
        report.propagator.passed,
        format!(
            "sup|e^(dt lambda)| {:.6} <= {:.6}, sup phi-weight {:.6} <= {:.6}",
            report.propagator.sup_exp,
            report.propagator.exp_bound,
            report.propagator.sup_phi,
            report.propagator.phi_bound
        ),
    );
    print_line(
        "linear probe",
        report.linear_probe.passed,
        format!(
            "amplitude error {:.3e}, phase error {:.3e}",
            report.linear_probe.amplitude_error, report.linear_probe.phase_error
        ),
    );
}

pub fn run(args: &VerifyArgs) -> Result<()> {
    let model = SgnoModel::load_checkpoint(&args.checkpoint)?;
    let dataset = Dataset::load(&args.data)?;
    let mut manifest = ManifestBuilder::new("verify", args.seed);

    let opts = VerifyOptions {
        seed: args.seed,
        ..VerifyOptions::default()
    };
    let report = verify_model(&model, &dataset.train, &opts)?;

    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("bounds.json"), &report)?;
    manifest.artifact("bounds.json");
    manifest.write(&args.out)?;

    print_report(&report);
    if report.all_passed() {
        Ok(())
    } else {
        Err(SgnoError::numeric(
            "a stability bound failed; see bounds.json",
        ))
    }
}
