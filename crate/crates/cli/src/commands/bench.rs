//! `sgno bench`: cost figures for one model configuration. Parameter count
//! is exact; latency is the median of many warmed-up calls; peak memory
//! comes from the kernel's high-water mark and is platform dependent. The
//! timing report varies run to run and is flagged as such in the manifest.

use crate::manifest::ManifestBuilder;
use crate::util::write_json;
use clap::Args;
use serde::Serialize;
use sgno::model::{SgnoConfig, SgnoModel};
use sgno::solver::{generate_trajectories, random_initial_field, Scenario};
use sgno::spectral::SpectrumLayout;
use sgno::train::{train, TrainConfig};
use sgno::Result;
use std::path::PathBuf;
use std::time::Instant;

/// One-dimensional scenarios are benched at this resolution.
const BENCH_GRID_1D: usize = 160;
const WARMUP_CALLS: usize = 10;
const TIMED_CALLS: usize = 100;
const THROUGHPUT_STEPS: usize = 20;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario whose grid and time step shape the benchmark input.
    #[arg(long, env = "SGNO_SCENARIO", default_value = "burgers1d")]
    pub scenario: String,

    /// Optional output directory for bench.json and manifest.json.
    #[arg(long, env = "SGNO_OUT")]
    pub out: Option<PathBuf>,

    #[arg(long, env = "SGNO_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    scenario: String,
    grid: Vec<usize>,
    batch: usize,
    params: usize,
    latency_ms_median: f64,
    train_steps_per_s: f64,
    peak_mem_mb: Option<f64>,
}

/// VmHWM from /proc/self/status, in megabytes.
fn peak_memory_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

pub fn run(args: &BenchArgs) -> Result<()> {
    let named = Scenario::named(&args.scenario)?;
    let scenario = if named.grid_sizes.len() == 1 {
        named.with_grid_sizes(vec![BENCH_GRID_1D])
    } else {
        named
    };
    let grid = scenario.grid()?;
    let mut manifest = ManifestBuilder::new("bench", args.seed).non_deterministic();

    let mut config = SgnoConfig::preset(grid.clone(), 1);
    config.dt_data = scenario.dt_data;
    let model = SgnoModel::new(config.clone(), args.seed)?;
    let params = model.param_len();

    let layout = SpectrumLayout::full(grid.clone())?;
    let state = random_initial_field(&layout, args.seed)?;
    for _ in 0..WARMUP_CALLS {
        model.one_step(&state)?;
    }
    let mut latencies = Vec::with_capacity(TIMED_CALLS);
    for _ in 0..TIMED_CALLS {
        let t = Instant::now();
        let _ = model.one_step(&state)?;
        latencies.push(t.elapsed().as_secs_f64() * 1e3);
    }
    latencies.sort_by(|a, b| a.total_cmp(b));
    let latency_ms_median = latencies[latencies.len() / 2];

    let tc = TrainConfig {
        total_steps: THROUGHPUT_STEPS,
        warmup_steps: THROUGHPUT_STEPS / 5,
        seed: args.seed,
        ..TrainConfig::full_scale()
    };
    // five trajectories leave 30 training pairs after the two-trajectory
    // validation holdout, enough to fill the batch
    let set = generate_trajectories(&scenario, 5, 11, args.seed)?;
    let mut trainee = SgnoModel::new(config, args.seed)?;
    let t = Instant::now();
    train(&mut trainee, &set, &tc, None)?;
    let train_steps_per_s = THROUGHPUT_STEPS as f64 / t.elapsed().as_secs_f64();

    let report = BenchReport {
        scenario: scenario.name.clone(),
        grid: grid.sizes().to_vec(),
        batch: tc.batch_size,
        params,
        latency_ms_median,
        train_steps_per_s,
        peak_mem_mb: peak_memory_mb(),
    };

    println!(
        "{:>8} {:>14} {:>14} {:>16}",
        "params", "latency_ms", "peak_mem_mb", "train_steps_per_s"
    );
    println!(
        "{:>8} {:>14.3} {:>14} {:>16.2}",
        report.params,
        report.latency_ms_median,
        report
            .peak_mem_mb
            .map_or("n/a".to_string(), |m| format!("{m:.1}")),
        report.train_steps_per_s,
    );

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        write_json(&out.join("bench.json"), &report)?;
        manifest.artifact("bench.json");
        manifest.write(out)?;
    }
    Ok(())
}
