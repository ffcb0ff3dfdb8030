//! `sgno gen-data`: integrate a registered scenario with the reference
//! solver and write its train/test splits to disk.

use crate::manifest::ManifestBuilder;
use clap::Args;
use sgno::solver::{generate_dataset, Scenario};
use sgno::Result;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Scenario name; pass an unknown name to see the registry.
    #[arg(long, env = "SGNO_SCENARIO")]
    pub scenario: String,

    #[arg(long, env = "SGNO_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Output directory for train.bin, test.bin, and meta.json.
    #[arg(long, env = "SGNO_OUT")]
    pub out: PathBuf,

    /// Override the scenario's training trajectory count.
    #[arg(long)]
    pub num_train: Option<usize>,

    /// Override the scenario's test trajectory count.
    #[arg(long)]
    pub num_test: Option<usize>,
}

pub fn run(args: &GenDataArgs) -> Result<()> {
    let mut scenario = Scenario::named(&args.scenario)?;
    if let Some(n) = args.num_train {
        scenario.num_train = n;
    }
    if let Some(n) = args.num_test {
        scenario.num_test = n;
    }
    if scenario.num_train == 0 {
        eprintln!("warning: writing an empty training split");
    }

    let mut manifest = ManifestBuilder::new("gen-data", args.seed);
    let dataset = generate_dataset(&scenario, args.seed)?;
    dataset.save(&args.out)?;
    for name in ["train.bin", "test.bin", "meta.json"] {
        manifest.artifact(name);
    }
    manifest.write(&args.out)?;

    println!(
        "{}: train {} x {} frames, test {} x {} frames, state shape {:?}, dt {}",
        scenario.name,
        dataset.train.num_trajectories(),
        dataset.train.num_frames(),
        dataset.test.num_trajectories(),
        dataset.test.num_frames(),
        dataset.train.state_shape(),
        scenario.dt_data,
    );
    Ok(())
}
