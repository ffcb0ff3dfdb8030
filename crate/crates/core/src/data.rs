//! Trajectory storage: in-memory sets plus a raw-binary disk format.
//!
//! A dataset directory holds `train.bin`, `test.bin`, and one `meta.json`.
//! Each `.bin` file is the C-order array `[trajectory, frame, channel,
//! space...]` as little-endian `f32` with no framing; the sidecar records the
//! shapes, the frame spacing, and the generation seeds. Values round-trip
//! bit-exactly.

use crate::error::{Result, SgnoError};
use crate::util::atomic_write;
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Version written into new `meta.json` sidecars.
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// A set of trajectories sharing one grid and frame spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    /// Time between consecutive frames.
    pub dt: f64,
    /// Seed the per-trajectory seeds were derived from.
    pub base_seed: u64,
    /// `[trajectory, frame, channel, space...]`.
    pub data: ArrayD<f32>,
}

impl TrajectorySet {
    pub fn num_trajectories(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn num_frames(&self) -> usize {
        self.data.shape()[1]
    }

    /// Shape of one state, `[channel, space...]`.
    pub fn state_shape(&self) -> Vec<usize> {
        self.data.shape()[2..].to_vec()
    }

    /// One frame as an owned `f64` state `[channel, space...]`.
    pub fn state(&self, trajectory: usize, frame: usize) -> ArrayD<f64> {
        self.data
            .index_axis(ndarray::Axis(0), trajectory)
            .index_axis(ndarray::Axis(0), frame)
            .mapv(f64::from)
            .into_dyn()
    }

    fn write_bin(&self, path: &Path) -> Result<()> {
        let flat = self
            .data
            .as_slice()
            .ok_or_else(|| SgnoError::numeric("trajectory data must be standard layout"))?;
        let mut bytes = Vec::with_capacity(flat.len() * 4);
        for v in flat {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        atomic_write(path, &bytes)?;
        Ok(())
    }

    fn read_bin(path: &Path, meta: &SplitMeta) -> Result<TrajectorySet> {
        let bytes = fs::read(path)?;
        let expected: usize = meta.shape.iter().product();
        if bytes.len() != expected * 4 {
            return Err(SgnoError::Data(format!(
                "{} holds {} bytes but the sidecar declares shape {:?}",
                path.display(),
                bytes.len(),
                meta.shape
            )));
        }
        let mut values = Vec::with_capacity(expected);
        for chunk in bytes.chunks_exact(4) {
            values.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        let data = ArrayD::from_shape_vec(IxDyn(&meta.shape), values)
            .map_err(|e| SgnoError::Data(format!("bad trajectory shape: {e}")))?;
        Ok(TrajectorySet {
            dt: meta.dt,
            base_seed: meta.base_seed,
            data,
        })
    }
}

/// Scenario identity recorded next to the splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub dt: f64,
    pub grid: Vec<usize>,
    pub channels: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitMeta {
    file: String,
    shape: Vec<usize>,
    dtype: String,
    dt: f64,
    base_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    format_version: u32,
    scenario: ScenarioInfo,
    train: SplitMeta,
    test: SplitMeta,
}

/// Train and test splits of one scenario.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub info: ScenarioInfo,
    pub train: TrajectorySet,
    pub test: TrajectorySet,
}

impl Dataset {
    /// Writes `train.bin`, `test.bin`, and `meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.train.write_bin(&dir.join("train.bin"))?;
        self.test.write_bin(&dir.join("test.bin"))?;
        let meta = DatasetMeta {
            format_version: DATASET_FORMAT_VERSION,
            scenario: self.info.clone(),
            train: split_meta("train.bin", &self.train),
            test: split_meta("test.bin", &self.test),
        };
        let json = serde_json::to_vec_pretty(&meta)?;
        atomic_write(&dir.join("meta.json"), &json)?;
        Ok(())
    }

    /// Loads a directory written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Dataset> {
        let meta_path = dir.join("meta.json");
        let meta: DatasetMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
        if meta.format_version != DATASET_FORMAT_VERSION {
            return Err(SgnoError::Data(format!(
                "unsupported dataset format version {}",
                meta.format_version
            )));
        }
        for split in [&meta.train, &meta.test] {
            if split.dtype != "f32le" {
                return Err(SgnoError::Data(format!(
                    "unsupported dtype {}",
                    split.dtype
                )));
            }
        }
        let train = TrajectorySet::read_bin(&dir.join(&meta.train.file), &meta.train)?;
        let test = TrajectorySet::read_bin(&dir.join(&meta.test.file), &meta.test)?;
        Ok(Dataset {
            info: meta.scenario,
            train,
            test,
        })
    }
}

fn split_meta(file: &str, set: &TrajectorySet) -> SplitMeta {
    SplitMeta {
        file: file.to_string(),
        shape: set.data.shape().to_vec(),
        dtype: "f32le".to_string(),
        dt: set.dt,
        base_seed: set.base_seed,
    }
}
