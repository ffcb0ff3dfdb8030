//! One-step teacher-forced training.
//!
//! Every optimization step samples a batch of `(frame, next frame)` pairs,
//! averages the per-pair mean squared error of the surrogate step against the
//! stored next frame, and applies an Adam update under a warmup-cosine
//! learning-rate schedule. Batch order, shuffling, and gradient reduction are
//! deterministic for a fixed seed; batch members are evaluated in parallel
//! but reduced in index order.

use crate::data::TrajectorySet;
use crate::error::{Result, SgnoError};
use crate::model::SgnoModel;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Optimization settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Record every `log_every`-th step (step 1 and the last step always).
    pub log_every: usize,
}

impl TrainConfig {
    /// The full-scale schedule: ten thousand steps with a two thousand step
    /// warmup.
    pub fn full_scale() -> TrainConfig {
        TrainConfig {
            total_steps: 10_000,
            warmup_steps: 2_000,
            base_lr: 1e-3,
            min_lr: 0.0,
            weight_decay: 0.0,
            batch_size: 20,
            seed: 0,
            log_every: 50,
        }
    }

    /// A short schedule with the same warmup fraction, sized for tests and
    /// desk runs.
    pub fn desk_scale() -> TrainConfig {
        TrainConfig {
            total_steps: 2_000,
            warmup_steps: 400,
            ..TrainConfig::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(SgnoError::Config("batch_size must be positive".into()));
        }
        if self.total_steps == 0 {
            return if self.warmup_steps == 0 {
                Ok(())
            } else {
                Err(SgnoError::Config(
                    "a zero-step run cannot have warmup steps".into(),
                ))
            };
        }
        if self.warmup_steps >= self.total_steps {
            return Err(SgnoError::Config(
                "warmup_steps must be smaller than total_steps".into(),
            ));
        }
        if !(self.base_lr > 0.0) || self.min_lr < 0.0 || self.min_lr > self.base_lr {
            return Err(SgnoError::Config(
                "learning rates must satisfy 0 < min_lr <= base_lr".into(),
            ));
        }
        Ok(())
    }
}

/// Learning rate at a (possibly fractional) step: linear from zero over the
/// warmup, then a half-cosine from `base_lr` down to `min_lr` at
/// `total_steps`.
pub fn lr_schedule(config: &TrainConfig, step: f64) -> f64 {
    if step <= 0.0 {
        return 0.0;
    }
    let warmup = config.warmup_steps as f64;
    if step < warmup {
        return config.base_lr * step / warmup;
    }
    let span = (config.total_steps as f64 - warmup).max(1.0);
    let frac = ((step - warmup) / span).min(1.0);
    config.min_lr
        + 0.5 * (config.base_lr - config.min_lr) * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Adam with decoupled weight decay.
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(len: usize) -> Adam {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * (mhat / (vhat.sqrt() + self.eps) + weight_decay * params[i]);
        }
    }
}

/// One training pair: the input frame; the target is the next frame of the
/// same trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndex {
    pub trajectory: usize,
    pub frame: usize,
}

/// Teacher-forced pairs split into optimization and held-out diagnostics.
#[derive(Debug, Clone)]
pub struct PairSplit {
    pub train: Vec<PairIndex>,
    pub validation: Vec<PairIndex>,
}

/// Enumerates consecutive-frame pairs. With at least three trajectories the
/// last two are held out; held-out pairs never drive updates and are reported
/// for diagnostics only.
pub fn make_pairs(set: &TrajectorySet) -> PairSplit {
    let trajs = set.num_trajectories();
    let frames = set.num_frames();
    let holdout = if trajs >= 3 { 2 } else { 0 };
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for trajectory in 0..trajs {
        for frame in 0..frames.saturating_sub(1) {
            let pair = PairIndex { trajectory, frame };
            if trajectory >= trajs - holdout {
                validation.push(pair);
            } else {
                train.push(pair);
            }
        }
    }
    PairSplit { train, validation }
}

/// Per-step log entry.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    pub max_re_lambda: f64,
}

/// Summary returned by [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    pub final_loss: f64,
    /// Mean one-step MSE on the held-out trajectories, when any exist.
    pub validation_loss: Option<f64>,
}

fn sample_loss_and_grad(
    model: &SgnoModel,
    set: &TrajectorySet,
    pair: PairIndex,
) -> Result<(f64, Vec<f64>)> {
    let u = set.state(pair.trajectory, pair.frame);
    let target = set.state(pair.trajectory, pair.frame + 1);
    let (out, tape) = model.one_step_with_tape(&u)?;
    let n = out.len() as f64;
    let mut diff = out;
    diff.zip_mut_with(&target, |o, &t| *o -= t);
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
    let out_bar = diff.mapv(|v| 2.0 * v / n);
    let mut grad = vec![0.0; model.param_len()];
    model.backward(&tape, &out_bar, &mut grad)?;
    Ok((loss, grad))
}

/// Mean one-step MSE of `model` over `pairs`.
pub fn one_step_mse(model: &SgnoModel, set: &TrajectorySet, pairs: &[PairIndex]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(SgnoError::Config("no pairs to evaluate".into()));
    }
    let losses: Result<Vec<f64>> = pairs
        .par_iter()
        .map(|pair| {
            let u = set.state(pair.trajectory, pair.frame);
            let target = set.state(pair.trajectory, pair.frame + 1);
            let out = model.one_step(&u)?;
            let n = out.len() as f64;
            Ok(out
                .iter()
                .zip(target.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n)
        })
        .collect();
    let losses = losses?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains `model` in place. `log_csv`, when given, receives one
/// `step,loss,lr,grad_norm,max_re_lambda` row per recorded step.
pub fn train(
    model: &mut SgnoModel,
    set: &TrajectorySet,
    config: &TrainConfig,
    log_csv: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let split = make_pairs(set);
    if split.train.is_empty() {
        return Err(SgnoError::Config(
            "the trajectory set yields no training pairs".into(),
        ));
    }
    let state_shape: Vec<usize> = {
        let mut s = vec![model.config().state_channels];
        s.extend_from_slice(model.config().grid.sizes());
        s
    };
    if set.state_shape() != state_shape {
        return Err(SgnoError::shape(
            "training data state",
            &state_shape,
            &set.state_shape(),
        ));
    }

    let mut writer = match log_csv {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
            writeln!(w, "step,loss,lr,grad_norm,max_re_lambda")?;
            Some(w)
        }
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let batch = config.batch_size.min(split.train.len());

    let mut adam = Adam::new(model.param_len());
    let mut records = Vec::new();
    let mut last_loss = f64::NAN;

    for step in 1..=config.total_steps {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let pairs: Vec<PairIndex> = order[cursor..cursor + batch]
            .iter()
            .map(|&i| split.train[i])
            .collect();
        cursor += batch;

        let lr = lr_schedule(config, step as f64);
        let results: Vec<Result<(f64, Vec<f64>)>> = pairs
            .par_iter()
            .map(|&pair| sample_loss_and_grad(model, set, pair))
            .collect();

        let mut loss_sum = 0.0;
        let mut grad = vec![0.0; model.param_len()];
        for (batch_index, res) in results.into_iter().enumerate() {
            let (loss, g) = match res {
                Ok(v) => v,
                Err(SgnoError::Numeric { .. }) => {
                    return Err(SgnoError::TrainDiverged {
                        step,
                        lr,
                        grad_norm: f64::NAN,
                        batch_index,
                    })
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(SgnoError::TrainDiverged {
                    step,
                    lr,
                    grad_norm: f64::NAN,
                    batch_index,
                });
            }
            loss_sum += loss;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let loss = loss_sum / batch as f64;
        let inv = 1.0 / batch as f64;
        for g in grad.iter_mut() {
            *g *= inv;
        }
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(SgnoError::TrainDiverged {
                step,
                lr,
                grad_norm,
                batch_index: 0,
            });
        }

        adam.step(
            model.params_mut().data_mut(),
            &grad,
            lr,
            config.weight_decay,
        );
        model.step += 1;
        last_loss = loss;

        let max_re = model.max_re_lambda();
        debug_assert!(max_re <= 0.0, "generator left the stable half-plane");
        if step == 1 || step == config.total_steps || step % config.log_every == 0 {
            let record = TrainRecord {
                step,
                loss,
                lr,
                grad_norm,
                max_re_lambda: max_re,
            };
            if let Some(w) = writer.as_mut() {
                writeln!(
                    w,
                    "{},{:.12e},{:.12e},{:.12e},{:.12e}",
                    record.step, record.loss, record.lr, record.grad_norm, record.max_re_lambda
                )?;
            }
            records.push(record);
        }
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }

    let validation_loss = if split.validation.is_empty() {
        None
    } else {
        Some(one_step_mse(model, set, &split.validation)?)
    };
    let final_loss = if config.total_steps == 0 {
        one_step_mse(model, set, &split.train)?
    } else {
        last_loss
    };
    Ok(TrainOutcome {
        records,
        final_loss,
        validation_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SgnoConfig;
    use crate::solver::{generate_trajectories, Scenario};
    use crate::spectral::GridSpec;

    fn tiny_model(dt: f64) -> SgnoModel {
        let grid = GridSpec::new(vec![64]).unwrap();
        let mut config = SgnoConfig::preset(grid, 1);
        config.width = 8;
        config.modes_per_axis = vec![8];
        config.dt_data = dt;
        SgnoModel::new(config, 42).unwrap()
    }

    fn tiny_data() -> TrajectorySet {
        let mut scenario = Scenario::named("diffusion1d").unwrap();
        scenario.num_train = 4;
        scenario.train_frames = 11;
        generate_trajectories(&scenario, 4, 11, 5).unwrap()
    }

    fn tiny_config(steps: usize) -> TrainConfig {
        TrainConfig {
            total_steps: steps,
            warmup_steps: steps / 5,
            log_every: 10,
            ..TrainConfig::full_scale()
        }
    }

    #[test]
    fn schedule_hits_the_anchor_points() {
        let config = TrainConfig::full_scale();
        assert_eq!(lr_schedule(&config, 0.0), 0.0);
        let base = config.base_lr;
        assert!((lr_schedule(&config, 2_000.0) - base).abs() < 1e-15);
        assert!((lr_schedule(&config, 6_000.0) - base / 2.0).abs() < 1e-15);
        assert!(lr_schedule(&config, 10_000.0).abs() < 1e-15);
        assert!((lr_schedule(&config, 1_000.0) - base / 2.0).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_the_learning_rate() {
        let mut adam = Adam::new(1);
        let mut p = vec![0.0];
        adam.step(&mut p, &[0.3], 0.01, 0.0);
        assert!((p[0] + 0.01).abs() < 1e-6, "{}", p[0]);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut adam = Adam::new(1);
        let mut p = vec![1.0];
        for _ in 0..300 {
            let g = p[0];
            adam.step(&mut p, &[g], 0.05, 0.0);
        }
        assert!(p[0].abs() < 1e-2, "{}", p[0]);
    }

    #[test]
    fn pair_split_holds_out_the_last_two_trajectories() {
        let set = tiny_data();
        let split = make_pairs(&set);
        assert_eq!(split.train.len(), 2 * 10);
        assert_eq!(split.validation.len(), 2 * 10);
        assert!(split.train.iter().all(|p| p.trajectory < 2));
        assert!(split.validation.iter().all(|p| p.trajectory >= 2));

        let mut small = set.clone();
        small.data = set
            .data
            .slice(ndarray::s![0..2, .., .., ..])
            .to_owned()
            .into_dyn();
        let split = make_pairs(&small);
        assert_eq!(split.train.len(), 2 * 10);
        assert!(split.validation.is_empty());
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let set = tiny_data();
        let mut a = tiny_model(set.dt);
        let mut b = tiny_model(set.dt);
        let config = tiny_config(30);
        train(&mut a, &set, &config, None).unwrap();
        train(&mut b, &set, &config, None).unwrap();
        let bits =
            |m: &SgnoModel| -> Vec<u64> { m.params().data().iter().map(|v| v.to_bits()).collect() };
        assert_eq!(bits(&a), bits(&b));

        let mut c = tiny_model(set.dt);
        let mut other = config.clone();
        other.seed = 9;
        train(&mut c, &set, &other, None).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn training_reduces_the_one_step_loss() {
        let set = tiny_data();
        let mut model = tiny_model(set.dt);
        let config = tiny_config(600);
        let outcome = train(&mut model, &set, &config, None).unwrap();
        let first = outcome.records.first().unwrap().loss;
        let last = outcome.final_loss;
        assert!(
            last < first / 20.0,
            "loss went from {first} to {last} without enough progress"
        );
        assert!(outcome.validation_loss.unwrap() < first);
        assert_eq!(model.step, 600);
    }

    #[test]
    fn csv_log_has_header_and_rows() {
        let set = tiny_data();
        let mut model = tiny_model(set.dt);
        let config = tiny_config(25);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let outcome = train(&mut model, &set, &config, Some(&path)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,loss,lr,grad_norm,max_re_lambda"
        );
        assert_eq!(lines.count(), outcome.records.len());
    }

    #[test]
    fn non_finite_states_report_divergence() {
        let set = tiny_data();
        let mut model = tiny_model(set.dt);
        let seg = model.params().seg("lift.w1").unwrap();
        model.params_mut().slice_mut(seg)[0] = f64::NAN;
        let config = tiny_config(50);
        let err = train(&mut model, &set, &config, None).unwrap_err();
        match err {
            SgnoError::TrainDiverged {
                step, batch_index, ..
            } => {
                assert_eq!(step, 1);
                assert_eq!(batch_index, 0);
            }
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_schedules() {
        let mut config = TrainConfig::full_scale();
        config.warmup_steps = config.total_steps;
        assert!(config.validate().is_err());
        let mut config = TrainConfig::full_scale();
        config.base_lr = 0.0;
        assert!(config.validate().is_err());
        let mut config = TrainConfig::full_scale();
        config.min_lr = 1.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn zero_step_run_leaves_the_model_untouched() {
        let set = tiny_data();
        let mut model = tiny_model(set.dt);
        let before = model.params().data().to_vec();
        let mut config = tiny_config(600);
        config.total_steps = 0;
        config.warmup_steps = 0;
        let outcome = train(&mut model, &set, &config, None).unwrap();
        assert_eq!(model.params().data(), &before[..]);
        assert!(outcome.records.is_empty());
        assert!(outcome.final_loss.is_finite());

        config.warmup_steps = 5;
        assert!(config.validate().is_err());
    }
}
