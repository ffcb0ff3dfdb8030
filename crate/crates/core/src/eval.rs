//! Rollout evaluation: error metrics, stability horizons, and aggregation
//! across trajectories and seeds.
//!
//! A rollout starts from the first frame of a reference trajectory and
//! repeatedly applies a one-step map, scoring each predicted frame with the
//! normalized root-mean-square error. Predictions that stop being finite are
//! frozen at the last valid state and the failure step is recorded, so every
//! metric stays well defined.

use crate::data::TrajectorySet;
use crate::error::{Result, SgnoError};
use crate::model::SgnoModel;
use crate::solver::{Scenario, SolverKernel};
use crate::spectral::{GridSpec, SpectrumLayout};
use ndarray::{ArrayD, Axis, IxDyn, Slice};
use num_complex::Complex64;
use std::collections::HashMap;

/// Anything that maps a state `[C, space...]` to the state one frame later.
pub trait OneStepModel: Sync {
    fn advance(&self, u: &ArrayD<f64>) -> Result<ArrayD<f64>>;
}

impl OneStepModel for SgnoModel {
    fn advance(&self, u: &ArrayD<f64>) -> Result<ArrayD<f64>> {
        self.one_step(u)
    }
}

/// Predicts that nothing changes. The reference floor for every scenario.
pub struct PersistenceBaseline;

impl OneStepModel for PersistenceBaseline {
    fn advance(&self, u: &ArrayD<f64>) -> Result<ArrayD<f64>> {
        Ok(u.clone())
    }
}

/// The reference integrator exposed as a one-step map at data resolution.
pub struct SolverStepper {
    kernel: SolverKernel,
}

impl SolverStepper {
    pub fn new(scenario: &Scenario) -> Result<SolverStepper> {
        Ok(SolverStepper {
            kernel: SolverKernel::new(scenario)?,
        })
    }
}

impl OneStepModel for SolverStepper {
    fn advance(&self, u: &ArrayD<f64>) -> Result<ArrayD<f64>> {
        let mut spec = self.kernel.initial_spectrum(u)?;
        self.kernel.step_frame(&mut spec)?;
        self.kernel.to_field(&spec)
    }
}

/// Applies the inner map several times per frame; pairs with
/// [`stride_frames`] for coarse-in-time evaluation.
pub struct Strided<'a> {
    pub inner: &'a dyn OneStepModel,
    pub steps: usize,
}

impl OneStepModel for Strided<'_> {
    fn advance(&self, u: &ArrayD<f64>) -> Result<ArrayD<f64>> {
        let mut state = u.clone();
        for _ in 0..self.steps.max(1) {
            state = self.inner.advance(&state)?;
        }
        Ok(state)
    }
}

/// Keeps every `stride`-th frame and scales the frame spacing accordingly.
pub fn stride_frames(set: &TrajectorySet, stride: usize) -> TrajectorySet {
    let stride = stride.max(1);
    TrajectorySet {
        dt: set.dt * stride as f64,
        base_seed: set.base_seed,
        data: set
            .data
            .slice_axis(Axis(1), Slice::new(0, None, stride as isize))
            .to_owned(),
    }
}

/// `|pred - truth|_2 / (|truth|_2 + 1e-12)`.
pub fn nrmse(pred: &ArrayD<f64>, truth: &ArrayD<f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in pred.iter().zip(truth.iter()) {
        num += (p - t) * (p - t);
        den += t * t;
    }
    num.sqrt() / (den.sqrt() + 1e-12)
}

/// One trajectory's rollout scores.
#[derive(Debug, Clone)]
pub struct RolloutResult {
    /// nRMSE at horizon steps `1..=len`.
    pub nrmse: Vec<f64>,
    /// First horizon step whose prediction had to be frozen, if any.
    pub invalid_from: Option<usize>,
}

/// Rolls `model` from frame 0 of the given trajectory and scores every later
/// frame up to `horizon` steps (capped by the trajectory length).
pub fn rollout(
    model: &dyn OneStepModel,
    truth: &TrajectorySet,
    trajectory: usize,
    horizon: Option<usize>,
) -> Result<RolloutResult> {
    let frames = truth.num_frames();
    if frames < 2 {
        return Err(SgnoError::Config(
            "rollout needs at least two frames".into(),
        ));
    }
    let steps = horizon.unwrap_or(frames - 1).min(frames - 1);
    let mut state = truth.state(trajectory, 0);
    let mut scores = Vec::with_capacity(steps);
    let mut invalid_from = None;

    for step in 1..=steps {
        if invalid_from.is_none() {
            match model.advance(&state) {
                Ok(next) if next.iter().all(|v| v.is_finite()) => state = next,
                Ok(_) | Err(SgnoError::Numeric { .. }) => invalid_from = Some(step),
                Err(e) => return Err(e),
            }
        }
        let target = truth.state(trajectory, step);
        scores.push(nrmse(&state, &target));
    }
    Ok(RolloutResult {
        nrmse: scores,
        invalid_from,
    })
}

/// Steps survived before the error first exceeds `tau` (or the prediction
/// stops being finite). A trajectory that never crosses scores the full
/// evaluated horizon.
pub fn stable_steps(nrmse: &[f64], invalid_from: Option<usize>, tau: f64) -> usize {
    let mut count = 0;
    for (h, &e) in nrmse.iter().enumerate() {
        let step = h + 1;
        if invalid_from.is_some_and(|s| step >= s) {
            break;
        }
        if !e.is_finite() || e > tau {
            break;
        }
        count = step;
    }
    count
}

/// Geometric mean; zero propagates as zero, empty input is an error.
pub fn geometric_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(SgnoError::Config("geometric mean of nothing".into()));
    }
    if values.iter().any(|&v| v < 0.0) {
        return Err(SgnoError::numeric("geometric mean of negative values"));
    }
    if values.iter().any(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let log_mean = values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64;
    Ok(log_mean.exp())
}

/// Geometric mean of the first `h` entries (or all, when shorter).
pub fn gmean_horizon(nrmse: &[f64], h: usize) -> Result<f64> {
    let take = h.min(nrmse.len());
    geometric_mean(&nrmse[..take])
}

/// The two supported reductions of per-trajectory error curves into one
/// horizon score.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GMeanSummary {
    /// Geometric mean over horizon steps of the across-trajectory mean nRMSE.
    pub gmean_of_mean: f64,
    /// Median across trajectories of each trajectory's horizon geometric mean.
    pub median_of_gmeans: f64,
}

/// Computes both labeled reductions over the first `h` horizon steps.
pub fn gmean_summary(per_traj: &[Vec<f64>], h: usize) -> Result<GMeanSummary> {
    if per_traj.is_empty() {
        return Err(SgnoError::Config("no trajectories to summarize".into()));
    }
    let steps = per_traj.iter().map(|t| t.len()).min().unwrap_or(0).min(h);
    if steps == 0 {
        return Err(SgnoError::Config("no horizon steps to summarize".into()));
    }
    let mut means = Vec::with_capacity(steps);
    for s in 0..steps {
        let m = per_traj.iter().map(|t| t[s]).sum::<f64>() / per_traj.len() as f64;
        means.push(m);
    }
    let gmean_of_mean = geometric_mean(&means)?;

    let mut per_gmeans = Vec::with_capacity(per_traj.len());
    for t in per_traj {
        per_gmeans.push(geometric_mean(&t[..steps])?);
    }
    let median_of_gmeans = quartiles(&per_gmeans)?.median;
    Ok(GMeanSummary {
        gmean_of_mean,
        median_of_gmeans,
    })
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(SgnoError::Config("quantile of nothing".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] * (1.0 - frac) + sorted[hi] * frac)
}

/// Median with interquartile companions.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Quartiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

pub fn quartiles(values: &[f64]) -> Result<Quartiles> {
    Ok(Quartiles {
        q25: quantile(values, 0.25)?,
        median: quantile(values, 0.5)?,
        q75: quantile(values, 0.75)?,
    })
}

/// Empirical CDF support points: sorted values paired with cumulative
/// fractions `(i+1)/n`.
pub fn cdf_points(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect()
}

/// Whole-test-set evaluation of one model.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub per_traj_nrmse: Vec<Vec<f64>>,
    pub invalid_from: Vec<Option<usize>>,
    pub stable_steps: Vec<usize>,
    pub gmean: GMeanSummary,
}

/// Rolls out every trajectory of `set` and aggregates. `tau` is the
/// stability threshold, `gmean_h` the scoring horizon.
pub fn evaluate(
    model: &dyn OneStepModel,
    set: &TrajectorySet,
    horizon: Option<usize>,
    tau: f64,
    gmean_h: usize,
) -> Result<EvalReport> {
    let mut per_traj_nrmse = Vec::new();
    let mut invalid_from = Vec::new();
    let mut stable = Vec::new();
    for t in 0..set.num_trajectories() {
        let r = rollout(model, set, t, horizon)?;
        stable.push(stable_steps(&r.nrmse, r.invalid_from, tau));
        per_traj_nrmse.push(r.nrmse);
        invalid_from.push(r.invalid_from);
    }
    let gmean = gmean_summary(&per_traj_nrmse, gmean_h)?;
    Ok(EvalReport {
        per_traj_nrmse,
        invalid_from,
        stable_steps: stable,
        gmean,
    })
}

/// Across-seed summary of repeated evaluations of one configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SeedSummary {
    pub seeds: usize,
    /// Median across seeds of the horizon geometric mean.
    pub median_gmean: f64,
    /// Quartiles of stable steps pooled over every seed's trajectories.
    pub stable: Quartiles,
    pub stable_cdf: Vec<(f64, f64)>,
}

/// Reduces per-seed evaluation reports to the across-seed medians and the
/// pooled stable-step distribution.
pub fn aggregate_seeds(reports: &[EvalReport]) -> Result<SeedSummary> {
    if reports.is_empty() {
        return Err(SgnoError::Config("no seed reports to aggregate".into()));
    }
    let gmeans: Vec<f64> = reports.iter().map(|r| r.gmean.gmean_of_mean).collect();
    let pooled: Vec<f64> = reports
        .iter()
        .flat_map(|r| r.stable_steps.iter().map(|&s| s as f64))
        .collect();
    Ok(SeedSummary {
        seeds: reports.len(),
        median_gmean: quantile(&gmeans, 0.5)?,
        stable: quartiles(&pooled)?,
        stable_cdf: cdf_points(&pooled),
    })
}

/// Downsamples every frame of `hi_res` by truncating its spectrum to the
/// grid shrunk `factor`-fold per axis, then evaluates `model` there. Both
/// the rollout's initial frame and the scored truth live on the low grid.
pub fn resolution_shift_eval(
    model: &dyn OneStepModel,
    hi_res: &TrajectorySet,
    factor: usize,
    horizon: Option<usize>,
    tau: f64,
    gmean_h: usize,
) -> Result<EvalReport> {
    if factor == 0 {
        return Err(SgnoError::Config(
            "downsample factor must be positive".into(),
        ));
    }
    if factor == 1 {
        return evaluate(model, hi_res, horizon, tau, gmean_h);
    }
    let shape = hi_res.data.shape().to_vec();
    let space = &shape[3..];
    let new_sizes = space
        .iter()
        .map(|&n| {
            if n % factor == 0 {
                Ok(n / factor)
            } else {
                Err(SgnoError::Config(format!(
                    "grid size {n} is not divisible by the downsample factor {factor}"
                )))
            }
        })
        .collect::<Result<Vec<usize>>>()?;

    let mut down_shape = shape[..3].to_vec();
    down_shape.extend_from_slice(&new_sizes);
    let mut data = ArrayD::<f32>::zeros(IxDyn(&down_shape));
    let frame_len: usize = down_shape[2..].iter().product();
    let flat = data.as_slice_mut().expect("freshly allocated");
    for traj in 0..shape[0] {
        for frame in 0..shape[1] {
            let low = resample(&hi_res.state(traj, frame), &new_sizes)?;
            let dst = &mut flat[(traj * shape[1] + frame) * frame_len..][..frame_len];
            for (d, &v) in dst.iter_mut().zip(low.iter()) {
                *d = v as f32;
            }
        }
    }
    let down = TrajectorySet {
        dt: hi_res.dt,
        base_seed: hi_res.base_seed,
        data,
    };
    evaluate(model, &down, horizon, tau, gmean_h)
}

/// Resamples a periodic field onto a new grid by padding or truncating its
/// spectrum. Shared modes keep their physical amplitude; modes on the target
/// Nyquist planes are zeroed.
pub fn resample(field: &ArrayD<f64>, new_sizes: &[usize]) -> Result<ArrayD<f64>> {
    let channels = field.shape()[0];
    let src_sizes = &field.shape()[1..];
    if src_sizes.len() != new_sizes.len() {
        return Err(SgnoError::Config(format!(
            "resample expects {} axes, got {}",
            src_sizes.len(),
            new_sizes.len()
        )));
    }
    let src_layout = SpectrumLayout::full(GridSpec::new(src_sizes.to_vec())?)?;
    let dst_layout = SpectrumLayout::full(GridSpec::new(new_sizes.to_vec())?)?;
    let src_spec = src_layout.forward(field)?;

    let mut lookup: HashMap<[i64; 3], usize> = HashMap::new();
    for (flat, &k) in src_layout.kvecs().iter().enumerate() {
        lookup.insert(k, flat);
    }

    let mut shape = vec![channels];
    shape.extend_from_slice(dst_layout.spec_shape());
    let mut dst_spec = ArrayD::<Complex64>::zeros(IxDyn(&shape));
    let src_flat = src_spec
        .as_slice()
        .expect("owned spectra are standard layout");
    let dst_flat = dst_spec.as_slice_mut().expect("freshly allocated");

    let amp =
        ((dst_layout.grid().num_points() as f64) / (src_layout.grid().num_points() as f64)).sqrt();
    let d = new_sizes.len();
    let src_s = src_layout.num_stored();
    let dst_s = dst_layout.num_stored();
    for (flat, &k) in dst_layout.kvecs().iter().enumerate() {
        let dst_nyquist = (0..d).any(|j| 2 * k[j].unsigned_abs() as usize == new_sizes[j]);
        if dst_nyquist {
            continue;
        }
        let src_nyquist = (0..d).any(|j| 2 * k[j].unsigned_abs() as usize == src_sizes[j]);
        if src_nyquist {
            continue;
        }
        if let Some(&src) = lookup.get(&k) {
            for c in 0..channels {
                dst_flat[c * dst_s + flat] = src_flat[c * src_s + src] * amp;
            }
        }
    }
    dst_layout.inverse(&dst_spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{generate_trajectories, random_initial_field};
    use std::f64::consts::PI;

    #[test]
    fn nrmse_handles_the_reference_cases() {
        let t = ArrayD::from_shape_fn(IxDyn(&[1, 8]), |idx| 1.0 + idx[1] as f64);
        assert_eq!(nrmse(&t, &t), 0.0);
        let double = t.mapv(|v| 2.0 * v);
        assert!((nrmse(&double, &t) - 1.0).abs() < 1e-12);
        let zero_truth = ArrayD::zeros(IxDyn(&[1, 8]));
        assert!(nrmse(&t, &zero_truth).is_finite());
    }

    #[test]
    fn geometric_mean_reference_values() {
        assert!((geometric_mean(&[4.0, 4.0, 4.0]).unwrap() - 4.0).abs() < 1e-15);
        assert!((geometric_mean(&[2.0, 8.0]).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(geometric_mean(&[0.5, 0.0]).unwrap(), 0.0);
        assert!(geometric_mean(&[]).is_err());
        assert!(geometric_mean(&[-1.0]).is_err());
    }

    #[test]
    fn stable_step_counting() {
        assert_eq!(stable_steps(&[0.05, 0.1, 0.25, 0.15], None, 0.2), 2);
        assert_eq!(stable_steps(&[0.05, f64::NAN, 0.1], None, 0.2), 1);
        assert_eq!(stable_steps(&[0.05, 0.1, 0.15], None, 0.2), 3);
        assert_eq!(stable_steps(&[0.05, 0.1, 0.15], Some(2), 0.2), 1);
        assert_eq!(stable_steps(&[0.5], None, 0.2), 0);
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let q = quartiles(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert!((q.q25 - 1.75).abs() < 1e-15);
        assert!((q.median - 2.5).abs() < 1e-15);
        assert!((q.q75 - 3.25).abs() < 1e-15);
        let q = quartiles(&[3.0, 1.0, 2.0]).unwrap();
        assert!((q.median - 2.0).abs() < 1e-15);
        assert!((q.q25 - 1.5).abs() < 1e-15);
    }

    #[test]
    fn cdf_points_are_sorted_with_cumulative_mass() {
        let pts = cdf_points(&[3.0, 1.0, 2.0, 2.5]);
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0], (1.0, 0.25));
        assert_eq!(pts[3], (3.0, 1.0));
        assert!(pts.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn gmean_summary_reduces_both_ways() {
        let per_traj = vec![vec![0.1, 0.1, 0.1], vec![0.4, 0.4, 0.4]];
        let s = gmean_summary(&per_traj, 3).unwrap();
        assert!((s.gmean_of_mean - 0.25).abs() < 1e-12);
        assert!((s.median_of_gmeans - 0.25).abs() < 1e-12);
    }

    fn diffusion_set(trajs: usize, frames: usize) -> TrajectorySet {
        let scenario = crate::solver::Scenario::named("diffusion1d").unwrap();
        generate_trajectories(&scenario, trajs, frames, 21).unwrap()
    }

    #[test]
    fn solver_stepper_reproduces_its_own_data() {
        let scenario = crate::solver::Scenario::named("diffusion1d").unwrap();
        let set = diffusion_set(2, 10);
        let stepper = SolverStepper::new(&scenario).unwrap();
        let report = evaluate(&stepper, &set, None, 0.2, 100).unwrap();
        for curve in &report.per_traj_nrmse {
            // storage quantizes to f32, so the floor is set by that cast
            assert!(curve.iter().all(|&e| e < 1e-5), "curve {curve:?}");
        }
        assert!(report.invalid_from.iter().all(Option::is_none));
        assert_eq!(report.stable_steps, vec![9, 9]);
    }

    #[test]
    fn persistence_error_grows_on_decaying_flows() {
        let set = diffusion_set(1, 30);
        let r = rollout(&PersistenceBaseline, &set, 0, None).unwrap();
        assert!(r.nrmse.last().unwrap() > r.nrmse.first().unwrap());
        assert!(r.invalid_from.is_none());
    }

    struct Doubler;
    impl OneStepModel for Doubler {
        fn advance(&self, u: &ArrayD<f64>) -> Result<ArrayD<f64>> {
            let out = u.mapv(|v| 2.0 * v);
            if out.iter().map(|v| v * v).sum::<f64>().sqrt() > 50.0 {
                Ok(out.mapv(|_| f64::NAN))
            } else {
                Ok(out)
            }
        }
    }

    #[test]
    fn rollout_freezes_after_non_finite_predictions() {
        let set = diffusion_set(1, 20);
        let r = rollout(&Doubler, &set, 0, None).unwrap();
        let bust = r.invalid_from.expect("doubling must blow past the guard");
        assert!(bust > 1);
        assert!(r.nrmse.iter().all(|e| e.is_finite()));
        // frozen predictions keep scoring against moving truth
        assert_eq!(r.nrmse.len(), 19);
        assert_eq!(stable_steps(&r.nrmse, r.invalid_from, 1e9), bust - 1);
    }

    #[test]
    fn strided_evaluation_matches_repeated_stepping() {
        let scenario = crate::solver::Scenario::named("diffusion1d").unwrap();
        let set = diffusion_set(1, 9);
        let strided_set = stride_frames(&set, 2);
        assert_eq!(strided_set.num_frames(), 5);
        assert!((strided_set.dt - 0.2).abs() < 1e-15);
        let stepper = SolverStepper::new(&scenario).unwrap();
        let doubled = Strided {
            inner: &stepper,
            steps: 2,
        };
        let r = rollout(&doubled, &strided_set, 0, None).unwrap();
        assert!(r.nrmse.iter().all(|&e| e < 1e-5));
    }

    #[test]
    fn resample_round_trips_band_limited_fields() {
        let layout = SpectrumLayout::full(GridSpec::new(vec![32]).unwrap()).unwrap();
        let field = random_initial_field(&layout, 3).unwrap();
        let up = resample(&field, &[64]).unwrap();
        let back = resample(&up, &[32]).unwrap();
        let err = field
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "round trip error {err}");
    }

    #[test]
    fn resample_preserves_pointwise_values_of_smooth_modes() {
        let n = 16;
        let field = ArrayD::from_shape_fn(IxDyn(&[1, n]), |idx| {
            (2.0 * PI * 3.0 * idx[1] as f64 / n as f64).sin()
        });
        let up = resample(&field, &[32]).unwrap();
        for i in 0..n {
            let a = field[[0, i]];
            let b = up[[0, 2 * i]];
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn resample_drops_target_nyquist_content() {
        let n = 32;
        // mode 12 on a 32 grid is above the 16-grid band
        let field = ArrayD::from_shape_fn(IxDyn(&[1, n]), |idx| {
            (2.0 * PI * 12.0 * idx[1] as f64 / n as f64).cos()
        });
        let down = resample(&field, &[16]).unwrap();
        let norm = down.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-12, "aliased energy {norm}");
    }

    #[test]
    fn resolution_shift_at_factor_one_matches_the_base_evaluation() {
        let set = diffusion_set(2, 8);
        let base = evaluate(&PersistenceBaseline, &set, None, 0.2, 100).unwrap();
        let shifted = resolution_shift_eval(&PersistenceBaseline, &set, 1, None, 0.2, 100).unwrap();
        assert_eq!(shifted.per_traj_nrmse, base.per_traj_nrmse);
        assert_eq!(shifted.stable_steps, base.stable_steps);
        assert_eq!(shifted.invalid_from, base.invalid_from);
    }

    #[test]
    fn resolution_shift_commutes_with_a_diagonal_linear_flow() {
        // the diffusion symbol depends only on the integer mode index, so
        // truncating the spectrum and stepping on the coarse grid must agree
        // with stepping on the fine grid and truncating afterwards
        let coarse = crate::solver::Scenario::named("diffusion1d").unwrap();
        let fine = coarse.clone().with_grid_sizes(vec![128]);
        let set = generate_trajectories(&fine, 1, 6, 9).unwrap();
        let stepper = SolverStepper::new(&coarse).unwrap();
        let report = resolution_shift_eval(&stepper, &set, 2, None, 0.2, 100).unwrap();
        for curve in &report.per_traj_nrmse {
            assert!(curve.iter().all(|&e| e < 1e-5), "curve {curve:?}");
        }
    }

    #[test]
    fn downsampling_never_gains_power() {
        let layout = SpectrumLayout::full(GridSpec::new(vec![64]).unwrap()).unwrap();
        for seed in 0..4 {
            let field = random_initial_field(&layout, seed).unwrap();
            let down = resample(&field, &[32]).unwrap();
            let power = |f: &ArrayD<f64>| f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64;
            assert!(power(&down) <= power(&field) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn resolution_shift_rejects_bad_factors() {
        let set = diffusion_set(1, 3);
        assert!(resolution_shift_eval(&PersistenceBaseline, &set, 0, None, 0.2, 100).is_err());
        // 64 is not divisible by 3
        assert!(resolution_shift_eval(&PersistenceBaseline, &set, 3, None, 0.2, 100).is_err());
    }

    fn report_with(gmean: f64, stable: Vec<usize>) -> EvalReport {
        EvalReport {
            per_traj_nrmse: vec![vec![gmean]; stable.len()],
            invalid_from: vec![None; stable.len()],
            stable_steps: stable,
            gmean: GMeanSummary {
                gmean_of_mean: gmean,
                median_of_gmeans: gmean,
            },
        }
    }

    #[test]
    fn seed_aggregation_takes_the_median_and_pools_stability() {
        let reports = [
            report_with(3.0, vec![10, 30]),
            report_with(1.0, vec![20, 40]),
            report_with(2.0, vec![50, 60]),
        ];
        let s = aggregate_seeds(&reports).unwrap();
        assert_eq!(s.seeds, 3);
        assert!((s.median_gmean - 2.0).abs() < 1e-15);
        assert!((s.stable.median - 35.0).abs() < 1e-12);
        let (last_x, last_f) = *s.stable_cdf.last().unwrap();
        assert_eq!(last_x, 60.0);
        assert_eq!(last_f, 1.0);
        assert!(aggregate_seeds(&[]).is_err());
    }

    #[test]
    fn seed_aggregation_of_one_report_reproduces_it() {
        let r = report_with(0.25, vec![7, 9]);
        let s = aggregate_seeds(std::slice::from_ref(&r)).unwrap();
        assert_eq!(s.seeds, 1);
        assert_eq!(s.median_gmean, 0.25);
        assert!((s.stable.median - 8.0).abs() < 1e-15);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn prop_stable_steps_is_nondecreasing_in_tau(
            curve in proptest::collection::vec(0.0f64..2.0, 1..24),
            invalid in proptest::option::of(1usize..24),
            a in 0.0f64..2.0,
            b in 0.0f64..2.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let invalid = invalid.filter(|&i| i <= curve.len());
            proptest::prop_assert!(
                stable_steps(&curve, invalid, lo) <= stable_steps(&curve, invalid, hi)
            );
        }
    }
}
