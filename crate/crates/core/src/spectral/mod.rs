//! Grid and spectrum bookkeeping: Parseval-normalized real transforms on the
//! unit torus, rectangular mode truncation, and smooth spectral masks.
//!
//! Real fields are stored as `[channels, space...]` arrays of `f64`. Spectra
//! keep the nonredundant half of the last axis: for grid sizes
//! `n_1 x ... x n_d` the spectral shape is `n_1 x ... x n_{d-1} x (n_d/2+1)`.
//! Entries whose conjugate partner was dropped carry Parseval weight 2; the
//! zero-frequency and (even-size) Nyquist planes of the last axis carry
//! weight 1.

mod fft;
pub mod phi;

pub use phi::{expm1c, phi1, phi1_prime, phi2, phi3, stable_phi_coefficients, PhiCoeffs};

use crate::error::{Result, SgnoError};
use fft::{transform_axis, AxisPlans};
use ndarray::{ArrayD, Axis, IxDyn, Slice};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Uniform periodic grid on the unit torus `[0,1)^d`, `d <= 3`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    sizes: Vec<usize>,
}

impl GridSpec {
    /// Validates axis count (1 to 3) and a minimum of 8 points per axis.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.len() > 3 {
            return Err(SgnoError::Config(format!(
                "grid must have 1 to 3 axes, got {}",
                sizes.len()
            )));
        }
        if let Some(&n) = sizes.iter().find(|&&n| n < 8) {
            return Err(SgnoError::Config(format!(
                "grid sizes must be at least 8 points, got {n}"
            )));
        }
        Ok(GridSpec { sizes })
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_points(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Coordinates of sample points along one axis, `i / n`.
    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let n = self.sizes[axis];
        (0..n).map(|i| i as f64 / n as f64).collect()
    }
}

/// Half-spectrum bookkeeping for one grid: shapes, signed wavenumbers,
/// Parseval weights, and the retained (rectangularly truncated) mode set.
#[derive(Clone)]
pub struct SpectrumLayout {
    grid: GridSpec,
    modes_per_axis: Vec<usize>,
    spec_shape: Vec<usize>,
    spec_len: usize,
    weights: Vec<f64>,
    kvecs: Vec<[i64; 3]>,
    retained: Vec<usize>,
    retained_mask: Vec<bool>,
    plans: AxisPlans,
}

impl std::fmt::Debug for SpectrumLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumLayout")
            .field("grid", &self.grid)
            .field("modes_per_axis", &self.modes_per_axis)
            .field("spec_shape", &self.spec_shape)
            .field("num_retained", &self.retained.len())
            .finish()
    }
}

impl SpectrumLayout {
    /// Builds the layout for `grid` keeping modes with `|k_j| < modes_per_axis[j]`
    /// on every axis. Each cutoff must satisfy `1 <= m_j <= n_j/2`.
    pub fn new(grid: GridSpec, modes_per_axis: Vec<usize>) -> Result<Self> {
        if modes_per_axis.len() != grid.dim() {
            return Err(SgnoError::Config(format!(
                "modes_per_axis has {} entries for a {}-d grid",
                modes_per_axis.len(),
                grid.dim()
            )));
        }
        for (j, (&m, &n)) in modes_per_axis.iter().zip(grid.sizes()).enumerate() {
            if m < 1 || m > n / 2 {
                return Err(SgnoError::Config(format!(
                    "axis {j}: mode cutoff {m} outside 1..={}",
                    n / 2
                )));
            }
        }

        let d = grid.dim();
        let mut spec_shape: Vec<usize> = grid.sizes().to_vec();
        spec_shape[d - 1] = grid.sizes()[d - 1] / 2 + 1;
        let spec_len: usize = spec_shape.iter().product();

        let mut weights = Vec::with_capacity(spec_len);
        let mut kvecs = Vec::with_capacity(spec_len);
        let mut retained = Vec::new();
        let mut retained_mask = vec![false; spec_len];
        let last_n = grid.sizes()[d - 1];
        let mut idx = vec![0usize; d];
        for flat in 0..spec_len {
            let mut k = [0i64; 3];
            for j in 0..d {
                let n = grid.sizes()[j];
                k[j] = if j == d - 1 {
                    idx[j] as i64
                } else if idx[j] <= n / 2 {
                    idx[j] as i64
                } else {
                    idx[j] as i64 - n as i64
                };
            }
            let last_idx = idx[d - 1];
            let self_conjugate = last_idx == 0 || (last_n % 2 == 0 && last_idx == last_n / 2);
            weights.push(if self_conjugate { 1.0 } else { 2.0 });
            let keep = (0..d).all(|j| k[j].unsigned_abs() < modes_per_axis[j] as u64);
            if keep {
                retained.push(flat);
                retained_mask[flat] = true;
            }
            kvecs.push(k);

            // advance the multi-index in C order
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < spec_shape[j] {
                    break;
                }
                idx[j] = 0;
            }
        }

        let plans = AxisPlans::new(grid.sizes());
        Ok(SpectrumLayout {
            grid,
            modes_per_axis,
            spec_shape,
            spec_len,
            weights,
            kvecs,
            retained,
            retained_mask,
            plans,
        })
    }

    /// Layout that retains every representable mode (`m_j = n_j/2`).
    pub fn full(grid: GridSpec) -> Result<Self> {
        let modes = grid.sizes().iter().map(|&n| n / 2).collect();
        SpectrumLayout::new(grid, modes)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn modes_per_axis(&self) -> &[usize] {
        &self.modes_per_axis
    }

    /// Spatial shape of stored spectra (last axis halved).
    pub fn spec_shape(&self) -> &[usize] {
        &self.spec_shape
    }

    /// Number of stored spectral entries per channel.
    pub fn num_stored(&self) -> usize {
        self.spec_len
    }

    /// Flat indices (into the stored spectrum) of retained modes, sorted.
    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn num_retained(&self) -> usize {
        self.retained.len()
    }

    pub fn is_retained(&self, flat: usize) -> bool {
        self.retained_mask[flat]
    }

    /// Parseval weight (1 or 2) per stored spectral entry.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Signed wavenumbers per stored spectral entry; unused trailing axes are 0.
    pub fn kvecs(&self) -> &[[i64; 3]] {
        &self.kvecs
    }

    /// Largest retained `|k|` across axes (`max_j (m_j - 1)`).
    pub fn k_max_inf(&self) -> i64 {
        self.modes_per_axis
            .iter()
            .map(|&m| m as i64 - 1)
            .max()
            .unwrap_or(0)
    }

    fn check_field_shape(&self, shape: &[usize], context: &str) -> Result<usize> {
        let d = self.grid.dim();
        if shape.len() != d + 1 || shape[1..] != *self.grid.sizes() {
            let mut expected = vec![0];
            expected.extend_from_slice(self.grid.sizes());
            return Err(SgnoError::shape(context, &expected, shape));
        }
        Ok(shape[0])
    }

    fn check_spec_shape(&self, shape: &[usize], context: &str) -> Result<usize> {
        let d = self.grid.dim();
        if shape.len() != d + 1 || shape[1..] != *self.spec_shape.as_slice() {
            let mut expected = vec![0];
            expected.extend_from_slice(&self.spec_shape);
            return Err(SgnoError::shape(context, &expected, shape));
        }
        Ok(shape[0])
    }

    /// Unitary real-to-half-spectrum transform of a `[C, space...]` field.
    ///
    /// With the `1/sqrt(N)` scaling used here the weighted spectral energy
    /// `sum_k w_k |u_hat(k)|^2` equals the squared Euclidean norm of the field.
    pub fn forward(&self, field: &ArrayD<f64>) -> Result<ArrayD<Complex64>> {
        self.check_field_shape(field.shape(), "forward transform input")?;
        let d = self.grid.dim();
        let mut full = field.mapv(|x| Complex64::new(x, 0.0));
        // transform the last axis first so the remaining axes work on the
        // sliced (half-width) array
        transform_axis(&mut full, d, self.plans.forward(d - 1));
        let half_len = self.spec_shape[d - 1];
        let mut half = full
            .slice_axis(Axis(d), Slice::from(0..half_len))
            .to_owned();
        for j in 0..d - 1 {
            transform_axis(&mut half, j + 1, self.plans.forward(j));
        }
        let scale = 1.0 / (self.grid.num_points() as f64).sqrt();
        half.mapv_inplace(|z| z * scale);
        Ok(half)
    }

    /// Inverse of [`SpectrumLayout::forward`]; drops the imaginary residue.
    pub fn inverse(&self, spec: &ArrayD<Complex64>) -> Result<ArrayD<f64>> {
        Ok(self.inverse_with_residual(spec)?.0)
    }

    /// Inverse transform returning `(field, r)` where `r` is the L2 norm of
    /// the discarded imaginary part over the L2 norm of the field.
    ///
    /// The stored half-spectrum is extended by conjugate mirroring before the
    /// inverse transform, so `r` is at round-off level unless the spectrum is
    /// inconsistent on its self-conjugate planes.
    pub fn inverse_with_residual(&self, spec: &ArrayD<Complex64>) -> Result<(ArrayD<f64>, f64)> {
        let channels = self.check_spec_shape(spec.shape(), "inverse transform input")?;
        let d = self.grid.dim();
        let mut full_shape = vec![channels];
        full_shape.extend_from_slice(self.grid.sizes());
        let mut full = ArrayD::<Complex64>::zeros(IxDyn(&full_shape));

        let half_len = self.spec_shape[d - 1];
        full.slice_axis_mut(Axis(d), Slice::from(0..half_len))
            .assign(spec);

        // mirrored part: full[c, i_1..i_{d-1}, j] = conj(spec[c, -i_1.., n-j])
        let last_n = self.grid.sizes()[d - 1];
        if last_n > half_len {
            let sizes = self.grid.sizes().to_vec();
            let mut src_idx = vec![0usize; d + 1];
            for (idx, &value) in spec.indexed_iter() {
                let j = idx[d];
                if j == 0 || (last_n % 2 == 0 && j == last_n / 2) {
                    continue;
                }
                src_idx[0] = idx[0];
                for j_axis in 1..d {
                    let n = sizes[j_axis - 1];
                    src_idx[j_axis] = (n - idx[j_axis]) % n;
                }
                src_idx[d] = last_n - j;
                full[IxDyn(&src_idx)] = value.conj();
            }
        }

        for j in 0..d {
            transform_axis(&mut full, j + 1, self.plans.inverse(j));
        }
        let scale = 1.0 / (self.grid.num_points() as f64).sqrt();
        let mut real_sq = 0.0;
        let mut imag_sq = 0.0;
        let out = full.mapv(|z| {
            let re = z.re * scale;
            let im = z.im * scale;
            real_sq += re * re;
            imag_sq += im * im;
            re
        });
        let residual = imag_sq.sqrt() / real_sq.sqrt().max(f64::MIN_POSITIVE);
        Ok((out, residual))
    }

    /// Zeroes every coefficient outside the retained mode set.
    pub fn truncate(&self, spec: &ArrayD<Complex64>) -> Result<ArrayD<Complex64>> {
        let channels = self.check_spec_shape(spec.shape(), "truncation input")?;
        let mut out = spec.to_owned();
        let flat = out
            .as_slice_mut()
            .expect("owned spectra are standard layout");
        for c in 0..channels {
            let base = c * self.spec_len;
            for (i, &keep) in self.retained_mask.iter().enumerate() {
                if !keep {
                    flat[base + i] = Complex64::new(0.0, 0.0);
                }
            }
        }
        Ok(out)
    }

    /// Weighted spectral energy `sum_k w_k |spec(k)|^2` summed over channels.
    pub fn spectral_energy(&self, spec: &ArrayD<Complex64>) -> Result<f64> {
        let channels = self.check_spec_shape(spec.shape(), "spectral energy input")?;
        let flat = spec
            .as_slice()
            .ok_or_else(|| SgnoError::numeric("spectral energy requires standard-layout input"))?;
        let mut total = 0.0;
        for c in 0..channels {
            let base = c * self.spec_len;
            for (i, &w) in self.weights.iter().enumerate() {
                total += w * flat[base + i].norm_sqr();
            }
        }
        Ok(total)
    }
}

/// Spectral low-pass filter applied to the forcing path of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    None,
    Smooth,
}

/// Filter shape `F(k) = exp(-strength * (|k|_inf / |k_max|_inf)^order)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub strength: f64,
    pub order: f64,
}

impl FilterSpec {
    pub fn none() -> Self {
        FilterSpec {
            kind: FilterKind::None,
            strength: 1.0,
            order: 8.0,
        }
    }

    pub fn smooth(strength: f64, order: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Smooth,
            strength,
            order,
        }
    }
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec::none()
    }
}

/// Mask weights over the retained modes of `layout`, aligned with
/// `layout.retained()`.
///
/// `F(0) = 1` and `F` decays to `exp(-strength)` at the largest retained
/// `|k|_inf`. A `kind` of `none` gives all ones.
pub fn smooth_mask(layout: &SpectrumLayout, filter: &FilterSpec) -> Vec<f64> {
    let n = layout.num_retained();
    match filter.kind {
        FilterKind::None => vec![1.0; n],
        FilterKind::Smooth => {
            let k_max = layout.k_max_inf() as f64;
            if k_max == 0.0 {
                return vec![1.0; n];
            }
            layout
                .retained()
                .iter()
                .map(|&flat| {
                    let k = layout.kvecs()[flat];
                    let k_inf = k.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as f64;
                    (-filter.strength * (k_inf / k_max).powf(filter.order)).exp()
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Dimension, IxDyn};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field_from_fn(channels: usize, sizes: &[usize], f: impl Fn(&[usize]) -> f64) -> ArrayD<f64> {
        let mut shape = vec![channels];
        shape.extend_from_slice(sizes);
        ArrayD::from_shape_fn(IxDyn(&shape), |idx| f(&idx.slice()[1..]))
    }

    fn random_field(channels: usize, sizes: &[usize], seed: u64) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = vec![channels];
        shape.extend_from_slice(sizes);
        ArrayD::from_shape_fn(IxDyn(&shape), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn constant_field_concentrates_at_zero_mode() {
        let grid = GridSpec::new(vec![16]).unwrap();
        let layout = SpectrumLayout::full(grid).unwrap();
        let c = 0.73;
        let field = field_from_fn(1, &[16], |_| c);
        let spec = layout.forward(&field).unwrap();
        let zero = spec[IxDyn(&[0, 0])];
        assert!(
            (zero.norm_sqr() - 16.0 * c * c).abs() < 1e-12,
            "|u_hat(0)|^2 = {}, expected {}",
            zero.norm_sqr(),
            16.0 * c * c
        );
        for i in 1..layout.num_stored() {
            assert!(spec[IxDyn(&[0, i])].norm() < 1e-12, "leakage at mode {i}");
        }
    }

    #[test]
    fn single_cosine_energy_sits_in_the_doubled_mode() {
        let n = 64;
        let grid = GridSpec::new(vec![n]).unwrap();
        let layout = SpectrumLayout::full(grid).unwrap();
        let field = field_from_fn(1, &[n], |idx| {
            (2.0 * std::f64::consts::PI * idx[0] as f64 / n as f64).cos()
        });
        let spec = layout.forward(&field).unwrap();
        let physical: f64 = field.iter().map(|x| x * x).sum();
        let k1 = spec[IxDyn(&[0, 1])];
        assert_eq!(layout.weights()[1], 2.0);
        assert!(
            (2.0 * k1.norm_sqr() - physical).abs() < 1e-10,
            "2|u_hat(1)|^2 = {}, field energy = {physical}",
            2.0 * k1.norm_sqr()
        );
        let energy = layout.spectral_energy(&spec).unwrap();
        assert!((energy - physical).abs() < 1e-10);
    }

    #[test]
    fn roundtrip_and_parseval_in_all_dimensions() {
        for (sizes, seed) in [
            (vec![64usize], 1u64),
            (vec![16, 12], 2),
            (vec![8, 10, 8], 3),
        ] {
            let grid = GridSpec::new(sizes.clone()).unwrap();
            let layout = SpectrumLayout::full(grid).unwrap();
            let field = random_field(2, &sizes, seed);
            let spec = layout.forward(&field).unwrap();
            let (back, residual) = layout.inverse_with_residual(&spec).unwrap();
            let err: f64 = field
                .iter()
                .zip(back.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = field.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(
                err / norm < 1e-12,
                "roundtrip error {} for {sizes:?}",
                err / norm
            );
            assert!(
                residual < 1e-12,
                "imaginary residue {residual} for {sizes:?}"
            );

            let energy = layout.spectral_energy(&spec).unwrap();
            assert!(
                (energy - norm * norm).abs() / (norm * norm) < 1e-12,
                "Parseval mismatch: spectral {energy}, physical {}",
                norm * norm
            );
        }
    }

    #[test]
    fn truncation_zeroes_outside_and_preserves_inside() {
        let grid = GridSpec::new(vec![32]).unwrap();
        let layout = SpectrumLayout::new(grid, vec![8]).unwrap();
        let field = random_field(1, &[32], 9);
        let spec = layout.forward(&field).unwrap();
        let cut = layout.truncate(&spec).unwrap();
        for i in 0..layout.num_stored() {
            let k = layout.kvecs()[i][0].unsigned_abs();
            if k < 8 {
                assert_eq!(cut[IxDyn(&[0, i])], spec[IxDyn(&[0, i])]);
            } else {
                assert_eq!(cut[IxDyn(&[0, i])], Complex64::new(0.0, 0.0));
            }
        }
        let e_cut = layout.spectral_energy(&cut).unwrap();
        let e_all = layout.spectral_energy(&spec).unwrap();
        assert!(e_cut <= e_all * (1.0 + 1e-15));
    }

    #[test]
    fn truncation_is_identity_for_band_limited_input() {
        let n = 32;
        let grid = GridSpec::new(vec![n]).unwrap();
        let layout = SpectrumLayout::new(grid, vec![8]).unwrap();
        let field = field_from_fn(1, &[n], |idx| {
            let x = idx[0] as f64 / n as f64;
            (2.0 * std::f64::consts::PI * 3.0 * x).sin()
                + 0.5 * (2.0 * std::f64::consts::PI * 7.0 * x).cos()
        });
        let spec = layout.forward(&field).unwrap();
        let cut = layout.truncate(&spec).unwrap();
        let back = layout.inverse(&cut).unwrap();
        let err: f64 = field
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(
            err < 1e-12,
            "band-limited field changed by truncation: {err}"
        );
    }

    #[test]
    fn mask_values_at_center_midpoint_and_edge() {
        let grid = GridSpec::new(vec![64]).unwrap();
        // cutoff 17 puts k = 8 exactly at half the maximum retained |k| = 16
        let layout = SpectrumLayout::new(grid, vec![17]).unwrap();
        let mask = smooth_mask(&layout, &FilterSpec::smooth(1.0, 8.0));
        let retained = layout.retained();
        let pos = |k: i64| {
            retained
                .iter()
                .position(|&f| layout.kvecs()[f][0] == k)
                .unwrap()
        };
        assert_eq!(mask[pos(0)], 1.0, "F(0) must be exactly 1");
        let edge = mask[pos(16)];
        assert!(
            (edge - (-1.0f64).exp()).abs() < 1e-15,
            "F(k_max) = {edge}, expected e^-1"
        );
        let mid = mask[pos(8)];
        let expected = (-(0.5f64).powf(8.0)).exp();
        assert!(
            (mid - expected).abs() < 1e-12,
            "F at half range = {mid}, expected {expected}"
        );
        assert!((expected - 0.996101).abs() < 5e-7);
    }

    #[test]
    fn disabled_filter_yields_unit_mask() {
        let grid = GridSpec::new(vec![32, 32]).unwrap();
        let layout = SpectrumLayout::new(grid, vec![8, 8]).unwrap();
        let mask = smooth_mask(&layout, &FilterSpec::none());
        assert_eq!(mask.len(), layout.num_retained());
        assert!(mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn shape_errors_are_reported() {
        let grid = GridSpec::new(vec![16]).unwrap();
        let layout = SpectrumLayout::full(grid).unwrap();
        let bad = ArrayD::<f64>::zeros(IxDyn(&[1, 17]));
        assert!(matches!(
            layout.forward(&bad),
            Err(SgnoError::ShapeMismatch { .. })
        ));
        let bad_spec = ArrayD::<Complex64>::zeros(IxDyn(&[1, 5]));
        assert!(layout.inverse(&bad_spec).is_err());
    }

    #[test]
    fn rejects_invalid_grids_and_cutoffs() {
        assert!(GridSpec::new(vec![]).is_err());
        assert!(GridSpec::new(vec![4]).is_err());
        assert!(GridSpec::new(vec![8, 8, 8, 8]).is_err());
        let grid = GridSpec::new(vec![16]).unwrap();
        assert!(SpectrumLayout::new(grid.clone(), vec![9]).is_err());
        assert!(SpectrumLayout::new(grid.clone(), vec![0]).is_err());
        assert!(SpectrumLayout::new(grid, vec![4, 4]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prop_roundtrip_2d(seed in 0u64..1_000) {
            let grid = GridSpec::new(vec![12, 16]).unwrap();
            let layout = SpectrumLayout::full(grid).unwrap();
            let field = random_field(1, &[12, 16], seed);
            let back = layout.inverse(&layout.forward(&field).unwrap()).unwrap();
            let err: f64 = field.iter().zip(back.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-12);
        }

        #[test]
        fn prop_truncation_never_increases_energy(seed in 0u64..1_000, m in 1usize..8) {
            let grid = GridSpec::new(vec![32]).unwrap();
            let layout = SpectrumLayout::new(grid, vec![m]).unwrap();
            let field = random_field(1, &[32], seed);
            let spec = layout.forward(&field).unwrap();
            let cut = layout.truncate(&spec).unwrap();
            let e_cut = layout.spectral_energy(&cut).unwrap();
            let e_all = layout.spectral_energy(&spec).unwrap();
            prop_assert!(e_cut <= e_all * (1.0 + 1e-12));
        }
    }
}
