//! Reference solvers that manufacture training and test trajectories.
//!
//! Every scenario is periodic on the unit box (the Kuramoto-Sivashinsky flow
//! uses a physical domain length folded into its wavenumbers) and is advanced
//! in the full half-spectrum basis. Linear flows step by the exact propagator
//! `exp(dt * lambda(k))`; flows with a quadratic term use a fourth-order
//! exponential Runge-Kutta scheme with several substeps per data frame and
//! two-thirds-rule dealiasing.

use crate::data::{Dataset, ScenarioInfo, TrajectorySet};
use crate::error::{Result, SgnoError};
use crate::spectral::{stable_phi_coefficients, GridSpec, SpectrumLayout};
use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The flow family and its physical coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PdeKind {
    /// `u_t = nu * u_xx`
    Diffusion { nu: f64 },
    /// `u_t = -c * u_xxx`
    Dispersion { c: f64 },
    /// `u_t = -u u_x - delta^2 * u_xxx`
    KortewegDeVries { delta: f64 },
    /// `u_t = -u u_y - u_yy - u_yyyy` on a domain of length `domain`
    KuramotoSivashinsky { domain: f64 },
    /// `u_t = -u u_x + nu * u_xx`
    Burgers { nu: f64 },
    /// `u_t = div(A grad u)` with symmetric `A = [[a00, a01], [a01, a11]]`
    AnisotropicDiffusion { a00: f64, a01: f64, a11: f64 },
    /// `u_t = -c . grad u` in three dimensions
    ConstantAdvection { cx: f64, cy: f64, cz: f64 },
}

impl PdeKind {
    /// The linear symbol `lambda(k)` for integer wavevector `k`.
    pub fn symbol(&self, k: [i64; 3]) -> Complex64 {
        let kx = 2.0 * PI * k[0] as f64;
        match *self {
            PdeKind::Diffusion { nu } => Complex64::new(-nu * kx * kx, 0.0),
            PdeKind::Dispersion { c } => Complex64::new(0.0, c * kx * kx * kx),
            PdeKind::KortewegDeVries { delta } => Complex64::new(0.0, delta * delta * kx * kx * kx),
            PdeKind::KuramotoSivashinsky { domain } => {
                let q = kx / domain;
                let q2 = q * q;
                Complex64::new(q2 - q2 * q2, 0.0)
            }
            PdeKind::Burgers { nu } => Complex64::new(-nu * kx * kx, 0.0),
            PdeKind::AnisotropicDiffusion { a00, a01, a11 } => {
                let ky = 2.0 * PI * k[1] as f64;
                Complex64::new(-(a00 * kx * kx + 2.0 * a01 * kx * ky + a11 * ky * ky), 0.0)
            }
            PdeKind::ConstantAdvection { cx, cy, cz } => {
                let ky = 2.0 * PI * k[1] as f64;
                let kz = 2.0 * PI * k[2] as f64;
                Complex64::new(0.0, -(cx * kx + cy * ky + cz * kz))
            }
        }
    }

    /// Spectral prefactor of the quadratic term: `N(u)^(k) = factor(k) * (u^2)^(k)`
    /// where the term is `-u u_x = -(u^2)_x / 2`. `None` marks a linear flow.
    pub fn quadratic_factor(&self, k: [i64; 3]) -> Option<Complex64> {
        let scale = match *self {
            PdeKind::KortewegDeVries { .. } | PdeKind::Burgers { .. } => 2.0 * PI,
            PdeKind::KuramotoSivashinsky { domain } => 2.0 * PI / domain,
            _ => return None,
        };
        Some(Complex64::new(0.0, -0.5 * scale * k[0] as f64))
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic_factor([1, 0, 0]).is_none()
    }
}

/// A named data-generation setup: flow, grid, frame spacing, and split sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub kind: PdeKind,
    pub grid_sizes: Vec<usize>,
    /// Time between stored frames.
    pub dt_data: f64,
    /// Integrator substeps per frame for flows with a quadratic term.
    pub substeps: usize,
    pub num_train: usize,
    pub train_frames: usize,
    pub num_test: usize,
    pub test_frames: usize,
}

const SCENARIO_NAMES: [&str; 7] = [
    "diffusion1d",
    "dispersion1d",
    "kdv1d",
    "ks1d",
    "anisodiff2d",
    "advection3d",
    "burgers1d",
];

impl Scenario {
    /// Looks up a registered scenario by name.
    pub fn named(name: &str) -> Result<Scenario> {
        let (kind, grid_sizes, dt_data, substeps) = match name {
            "diffusion1d" => (PdeKind::Diffusion { nu: 0.01 }, vec![64], 0.1, 1),
            "dispersion1d" => (PdeKind::Dispersion { c: 1e-4 }, vec![64], 0.1, 1),
            "kdv1d" => (PdeKind::KortewegDeVries { delta: 0.022 }, vec![64], 0.02, 8),
            "ks1d" => (
                PdeKind::KuramotoSivashinsky { domain: 22.0 },
                vec![64],
                0.2,
                8,
            ),
            "anisodiff2d" => (
                PdeKind::AnisotropicDiffusion {
                    a00: 1.0,
                    a01: 0.3,
                    a11: 0.5,
                },
                vec![32, 32],
                0.001,
                1,
            ),
            "advection3d" => (
                PdeKind::ConstantAdvection {
                    cx: 1.0,
                    cy: 0.5,
                    cz: 0.25,
                },
                vec![16, 16, 16],
                0.05,
                1,
            ),
            "burgers1d" => (PdeKind::Burgers { nu: 0.01 }, vec![64], 0.1, 8),
            _ => {
                return Err(SgnoError::Config(format!(
                    "unknown scenario {name}; available: {}",
                    SCENARIO_NAMES.join(", ")
                )))
            }
        };
        Ok(Scenario {
            name: name.to_string(),
            kind,
            grid_sizes,
            dt_data,
            substeps,
            num_train: 10,
            train_frames: 51,
            num_test: 8,
            test_frames: 201,
        })
    }

    pub fn names() -> &'static [&'static str] {
        &SCENARIO_NAMES
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid_sizes.clone())
    }

    /// Same scenario on a different grid (used for resolution studies and
    /// throughput benchmarks).
    pub fn with_grid_sizes(&self, sizes: Vec<usize>) -> Scenario {
        let mut s = self.clone();
        s.grid_sizes = sizes;
        s
    }
}

/// Precomputed per-mode tables for advancing one scenario.
pub struct SolverKernel {
    layout: SpectrumLayout,
    substeps: usize,
    linear: bool,
    /// `exp(dt_data * lambda)`; the whole step for linear flows.
    exact: Vec<Complex64>,
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
    dealias: Vec<bool>,
    quad: Vec<Complex64>,
}

impl SolverKernel {
    pub fn new(scenario: &Scenario) -> Result<SolverKernel> {
        let grid = scenario.grid()?;
        let layout = SpectrumLayout::full(grid)?;
        let s = layout.num_stored();
        let linear = scenario.kind.is_linear();
        if !linear && scenario.substeps == 0 {
            return Err(SgnoError::Config(
                "nonlinear scenarios need at least one substep".into(),
            ));
        }

        let mut exact = vec![Complex64::default(); s];
        let mut e = vec![Complex64::default(); s];
        let mut e2 = vec![Complex64::default(); s];
        let mut q = vec![Complex64::default(); s];
        let mut f1 = vec![Complex64::default(); s];
        let mut f2 = vec![Complex64::default(); s];
        let mut f3 = vec![Complex64::default(); s];
        let mut dealias = vec![true; s];
        let mut quad = vec![Complex64::default(); s];

        let h = scenario.dt_data / scenario.substeps.max(1) as f64;
        let d = layout.grid().dim();
        let sizes = layout.grid().sizes().to_vec();
        for (flat, &k) in layout.kvecs().iter().enumerate() {
            let lam = scenario.kind.symbol(k);
            exact[flat] = (scenario.dt_data * lam).exp();

            let full = stable_phi_coefficients(lam, h);
            let half = stable_phi_coefficients(lam, h / 2.0);
            e[flat] = full.exp_z;
            e2[flat] = half.exp_z;
            q[flat] = (h / 2.0) * half.phi1;
            f1[flat] = h * (full.phi1 - 3.0 * full.phi2 + 4.0 * full.phi3);
            f2[flat] = h * (full.phi2 - 2.0 * full.phi3);
            f3[flat] = h * (4.0 * full.phi3 - full.phi2);

            dealias[flat] = (0..d).all(|j| 3 * k[j].unsigned_abs() as usize <= sizes[j]);
            if let Some(factor) = scenario.kind.quadratic_factor(k) {
                quad[flat] = factor;
            }
        }

        Ok(SolverKernel {
            layout,
            substeps: scenario.substeps.max(1),
            linear,
            exact,
            e,
            e2,
            q,
            f1,
            f2,
            f3,
            dealias,
            quad,
        })
    }

    pub fn layout(&self) -> &SpectrumLayout {
        &self.layout
    }

    /// Transforms a `[1, space...]` field to the solver's spectral state.
    pub fn initial_spectrum(&self, field: &ArrayD<f64>) -> Result<ArrayD<Complex64>> {
        let mut spec = self.layout.forward(field)?;
        if !self.linear {
            self.apply_dealias(&mut spec);
        }
        Ok(spec)
    }

    pub fn to_field(&self, spec: &ArrayD<Complex64>) -> Result<ArrayD<f64>> {
        self.layout.inverse(spec)
    }

    /// Advances the spectral state by one data frame.
    pub fn step_frame(&self, spec: &mut ArrayD<Complex64>) -> Result<()> {
        if self.linear {
            let flat = spec.as_slice_mut().expect("spectra are standard layout");
            for (v, &m) in flat.iter_mut().zip(&self.exact) {
                *v *= m;
            }
            return Ok(());
        }
        for _ in 0..self.substeps {
            self.etdrk4_substep(spec)?;
        }
        Ok(())
    }

    fn apply_dealias(&self, spec: &mut ArrayD<Complex64>) {
        let flat = spec.as_slice_mut().expect("spectra are standard layout");
        for (v, &keep) in flat.iter_mut().zip(&self.dealias) {
            if !keep {
                *v = Complex64::default();
            }
        }
    }

    /// Spectral quadratic term: transform to physical space, square, transform
    /// back, dealias, and apply the derivative prefactor.
    fn nonlinear_term(&self, spec: &ArrayD<Complex64>) -> Result<ArrayD<Complex64>> {
        let mut u = self.layout.inverse(spec)?;
        u.mapv_inplace(|x| x * x);
        let mut sq = self.layout.forward(&u)?;
        let flat = sq.as_slice_mut().expect("spectra are standard layout");
        for (i, v) in flat.iter_mut().enumerate() {
            *v = if self.dealias[i] {
                *v * self.quad[i]
            } else {
                Complex64::default()
            };
        }
        Ok(sq)
    }

    fn etdrk4_substep(&self, spec: &mut ArrayD<Complex64>) -> Result<()> {
        let nu = self.nonlinear_term(spec)?;
        let u = spec.as_slice().expect("spectra are standard layout");
        let nu_f = nu.as_slice().expect("spectra are standard layout");

        let s = u.len();
        let mut a = vec![Complex64::default(); s];
        let mut b = vec![Complex64::default(); s];
        for i in 0..s {
            a[i] = self.e2[i] * u[i] + self.q[i] * nu_f[i];
        }
        let a_arr = same_shape(spec, a);
        let na = self.nonlinear_term(&a_arr)?;
        let na_f = na.as_slice().expect("spectra are standard layout");
        for i in 0..s {
            b[i] = self.e2[i] * u[i] + self.q[i] * na_f[i];
        }
        let b_arr = same_shape(spec, b);
        let nb = self.nonlinear_term(&b_arr)?;
        let nb_f = nb.as_slice().expect("spectra are standard layout");
        let a_f = a_arr.as_slice().expect("spectra are standard layout");
        let mut c = vec![Complex64::default(); s];
        for i in 0..s {
            c[i] = self.e2[i] * a_f[i] + self.q[i] * (2.0 * nb_f[i] - nu_f[i]);
        }
        let c_arr = same_shape(spec, c);
        let nc = self.nonlinear_term(&c_arr)?;
        let nc_f = nc.as_slice().expect("spectra are standard layout");

        let out = spec.as_slice_mut().expect("spectra are standard layout");
        for i in 0..s {
            out[i] = self.e[i] * out[i]
                + self.f1[i] * nu_f[i]
                + 2.0 * self.f2[i] * (na_f[i] + nb_f[i])
                + self.f3[i] * nc_f[i];
        }
        Ok(())
    }
}

fn same_shape(like: &ArrayD<Complex64>, values: Vec<Complex64>) -> ArrayD<Complex64> {
    ArrayD::from_shape_vec(IxDyn(like.shape()), values).expect("matching length")
}

/// Mixes a trajectory index into the base seed.
pub fn trajectory_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index.wrapping_add(1)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Draws a smooth random periodic field `[1, space...]`: spectral amplitudes
/// proportional to `exp(-|k|_2 / 2)` with uniform random phases, zero mean,
/// zeroed Nyquist planes, rescaled to unit root-mean-square.
pub fn random_initial_field(layout: &SpectrumLayout, seed: u64) -> Result<ArrayD<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shape = vec![1usize];
    shape.extend_from_slice(layout.spec_shape());
    let mut spec = ArrayD::<Complex64>::zeros(IxDyn(&shape));
    let flat = spec.as_slice_mut().expect("freshly allocated");
    let sizes = layout.grid().sizes().to_vec();
    let d = sizes.len();
    for (i, &k) in layout.kvecs().iter().enumerate() {
        let zero_mode = (0..d).all(|j| k[j] == 0);
        let nyquist = (0..d).any(|j| 2 * k[j].unsigned_abs() as usize == sizes[j]);
        // the generator must stay in lockstep across layouts, so draw even
        // for modes that end up zeroed
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        if zero_mode || nyquist {
            continue;
        }
        let norm = (0..d).map(|j| (k[j] * k[j]) as f64).sum::<f64>().sqrt();
        let mag = (-0.5 * norm).exp();
        flat[i] = Complex64::from_polar(mag, phase);
    }
    let mut field = layout.inverse(&spec)?;
    let n = field.len() as f64;
    let rms = (field.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if rms <= f64::MIN_POSITIVE {
        return Err(SgnoError::numeric("degenerate random initial field"));
    }
    field.mapv_inplace(|v| v / rms);
    Ok(field)
}

/// Integrates `count` trajectories of `frames` frames each. Trajectory `i`
/// starts from the field seeded by `trajectory_seed(base_seed, i)`.
pub fn generate_trajectories(
    scenario: &Scenario,
    count: usize,
    frames: usize,
    base_seed: u64,
) -> Result<TrajectorySet> {
    if frames == 0 {
        return Err(SgnoError::Config(
            "trajectory generation needs at least one frame".into(),
        ));
    }
    let kernel = SolverKernel::new(scenario)?;
    let mut shape = vec![count, frames, 1];
    shape.extend_from_slice(kernel.layout().grid().sizes());
    let mut data = ArrayD::<f32>::zeros(IxDyn(&shape));
    let frame_len: usize = shape[2..].iter().product();
    let flat = data.as_slice_mut().expect("freshly allocated");

    for traj in 0..count {
        let seed = trajectory_seed(base_seed, traj as u64);
        let u0 = random_initial_field(kernel.layout(), seed)?;
        let mut spec = kernel.initial_spectrum(&u0)?;
        for frame in 0..frames {
            let field = if frame == 0 {
                u0.clone()
            } else {
                kernel.step_frame(&mut spec)?;
                kernel.to_field(&spec)?
            };
            if field.iter().any(|v| !v.is_finite()) {
                return Err(SgnoError::numeric(format!(
                    "solver produced non-finite values in {} trajectory {traj} frame {frame}",
                    scenario.name
                )));
            }
            let dst = &mut flat[(traj * frames + frame) * frame_len..][..frame_len];
            for (d, &v) in dst.iter_mut().zip(field.iter()) {
                *d = v as f32;
            }
        }
    }

    Ok(TrajectorySet {
        dt: scenario.dt_data,
        base_seed,
        data,
    })
}

/// Generates the train and test splits of a scenario under one master seed.
pub fn generate_dataset(scenario: &Scenario, seed: u64) -> Result<Dataset> {
    let train_seed = seed;
    let test_seed = splitmix64(seed ^ 0x7e57);
    let train = generate_trajectories(
        scenario,
        scenario.num_train,
        scenario.train_frames,
        train_seed,
    )?;
    let test = generate_trajectories(scenario, scenario.num_test, scenario.test_frames, test_seed)?;
    Ok(Dataset {
        info: ScenarioInfo {
            name: scenario.name.clone(),
            dt: scenario.dt_data,
            grid: scenario.grid_sizes.clone(),
            channels: 1,
        },
        train,
        test,
    })
}
