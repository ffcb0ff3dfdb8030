//! The surrogate model: a residual one-step map built from shared spectral
//! exponential-time-differencing blocks.
//!
//! One step computes `u + proj((block^L)(lift([u; x])))`. Each block advances
//! a latent field by `dt = dt_data / L`: retained spectral coefficients are
//! propagated by `exp(dt * lambda)` with a learned, stability-constrained
//! diagonal generator `lambda = -softplus(eta) - margin + i*beta`, a learned
//! forcing `g = alpha_g * G(v)` is injected through `dt * phi1(dt * lambda)`
//! with per-mode channel mixing and an optional smooth spectral mask, and a
//! pointwise correction `alpha_w * W(v)` is added in physical space.
//!
//! Reverse-mode gradients are written by hand against the same forward pass
//! and are validated by finite differences in the test suite.

mod checkpoint;
pub mod params;
pub mod pointwise;

pub use checkpoint::CHECKPOINT_FORMAT_VERSION;
pub use pointwise::Activation;

use crate::error::{Result, SgnoError};
use crate::spectral::{phi1, phi1_prime, smooth_mask, FilterSpec, GridSpec, SpectrumLayout};
use ndarray::{Array2, Array3, ArrayD, ArrayView2, IxDyn, SliceInfo, SliceInfoElem};
use num_complex::Complex64;
use params::{ParamStore, Seg};
use pointwise::{net_backward, net_forward, net_jacobian, NetCache, NetSegs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// A latent field, `[width, space...]`.
pub type LatentField = ArrayD<f64>;

/// Where the spectral mask is applied inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPlacement {
    /// Mask only the forcing injection (the default).
    ForcingOnly,
    /// Mask both the propagated state and the forcing; ablation only.
    All,
}

/// Parameter counts the dimension presets aim for (1D, 2D, 3D). Run
/// manifests report the achieved count next to this target.
pub const PRESET_PARAM_BUDGETS: [u64; 3] = [30_695, 58_739, 206_071];

/// Full model configuration. `grid` is the data grid; transforms run on the
/// zero-padded grid when `padding > 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgnoConfig {
    pub grid: GridSpec,
    /// Channels of the physical state (`C_u`).
    pub state_channels: usize,
    /// Latent channels (`C`).
    pub width: usize,
    /// Per-axis rectangular truncation cutoffs; modes with `|k_j| < m_j` are retained.
    pub modes_per_axis: Vec<usize>,
    /// Number of shared blocks (`L`); the block step is `dt_data / L`.
    pub num_blocks: usize,
    /// Time between consecutive data frames.
    pub dt_data: f64,
    /// Scale of the learned forcing path.
    pub alpha_g: f64,
    /// Scale of the pointwise correction path.
    pub alpha_w: f64,
    /// Whether the generator carries an imaginary part.
    pub use_beta: bool,
    /// Stability margin added to the softplus decay (`>= 0`).
    pub margin: f64,
    /// Optional spectral-norm cap for the mixing matrices.
    pub norm_cap: Option<f64>,
    pub filter: FilterSpec,
    pub mask_placement: MaskPlacement,
    pub activation: Activation,
    /// Append coordinate channels to the lift input.
    pub coord_channels: bool,
    /// Input history length; fixed at 1.
    pub history: usize,
    /// Symmetric zero padding per axis before transforms.
    pub padding: usize,
    /// Opaque compatibility field; fixed at 1, no behavior.
    pub initial_step: u32,
    /// Opaque compatibility field; fixed at 1, no behavior.
    pub inner_steps: u32,
}

impl SgnoConfig {
    /// Dimension defaults. `dt_data` starts at 0.1; callers overwrite it from
    /// the data they train on.
    pub fn preset(grid: GridSpec, state_channels: usize) -> Self {
        let d = grid.dim();
        let (width, modes, num_blocks, filter, alpha_w, alpha_g) = match d {
            1 => (28, 28, 1, FilterSpec::none(), 0.6, 1.0),
            2 => (20, 8, 1, FilterSpec::smooth(1.0, 8.0), 1.0, 10.0),
            _ => (4, 8, 5, FilterSpec::none(), 1.0, 10.0),
        };
        let modes_per_axis = grid.sizes().iter().map(|&n| modes.min(n / 2)).collect();
        SgnoConfig {
            grid,
            state_channels,
            width,
            modes_per_axis,
            num_blocks,
            dt_data: 0.1,
            alpha_g,
            alpha_w,
            use_beta: false,
            margin: 0.0,
            norm_cap: None,
            filter,
            mask_placement: MaskPlacement::ForcingOnly,
            activation: Activation::Silu,
            coord_channels: true,
            history: 1,
            padding: 0,
            initial_step: 1,
            inner_steps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_channels == 0 || self.width == 0 || self.num_blocks == 0 {
            return Err(SgnoError::Config(
                "state_channels, width, and num_blocks must be positive".into(),
            ));
        }
        if self.history != 1 {
            return Err(SgnoError::Config("history is fixed at 1".into()));
        }
        if !(self.dt_data > 0.0) {
            return Err(SgnoError::Config("dt_data must be positive".into()));
        }
        if self.alpha_g < 0.0 || self.alpha_w < 0.0 {
            return Err(SgnoError::Config(
                "alpha_g and alpha_w must be nonnegative".into(),
            ));
        }
        if self.margin < 0.0 {
            return Err(SgnoError::Config("margin must be nonnegative".into()));
        }
        if let Some(cap) = self.norm_cap {
            if !(cap > 0.0) {
                return Err(SgnoError::Config("norm_cap must be positive".into()));
            }
        }
        // layout construction validates mode cutoffs against the padded grid
        self.padded_grid()
            .and_then(|g| SpectrumLayout::new(g, self.modes_per_axis.clone()).map(|_| ()))
    }

    /// Block step size `dt_data / num_blocks`.
    pub fn dt_block(&self) -> f64 {
        self.dt_data / self.num_blocks as f64
    }

    pub fn padded_grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.grid
                .sizes()
                .iter()
                .map(|&n| n + 2 * self.padding)
                .collect(),
        )
    }

    /// Channels entering the lift net.
    pub fn lift_in_channels(&self) -> usize {
        self.state_channels * self.history
            + if self.coord_channels {
                self.grid.dim()
            } else {
                0
            }
    }
}

/// Per-component parameter counts for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub generator: usize,
    pub mixing: usize,
    pub lift: usize,
    pub proj: usize,
    pub forcing_net: usize,
    pub correction_net: usize,
    pub total: usize,
}

/// Counts trainable scalars (complex entries count twice) without building
/// the model.
pub fn count_parameters(config: &SgnoConfig) -> Result<ParamCount> {
    config.validate()?;
    let d = config.grid.dim();
    // retained modes: the last axis stores m values, every other axis 2m-1
    let mut k = config.modes_per_axis[d - 1];
    for &m in &config.modes_per_axis[..d - 1] {
        k *= 2 * m - 1;
    }
    let c = config.width;
    let generator = k * c * if config.use_beta { 2 } else { 1 };
    let mixing = 2 * k * c * c;
    let lift = NetSegs::param_count(config.lift_in_channels(), c, c);
    let proj = NetSegs::param_count(c, c, config.state_channels);
    let forcing_net = NetSegs::param_count(c, c, c);
    let correction_net = forcing_net;
    Ok(ParamCount {
        generator,
        mixing,
        lift,
        proj,
        forcing_net,
        correction_net,
        total: generator + mixing + lift + proj + forcing_net + correction_net,
    })
}

/// Spectral norm of a complex matrix by power iteration on `M^H M`.
pub(crate) fn complex_spectral_norm(m: ArrayView2<'_, Complex64>, iters: usize, tol: f64) -> f64 {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    // deterministic start with energy in every direction
    let mut x: Vec<Complex64> = (0..cols)
        .map(|i| Complex64::new(1.0 + (i as f64 * 0.7).sin() * 0.01, 0.0))
        .collect();
    let mut prev = 0.0;
    let mut y = vec![Complex64::default(); rows];
    for _ in 0..iters {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = (0..cols).map(|c| m[(r, c)] * x[c]).sum();
        }
        for (c, xc) in x.iter_mut().enumerate() {
            *xc = (0..rows).map(|r| m[(r, c)].conj() * y[r]).sum();
        }
        let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for v in x.iter_mut() {
            *v /= norm;
        }
        let sigma = norm.sqrt();
        if (sigma - prev).abs() <= tol * sigma.max(1.0) {
            return sigma;
        }
        prev = sigma;
    }
    prev
}

/// Rescales each per-mode mixing matrix to spectral norm at most `cap`:
/// `M(k) / max(1, |M(k)|_2 / cap)`. Matrices already inside the cap are
/// returned unchanged.
pub fn capped_mixing(mixing: &Array3<Complex64>, cap: f64) -> Array3<Complex64> {
    let mut out = mixing.clone();
    for mut mat in out.outer_iter_mut() {
        let norm = complex_spectral_norm(mat.view(), 100, 1e-12);
        let scale = (norm / cap).max(1.0);
        if scale > 1.0 {
            mat.mapv_inplace(|v| v / scale);
        }
    }
    out
}

/// Identifies one of the four pointwise nets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetId {
    Lift,
    Proj,
    Forcing,
    Correction,
}

/// The model: configuration, spectral layout, and flat parameters.
#[derive(Clone)]
pub struct SgnoModel {
    config: SgnoConfig,
    layout: SpectrumLayout,
    /// Mask value per retained mode (all ones for `FilterKind::None`).
    mask: Vec<f64>,
    seg_eta: Seg,
    seg_beta: Option<Seg>,
    seg_mix_re: Seg,
    seg_mix_im: Seg,
    lift: NetSegs,
    proj: NetSegs,
    gnet: NetSegs,
    wnet: NetSegs,
    params: ParamStore,
    /// Coordinate rows `[d, points]` appended to the lift input.
    coords: Array2<f64>,
    seed: u64,
    /// Training step recorded in checkpoints.
    pub step: u64,
}

impl std::fmt::Debug for SgnoModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SgnoModel")
            .field("config", &self.config)
            .field("params", &self.params.len())
            .field("seed", &self.seed)
            .field("step", &self.step)
            .finish()
    }
}

/// Cached intermediates for one block, consumed by the backward pass.
/// Spectral vectors are indexed `[mode * width + channel]` over retained modes.
struct BlockCache {
    g_cache: NetCache,
    w_cache: NetCache,
    v_hat: Vec<Complex64>,
    g_hat: Vec<Complex64>,
    mixed: Vec<Complex64>,
    lam: Vec<Complex64>,
    exp_v: Vec<Complex64>,
    coeff: Vec<Complex64>,
    mix_scale: Vec<f64>,
    pre: Array2<f64>,
    final_block: bool,
}

/// Forward-pass record for one input, consumed by [`SgnoModel::backward`].
pub struct Tape {
    lift_cache: NetCache,
    blocks: Vec<BlockCache>,
    proj_cache: NetCache,
}

impl SgnoModel {
    /// Builds and initializes a model. The same `(config, seed)` pair always
    /// produces identical parameters.
    pub fn new(config: SgnoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = SpectrumLayout::new(config.padded_grid()?, config.modes_per_axis.clone())?;
        let mask = smooth_mask(&layout, &config.filter);

        let k = layout.num_retained();
        let c = config.width;
        let mut b = ParamStore::builder();
        let seg_eta = b.register("generator.eta", &[k, c]);
        let seg_beta = if config.use_beta {
            Some(b.register("generator.beta", &[k, c]))
        } else {
            None
        };
        let seg_mix_re = b.register("mixing.re", &[k, c, c]);
        let seg_mix_im = b.register("mixing.im", &[k, c, c]);
        let lift = NetSegs::register(&mut b, "lift", config.lift_in_channels(), c, c);
        let proj = NetSegs::register(&mut b, "proj", c, c, config.state_channels);
        let gnet = NetSegs::register(&mut b, "forcing", c, c, c);
        let wnet = NetSegs::register(&mut b, "correction", c, c, c);
        let params = b.build();

        let coords = coordinate_rows(&config.grid);
        let mut model = SgnoModel {
            config,
            layout,
            mask,
            seg_eta,
            seg_beta,
            seg_mix_re,
            seg_mix_im,
            lift,
            proj,
            gnet,
            wnet,
            params,
            coords,
            seed,
            step: 0,
        };
        model.init_params(seed);
        Ok(model)
    }

    fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = self.config.width;
        let k = self.layout.num_retained();

        let eta_dist = Normal::new(0.0, 0.5).expect("valid normal");
        for v in self.params.slice_mut(self.seg_eta) {
            *v = eta_dist.sample(&mut rng);
        }
        // beta starts at zero
        let mix_dist = Normal::new(0.0, 0.02 / (c as f64).sqrt()).expect("valid normal");
        for m in 0..k {
            for row in 0..c {
                for col in 0..c {
                    let idx = m * c * c + row * c + col;
                    let eye = if row == col { 1.0 } else { 0.0 };
                    self.params.slice_mut(self.seg_mix_re)[idx] = eye + mix_dist.sample(&mut rng);
                    self.params.slice_mut(self.seg_mix_im)[idx] = mix_dist.sample(&mut rng);
                }
            }
        }
        let nets = [self.lift, self.proj, self.gnet, self.wnet];
        for segs in nets {
            let w1_dist = Normal::new(0.0, 1.0 / (segs.in_ch as f64).sqrt()).expect("valid normal");
            for v in self.params.slice_mut(segs.w1) {
                *v = w1_dist.sample(&mut rng);
            }
            let w2_dist =
                Normal::new(0.0, 1.0 / (segs.hidden as f64).sqrt()).expect("valid normal");
            for v in self.params.slice_mut(segs.w2) {
                *v = w2_dist.sample(&mut rng);
            }
        }
        // zero the projection output layer: the fresh model is the identity map
        for v in self.params.slice_mut(self.proj.w2) {
            *v = 0.0;
        }
        for v in self.params.slice_mut(self.proj.b2) {
            *v = 0.0;
        }
    }

    pub fn config(&self) -> &SgnoConfig {
        &self.config
    }

    pub fn layout(&self) -> &SpectrumLayout {
        &self.layout
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_len(&self) -> usize {
        self.params.len()
    }

    /// Counts by component; `total` equals the flat parameter length.
    pub fn param_count(&self) -> ParamCount {
        count_parameters(&self.config).expect("validated at construction")
    }

    /// A copy with the same parameters but different path scales/activation.
    /// Used by verification probes.
    pub fn with_overrides(&self, alpha_g: f64, alpha_w: f64, activation: Activation) -> SgnoModel {
        let mut m = self.clone();
        m.config.alpha_g = alpha_g;
        m.config.alpha_w = alpha_w;
        m.config.activation = activation;
        m
    }

    /// The constrained generator `[modes, width]`:
    /// `-softplus(eta) - margin + i*beta`.
    pub fn stabilized_lambda(&self) -> Array2<Complex64> {
        let k = self.layout.num_retained();
        let c = self.config.width;
        let eta = self.params.slice(self.seg_eta);
        let beta = self.seg_beta.map(|s| self.params.slice(s));
        Array2::from_shape_fn((k, c), |(m, ch)| {
            let idx = m * c + ch;
            let re = -softplus(eta[idx]) - self.config.margin;
            let im = beta.map_or(0.0, |b| b[idx]);
            Complex64::new(re, im)
        })
    }

    /// Largest real part of the generator; negative by construction.
    pub fn max_re_lambda(&self) -> f64 {
        self.params
            .slice(self.seg_eta)
            .iter()
            .map(|&e| -softplus(e) - self.config.margin)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Per-mode mixing matrices `[modes, width, width]` after the optional
    /// spectral-norm cap.
    pub fn effective_mixing(&self) -> Array3<Complex64> {
        let k = self.layout.num_retained();
        let c = self.config.width;
        let re = self.params.slice(self.seg_mix_re);
        let im = self.params.slice(self.seg_mix_im);
        let raw = Array3::from_shape_fn((k, c, c), |(m, r, col)| {
            let idx = m * c * c + r * c + col;
            Complex64::new(re[idx], im[idx])
        });
        match self.config.norm_cap {
            Some(cap) => capped_mixing(&raw, cap),
            None => raw,
        }
    }

    /// Largest spectral norm over the per-mode mixing matrices.
    pub fn mixing_norm_sup(&self) -> f64 {
        self.effective_mixing()
            .outer_iter()
            .map(|m| complex_spectral_norm(m.view(), 100, 1e-12))
            .fold(0.0, f64::max)
    }

    /// Largest spectral norm over the mixing matrices with each mode's mask
    /// value folded in; the forcing path's true operator gain.
    pub fn masked_mixing_sup(&self) -> f64 {
        self.effective_mixing()
            .outer_iter()
            .zip(&self.mask)
            .map(|(m, &f)| f * complex_spectral_norm(m.view(), 100, 1e-12))
            .fold(0.0, f64::max)
    }

    /// Mask value per retained mode, in [`SpectrumLayout::retained`] order.
    pub fn forcing_mask(&self) -> &[f64] {
        &self.mask
    }

    fn mixing_scales(&self) -> Vec<f64> {
        let k = self.layout.num_retained();
        match self.config.norm_cap {
            None => vec![1.0; k],
            Some(cap) => {
                let c = self.config.width;
                let re = self.params.slice(self.seg_mix_re);
                let im = self.params.slice(self.seg_mix_im);
                (0..k)
                    .map(|m| {
                        let mat = Array2::from_shape_fn((c, c), |(r, col)| {
                            let idx = m * c * c + r * c + col;
                            Complex64::new(re[idx], im[idx])
                        });
                        (complex_spectral_norm(mat.view(), 100, 1e-12) / cap).max(1.0)
                    })
                    .collect()
            }
        }
    }

    /// One surrogate step `u + proj(blocks(lift([u; x])))`.
    pub fn one_step(&self, u: &ArrayD<f64>) -> Result<ArrayD<f64>> {
        Ok(self.forward_internal(u)?.0)
    }

    /// Forward pass that also returns the tape for [`SgnoModel::backward`].
    pub fn one_step_with_tape(&self, u: &ArrayD<f64>) -> Result<(ArrayD<f64>, Tape)> {
        let (out, tape) = self.forward_internal(u)?;
        Ok((out, tape))
    }

    /// The residual branch `proj(blocks(lift([u; x])))` without the skip
    /// connection; linearity probes compare this against spectral
    /// multiplication.
    pub fn residual_branch(&self, u: &ArrayD<f64>) -> Result<ArrayD<f64>> {
        let (mut out, _) = self.forward_internal(u)?;
        out.zip_mut_with(u, |o, &x| *o -= x);
        Ok(out)
    }

    fn check_state_shape(&self, u: &ArrayD<f64>) -> Result<usize> {
        let mut expected = vec![self.config.state_channels];
        expected.extend_from_slice(self.config.grid.sizes());
        if u.shape() != expected.as_slice() {
            return Err(SgnoError::shape("model input state", &expected, u.shape()));
        }
        Ok(self.config.grid.num_points())
    }

    /// The `[lift_in_channels, points]` matrix fed to the lift net: state
    /// channels stacked over coordinate channels.
    pub fn assemble_lift_input(&self, u: &ArrayD<f64>) -> Result<Array2<f64>> {
        let points = self.check_state_shape(u)?;
        let cu = self.config.state_channels;
        let cin = self.config.lift_in_channels();
        let u2 = flatten2(u, cu, points);
        let mut input2 = Array2::<f64>::zeros((cin, points));
        input2.slice_mut(ndarray::s![0..cu, ..]).assign(&u2);
        if self.config.coord_channels {
            input2.slice_mut(ndarray::s![cu.., ..]).assign(&self.coords);
        }
        Ok(input2)
    }

    fn forward_internal(&self, u: &ArrayD<f64>) -> Result<(ArrayD<f64>, Tape)> {
        if u.iter().any(|v| !v.is_finite()) {
            return Err(SgnoError::numeric("model input contains non-finite values"));
        }
        let input2 = self.assemble_lift_input(u)?;

        let (mut v2, lift_cache) = net_forward(
            self.params.data(),
            &self.lift,
            self.config.activation,
            &input2,
        );
        let mut blocks = Vec::with_capacity(self.config.num_blocks);
        for b in 0..self.config.num_blocks {
            let final_block = b + 1 == self.config.num_blocks;
            let (next, cache) = self.block_forward(&v2, final_block)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(SgnoError::numeric(format!(
                    "block {b} produced non-finite values"
                )));
            }
            v2 = next;
            blocks.push(cache);
        }
        let (r2, proj_cache) =
            net_forward(self.params.data(), &self.proj, self.config.activation, &v2);
        let mut out = u.clone();
        add_flat(&mut out, &r2);
        Ok((
            out,
            Tape {
                lift_cache,
                blocks,
                proj_cache,
            },
        ))
    }

    /// Applies the lift net (with coordinate channels) to a state; returns the
    /// initial latent `[width, space...]`.
    pub fn lift_apply(&self, u: &ArrayD<f64>) -> Result<LatentField> {
        let input2 = self.assemble_lift_input(u)?;
        let (v2, _) = net_forward(
            self.params.data(),
            &self.lift,
            self.config.activation,
            &input2,
        );
        Ok(self.latent_to_field(&v2))
    }

    /// Applies one block to a latent field; `final_block` skips the closing
    /// nonlinearity.
    pub fn block_apply(&self, v: &LatentField, final_block: bool) -> Result<LatentField> {
        let c = self.config.width;
        let mut expected = vec![c];
        expected.extend_from_slice(self.config.grid.sizes());
        if v.shape() != expected.as_slice() {
            return Err(SgnoError::shape("block latent input", &expected, v.shape()));
        }
        let v2 = flatten2(v, c, self.config.grid.num_points());
        let (out, _) = self.block_forward(&v2, final_block)?;
        Ok(self.latent_to_field(&out))
    }

    /// Applies the projection net to a latent field.
    pub fn project_apply(&self, v: &LatentField) -> Result<ArrayD<f64>> {
        let c = self.config.width;
        let points = self.config.grid.num_points();
        let v2 = flatten2(v, c, points);
        let (y2, _) = net_forward(self.params.data(), &self.proj, self.config.activation, &v2);
        let mut shape = vec![self.config.state_channels];
        shape.extend_from_slice(self.config.grid.sizes());
        Ok(y2
            .into_shape_with_order(IxDyn(&shape))
            .expect("projection output reshapes to state shape"))
    }

    fn latent_to_field(&self, v2: &Array2<f64>) -> LatentField {
        let mut shape = vec![self.config.width];
        shape.extend_from_slice(self.config.grid.sizes());
        v2.clone()
            .into_shape_with_order(IxDyn(&shape))
            .expect("latent reshapes to field shape")
    }

    /// Runs a pointwise net on `[in_ch, points]` columns.
    pub fn apply_net(&self, net: NetId, x: &Array2<f64>) -> Array2<f64> {
        let segs = self.net_segs(net);
        net_forward(self.params.data(), &segs, self.config.activation, x).0
    }

    /// Jacobian of a pointwise net at one input column.
    pub fn net_jacobian(&self, net: NetId, x: &[f64]) -> Array2<f64> {
        let segs = self.net_segs(net);
        net_jacobian(self.params.data(), &segs, self.config.activation, x)
    }

    pub fn net_dims(&self, net: NetId) -> (usize, usize) {
        let segs = self.net_segs(net);
        (segs.in_ch, segs.out_ch)
    }

    fn net_segs(&self, net: NetId) -> NetSegs {
        match net {
            NetId::Lift => self.lift,
            NetId::Proj => self.proj,
            NetId::Forcing => self.gnet,
            NetId::Correction => self.wnet,
        }
    }

    /// Global Lipschitz bound of a pointwise net: product of layer spectral
    /// norms times the activation slope bound.
    pub fn net_lipschitz_upper(&self, net: NetId) -> f64 {
        let segs = self.net_segs(net);
        let w1 = ArrayView2::from_shape((segs.hidden, segs.in_ch), self.params.slice(segs.w1))
            .expect("registered shape");
        let w2 = ArrayView2::from_shape((segs.out_ch, segs.hidden), self.params.slice(segs.w2))
            .expect("registered shape");
        let n1 = real_spectral_norm(&w1);
        let n2 = real_spectral_norm(&w2);
        n2 * self.config.activation.slope_bound() * n1
    }

    fn block_forward(
        &self,
        v2: &Array2<f64>,
        final_block: bool,
    ) -> Result<(Array2<f64>, BlockCache)> {
        let c = self.config.width;
        let dt = self.config.dt_block();
        let k = self.layout.num_retained();
        let act = self.config.activation;

        let (g2, g_cache) = net_forward(self.params.data(), &self.gnet, act, v2);
        let (w2c, w_cache) = net_forward(self.params.data(), &self.wnet, act, v2);

        let v_spec = self.layout.forward(&self.pad_field(v2))?;
        let g_spec = self.layout.forward(&self.pad_field(&g2))?;
        let v_hat = self.gather_retained(&v_spec);
        let g_hat = self.gather_retained(&g_spec);

        let eta = self.params.slice(self.seg_eta);
        let beta = self.seg_beta.map(|s| self.params.slice(s));
        let mix_re = self.params.slice(self.seg_mix_re);
        let mix_im = self.params.slice(self.seg_mix_im);
        let mix_scale = self.mixing_scales();

        let mut lam = vec![Complex64::default(); k * c];
        let mut exp_v = vec![Complex64::default(); k * c];
        let mut coeff = vec![Complex64::default(); k * c];
        let mut mixed = vec![Complex64::default(); k * c];
        let mut w_hat = vec![Complex64::default(); k * c];
        for m in 0..k {
            let f = self.mask[m];
            let prop_factor = match self.config.mask_placement {
                MaskPlacement::ForcingOnly => 1.0,
                MaskPlacement::All => f,
            };
            let forcing_factor = f * self.config.alpha_g;
            let inv_scale = 1.0 / mix_scale[m];
            for ch in 0..c {
                let idx = m * c + ch;
                let re = -softplus(eta[idx]) - self.config.margin;
                let im = beta.map_or(0.0, |b| b[idx]);
                let l = Complex64::new(re, im);
                let z = dt * l;
                lam[idx] = l;
                exp_v[idx] = z.exp() * prop_factor;
                coeff[idx] = dt * phi1(z) * forcing_factor;

                let base = m * c * c + ch * c;
                let mut acc = Complex64::default();
                for col in 0..c {
                    let mval = Complex64::new(mix_re[base + col], mix_im[base + col]) * inv_scale;
                    acc += mval * g_hat[m * c + col];
                }
                mixed[idx] = acc;
                w_hat[idx] = exp_v[idx] * v_hat[idx] + coeff[idx] * acc;
            }
        }

        let w_spec = self.scatter_retained(&w_hat, None);
        let v_etd = self.crop_field(&self.layout.inverse(&w_spec)?);

        let mut pre = v_etd;
        pre.scaled_add(self.config.alpha_w, &w2c);
        let out = if final_block {
            pre.clone()
        } else {
            pre.mapv(|x| act.apply(x))
        };
        Ok((
            out,
            BlockCache {
                g_cache,
                w_cache,
                v_hat,
                g_hat,
                mixed,
                lam,
                exp_v,
                coeff,
                mix_scale,
                pre,
                final_block,
            },
        ))
    }

    fn block_backward(
        &self,
        cache: &BlockCache,
        out_bar: &Array2<f64>,
        grad: &mut [f64],
    ) -> Result<Array2<f64>> {
        let c = self.config.width;
        let dt = self.config.dt_block();
        let k = self.layout.num_retained();
        let act = self.config.activation;

        let mut pre_bar = out_bar.clone();
        if !cache.final_block {
            pre_bar.zip_mut_with(&cache.pre, |g, &z| *g *= act.derivative(z));
        }

        // pointwise correction path
        let w_bar = pre_bar.mapv(|x| x * self.config.alpha_w);
        let xw_bar = net_backward(
            self.params.data(),
            &self.wnet,
            act,
            &cache.w_cache,
            &w_bar,
            grad,
        );

        // adjoint of (inverse transform then crop): pad, forward, weight
        let pre_spec = self.layout.forward(&self.pad_field(&pre_bar))?;
        let w_hat_bar = self.gather_retained_weighted(&pre_spec);

        let eta = self.params.slice(self.seg_eta);
        let grad_split =
            |grad: &mut [f64], seg: Seg, idx: usize, val: f64| grad[seg.offset + idx] += val;

        let mut v_hat_bar = vec![Complex64::default(); k * c];
        let mut g_hat_bar = vec![Complex64::default(); k * c];
        let mix_re = self.params.slice(self.seg_mix_re);
        let mix_im = self.params.slice(self.seg_mix_im);
        for m in 0..k {
            let f = self.mask[m];
            let forcing_factor = f * self.config.alpha_g;
            let inv_scale = 1.0 / cache.mix_scale[m];
            for ch in 0..c {
                let idx = m * c + ch;
                let wb = w_hat_bar[idx];
                if wb == Complex64::default() {
                    continue;
                }
                v_hat_bar[idx] += cache.exp_v[idx].conj() * wb;
                let mixed_bar = cache.coeff[idx].conj() * wb;

                // d w_hat / d lambda = dt*exp_v*v_hat + dt^2*phi1'(dt lam)*ff*mixed
                let z = dt * cache.lam[idx];
                let dw_dl = dt * cache.exp_v[idx] * cache.v_hat[idx]
                    + dt * dt * phi1_prime(z) * forcing_factor * cache.mixed[idx];
                let lam_bar = dw_dl.conj() * wb;
                let dre_deta = -sigmoid_stable(eta[idx]);
                grad_split(grad, self.seg_eta, idx, lam_bar.re * dre_deta);
                if let Some(seg) = self.seg_beta {
                    grad_split(grad, seg, idx, lam_bar.im);
                }

                let base = m * c * c + ch * c;
                for col in 0..c {
                    let mval = Complex64::new(mix_re[base + col], mix_im[base + col]) * inv_scale;
                    g_hat_bar[m * c + col] += mval.conj() * mixed_bar;
                    // gradient for the raw matrix entries keeps the cap
                    // scale as a constant factor
                    let m_bar = mixed_bar * cache.g_hat[m * c + col].conj() * inv_scale;
                    grad_split(grad, self.seg_mix_re, base + col, m_bar.re);
                    grad_split(grad, self.seg_mix_im, base + col, m_bar.im);
                }
            }
        }

        // adjoint of (pad then forward transform): un-weight, inverse, crop
        let v_spec_bar = self.scatter_retained(&v_hat_bar, Some(self.layout.weights()));
        let v_from_spec = self.crop_field(&self.layout.inverse(&v_spec_bar)?);
        let g_spec_bar = self.scatter_retained(&g_hat_bar, Some(self.layout.weights()));
        let g_raw_bar = self.crop_field(&self.layout.inverse(&g_spec_bar)?);

        let xg_bar = net_backward(
            self.params.data(),
            &self.gnet,
            act,
            &cache.g_cache,
            &g_raw_bar,
            grad,
        );

        let mut v_bar = v_from_spec;
        v_bar += &xw_bar;
        v_bar += &xg_bar;
        Ok(v_bar)
    }

    /// Accumulates parameter gradients for one recorded step into `grad`
    /// (which mirrors the flat parameter layout) and returns the gradient
    /// with respect to the input state.
    pub fn backward(
        &self,
        tape: &Tape,
        out_bar: &ArrayD<f64>,
        grad: &mut [f64],
    ) -> Result<ArrayD<f64>> {
        let points = self.config.grid.num_points();
        let cu = self.config.state_channels;
        let out_bar2 = flatten2(out_bar, cu, points);
        let act = self.config.activation;

        let mut v_bar = net_backward(
            self.params.data(),
            &self.proj,
            act,
            &tape.proj_cache,
            &out_bar2,
            grad,
        );
        for cache in tape.blocks.iter().rev() {
            v_bar = self.block_backward(cache, &v_bar, grad)?;
        }
        let in_bar = net_backward(
            self.params.data(),
            &self.lift,
            act,
            &tape.lift_cache,
            &v_bar,
            grad,
        );
        // skip connection plus the state rows of the lift input
        let mut u_bar = out_bar2;
        u_bar += &in_bar.slice(ndarray::s![0..cu, ..]);
        let mut shape = vec![cu];
        shape.extend_from_slice(self.config.grid.sizes());
        Ok(u_bar
            .into_shape_with_order(IxDyn(&shape))
            .expect("state gradient reshapes to state shape"))
    }

    /// Overwrites the generator so that `stabilized_lambda()` equals `lambda`.
    /// Requires `Re(lambda) < -margin`; imaginary parts require `use_beta`.
    pub fn set_generator_lambda(&mut self, lambda: &Array2<Complex64>) -> Result<()> {
        let k = self.layout.num_retained();
        let c = self.config.width;
        if lambda.dim() != (k, c) {
            return Err(SgnoError::shape(
                "generator assignment",
                &[k, c],
                &[lambda.dim().0, lambda.dim().1],
            ));
        }
        for (i, l) in lambda.iter().enumerate() {
            let y = -l.re - self.config.margin;
            if !(y > 0.0) {
                return Err(SgnoError::Config(format!(
                    "generator entry {i}: Re(lambda) = {} is not below -margin",
                    l.re
                )));
            }
            self.params.slice_mut(self.seg_eta)[i] = inverse_softplus(y);
            match self.seg_beta {
                Some(seg) => self.params.slice_mut(seg)[i] = l.im,
                None if l.im != 0.0 => {
                    return Err(SgnoError::Config(
                        "imaginary generator parts require use_beta".into(),
                    ))
                }
                None => {}
            }
        }
        Ok(())
    }

    /// Sets the mixing matrices of every retained mode.
    pub fn set_mixing(&mut self, mixing: &Array3<Complex64>) -> Result<()> {
        let k = self.layout.num_retained();
        let c = self.config.width;
        if mixing.dim() != (k, c, c) {
            return Err(SgnoError::Config(format!(
                "mixing assignment expects [{k}, {c}, {c}], got {:?}",
                mixing.dim()
            )));
        }
        for (i, v) in mixing.iter().enumerate() {
            self.params.slice_mut(self.seg_mix_re)[i] = v.re;
            self.params.slice_mut(self.seg_mix_im)[i] = v.im;
        }
        Ok(())
    }

    /// Configures lift and projection as exact channel embeddings
    /// (`u -> [u; 0]` and `v -> v[0..C_u]`). Exact only with the identity
    /// activation; used by linearity probes.
    pub fn set_channel_copy_nets(&mut self) {
        for (segs, copy_in) in [(self.lift, true), (self.proj, false)] {
            for v in self.params.slice_mut(segs.w1) {
                *v = 0.0;
            }
            for v in self.params.slice_mut(segs.b1) {
                *v = 0.0;
            }
            for v in self.params.slice_mut(segs.w2) {
                *v = 0.0;
            }
            for v in self.params.slice_mut(segs.b2) {
                *v = 0.0;
            }
            let (rows1, cols1) = (segs.hidden, segs.in_ch);
            let w1 = self.params.slice_mut(segs.w1);
            for i in 0..rows1.min(cols1) {
                w1[i * cols1 + i] = 1.0;
            }
            let (rows2, cols2) = (segs.out_ch, segs.hidden);
            let w2 = self.params.slice_mut(segs.w2);
            for i in 0..rows2.min(cols2) {
                w2[i * cols2 + i] = 1.0;
            }
            let _ = copy_in;
        }
    }

    fn gather_retained(&self, spec: &ArrayD<Complex64>) -> Vec<Complex64> {
        let c = self.config.width;
        let s = self.layout.num_stored();
        let flat = spec.as_slice().expect("owned spectra are standard layout");
        let retained = self.layout.retained();
        let mut out = vec![Complex64::default(); retained.len() * c];
        for (mi, &f) in retained.iter().enumerate() {
            for ch in 0..c {
                out[mi * c + ch] = flat[ch * s + f];
            }
        }
        out
    }

    fn gather_retained_weighted(&self, spec: &ArrayD<Complex64>) -> Vec<Complex64> {
        let c = self.config.width;
        let s = self.layout.num_stored();
        let flat = spec.as_slice().expect("owned spectra are standard layout");
        let retained = self.layout.retained();
        let weights = self.layout.weights();
        let mut out = vec![Complex64::default(); retained.len() * c];
        for (mi, &f) in retained.iter().enumerate() {
            let w = weights[f];
            for ch in 0..c {
                out[mi * c + ch] = flat[ch * s + f] * w;
            }
        }
        out
    }

    /// Scatters retained values into a zero spectrum; `divide` optionally
    /// divides each mode by its Parseval weight.
    fn scatter_retained(&self, values: &[Complex64], divide: Option<&[f64]>) -> ArrayD<Complex64> {
        let c = self.config.width;
        let s = self.layout.num_stored();
        let mut shape = vec![c];
        shape.extend_from_slice(self.layout.spec_shape());
        let mut spec = ArrayD::<Complex64>::zeros(IxDyn(&shape));
        let flat = spec.as_slice_mut().expect("freshly allocated");
        for (mi, &f) in self.layout.retained().iter().enumerate() {
            let scale = divide.map_or(1.0, |w| 1.0 / w[f]);
            for ch in 0..c {
                flat[ch * s + f] = values[mi * c + ch] * scale;
            }
        }
        spec
    }

    /// Zero-pads `[C, points]` columns into the padded grid as a field.
    fn pad_field(&self, x2: &Array2<f64>) -> ArrayD<f64> {
        let c = x2.nrows();
        let p = self.config.padding;
        if p == 0 {
            let mut shape = vec![c];
            shape.extend_from_slice(self.config.grid.sizes());
            return x2
                .clone()
                .into_shape_with_order(IxDyn(&shape))
                .expect("grid points match");
        }
        let mut shape = vec![c];
        shape.extend(self.config.grid.sizes().iter().map(|&n| n + 2 * p));
        let mut out = ArrayD::<f64>::zeros(IxDyn(&shape));
        let inner = self.interior_slice(c);
        let mut view = out.slice_mut(inner.as_ref());
        let mut fshape = vec![c];
        fshape.extend_from_slice(self.config.grid.sizes());
        let field = x2
            .clone()
            .into_shape_with_order(IxDyn(&fshape))
            .expect("grid points match");
        view.assign(&field);
        out
    }

    /// Crops a padded field back to `[C, points]` columns.
    fn crop_field(&self, x: &ArrayD<f64>) -> Array2<f64> {
        let c = x.shape()[0];
        let points = self.config.grid.num_points();
        if self.config.padding == 0 {
            return x
                .clone()
                .into_shape_with_order((c, points))
                .expect("grid points match");
        }
        let inner = self.interior_slice(c);
        x.slice(inner.as_ref())
            .to_owned()
            .into_shape_with_order((c, points))
            .expect("interior matches grid points")
    }

    fn interior_slice(&self, _channels: usize) -> SliceInfo<Vec<SliceInfoElem>, IxDyn, IxDyn> {
        let p = self.config.padding as isize;
        let mut elems = vec![SliceInfoElem::from(..)];
        for &n in self.config.grid.sizes() {
            elems.push(SliceInfoElem::Slice {
                start: p,
                end: Some(p + n as isize),
                step: 1,
            });
        }
        SliceInfo::try_from(elems).expect("valid slice spec")
    }
}

/// Stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of `softplus` for positive inputs.
pub fn inverse_softplus(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    y + (-(-y).exp_m1()).ln()
}

fn sigmoid_stable(x: f64) -> f64 {
    pointwise::sigmoid(x)
}

/// Spectral norm of a real matrix by power iteration.
pub(crate) fn real_spectral_norm(m: &ArrayView2<'_, f64>) -> f64 {
    let (rows, cols) = m.dim();
    let mut x: Vec<f64> = (0..cols)
        .map(|i| 1.0 + 0.01 * (i as f64 * 0.7).sin())
        .collect();
    let mut y = vec![0.0; rows];
    let mut prev = 0.0;
    for _ in 0..200 {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = (0..cols).map(|c| m[(r, c)] * x[c]).sum();
        }
        for (c, xc) in x.iter_mut().enumerate() {
            *xc = (0..rows).map(|r| m[(r, c)] * y[r]).sum();
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for v in x.iter_mut() {
            *v /= norm;
        }
        let sigma = norm.sqrt();
        if (sigma - prev).abs() <= 1e-12 * sigma.max(1.0) {
            return sigma;
        }
        prev = sigma;
    }
    prev
}

fn flatten2(a: &ArrayD<f64>, rows: usize, cols: usize) -> Array2<f64> {
    a.to_owned()
        .into_shape_with_order((rows, cols))
        .expect("field flattens to [channels, points]")
}

fn add_flat(target: &mut ArrayD<f64>, delta2: &Array2<f64>) {
    let flat = target
        .as_slice_mut()
        .expect("owned fields are standard layout");
    let d = delta2.as_slice().expect("contiguous");
    for (t, v) in flat.iter_mut().zip(d) {
        *t += v;
    }
}

/// Coordinate channel rows `[d, points]`: axis coordinates in `[0, 1)`
/// broadcast over the grid in C order.
fn coordinate_rows(grid: &GridSpec) -> Array2<f64> {
    let d = grid.dim();
    let points = grid.num_points();
    let mut out = Array2::<f64>::zeros((d, points));
    let sizes = grid.sizes();
    for axis in 0..d {
        let coords = grid.axis_coords(axis);
        let inner: usize = sizes[axis + 1..].iter().product();
        let outer: usize = sizes[..axis].iter().product();
        for o in 0..outer {
            for (i, &x) in coords.iter().enumerate() {
                let base = (o * sizes[axis] + i) * inner;
                for j in 0..inner {
                    out[(axis, base + j)] = x;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
