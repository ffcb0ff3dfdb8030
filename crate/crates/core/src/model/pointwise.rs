//! Two-layer pointwise (1x1) networks applied independently at each grid
//! point, with their reverse-mode gradients.

use super::params::Seg;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Elementwise nonlinearity used between affine layers and (in non-final
/// blocks) after the block update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `x * sigmoid(x)`; slope stays below 1.1 everywhere.
    Silu,
    /// Pass-through, used by linearity probes.
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Identity => 1.0,
        }
    }

    /// Slope bound used in Lipschitz accounting.
    pub fn slope_bound(self) -> f64 {
        match self {
            Activation::Silu => 1.1,
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Segment handles and dimensions for one two-layer net.
#[derive(Debug, Clone, Copy)]
pub struct NetSegs {
    pub w1: Seg,
    pub b1: Seg,
    pub w2: Seg,
    pub b2: Seg,
    pub in_ch: usize,
    pub hidden: usize,
    pub out_ch: usize,
}

impl NetSegs {
    pub fn register(
        b: &mut super::params::ParamStoreBuilder,
        name: &str,
        in_ch: usize,
        hidden: usize,
        out_ch: usize,
    ) -> Self {
        NetSegs {
            w1: b.register(&format!("{name}.w1"), &[hidden, in_ch]),
            b1: b.register(&format!("{name}.b1"), &[hidden]),
            w2: b.register(&format!("{name}.w2"), &[out_ch, hidden]),
            b2: b.register(&format!("{name}.b2"), &[out_ch]),
            in_ch,
            hidden,
            out_ch,
        }
    }

    pub fn param_count(in_ch: usize, hidden: usize, out_ch: usize) -> usize {
        hidden * in_ch + hidden + out_ch * hidden + out_ch
    }
}

/// Intermediates kept by the forward pass for the backward pass.
pub struct NetCache {
    pub x: Array2<f64>,
    pub z1: Array2<f64>,
    pub h: Array2<f64>,
}

fn mat(params: &[f64], seg: Seg, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &params[seg.range()])
        .expect("segment length matches registered shape")
}

/// `y = W2 act(W1 x + b1) + b2` for a `[in_ch, points]` input.
pub fn net_forward(
    params: &[f64],
    segs: &NetSegs,
    act: Activation,
    x: &Array2<f64>,
) -> (Array2<f64>, NetCache) {
    debug_assert_eq!(x.nrows(), segs.in_ch);
    let w1 = mat(params, segs.w1, segs.hidden, segs.in_ch);
    let w2 = mat(params, segs.w2, segs.out_ch, segs.hidden);
    let b1 = &params[segs.b1.range()];
    let b2 = &params[segs.b2.range()];

    let mut z1 = w1.dot(x);
    for (mut row, &b) in z1.axis_iter_mut(Axis(0)).zip(b1.iter()) {
        row.mapv_inplace(|v| v + b);
    }
    let h = z1.mapv(|v| act.apply(v));
    let mut y = w2.dot(&h);
    for (mut row, &b) in y.axis_iter_mut(Axis(0)).zip(b2.iter()) {
        row.mapv_inplace(|v| v + b);
    }
    (
        y,
        NetCache {
            x: x.clone(),
            z1,
            h,
        },
    )
}

/// Accumulates parameter gradients into `grad` and returns the input
/// gradient. `grad` mirrors the flat parameter layout.
pub fn net_backward(
    params: &[f64],
    segs: &NetSegs,
    act: Activation,
    cache: &NetCache,
    y_bar: &Array2<f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    let w1 = mat(params, segs.w1, segs.hidden, segs.in_ch);
    let w2 = mat(params, segs.w2, segs.out_ch, segs.hidden);

    let g_w2 = y_bar.dot(&cache.h.t());
    accumulate(grad, segs.w2, g_w2.as_slice().expect("contiguous"));
    let g_b2: Array1<f64> = y_bar.sum_axis(Axis(1));
    accumulate(grad, segs.b2, g_b2.as_slice().expect("contiguous"));

    let h_bar = w2.t().dot(y_bar);
    let mut z1_bar = h_bar;
    z1_bar.zip_mut_with(&cache.z1, |g, &z| *g *= act.derivative(z));

    let g_w1 = z1_bar.dot(&cache.x.t());
    accumulate(grad, segs.w1, g_w1.as_slice().expect("contiguous"));
    let g_b1: Array1<f64> = z1_bar.sum_axis(Axis(1));
    accumulate(grad, segs.b1, g_b1.as_slice().expect("contiguous"));

    w1.t().dot(&z1_bar)
}

fn accumulate(grad: &mut [f64], seg: Seg, values: &[f64]) {
    debug_assert_eq!(seg.len, values.len());
    for (g, v) in grad[seg.range()].iter_mut().zip(values) {
        *g += v;
    }
}

/// Jacobian of the pointwise map at one input column, `[out_ch, in_ch]`.
pub fn net_jacobian(params: &[f64], segs: &NetSegs, act: Activation, x: &[f64]) -> Array2<f64> {
    debug_assert_eq!(x.len(), segs.in_ch);
    let w1 = mat(params, segs.w1, segs.hidden, segs.in_ch);
    let w2 = mat(params, segs.w2, segs.out_ch, segs.hidden);
    let b1 = &params[segs.b1.range()];
    let mut dz = Array1::<f64>::zeros(segs.hidden);
    for i in 0..segs.hidden {
        let z = w1.row(i).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[i];
        dz[i] = act.derivative(z);
    }
    // W2 * diag(act'(z1)) * W1
    let mut scaled = w1.to_owned();
    for (mut row, &d) in scaled.axis_iter_mut(Axis(0)).zip(dz.iter()) {
        row.mapv_inplace(|v| v * d);
    }
    w2.dot(&scaled)
}
