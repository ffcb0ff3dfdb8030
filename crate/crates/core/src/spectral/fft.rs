//! Axis-wise complex FFT plumbing on top of rustfft.

use ndarray::{ArrayD, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Forward and inverse plans for each spatial axis of one grid.
pub(crate) struct AxisPlans {
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl AxisPlans {
    pub fn new(sizes: &[usize]) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let fwd = sizes.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = sizes.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        AxisPlans { fwd, inv }
    }

    pub fn forward(&self, axis: usize) -> &Arc<dyn Fft<f64>> {
        &self.fwd[axis]
    }

    pub fn inverse(&self, axis: usize) -> &Arc<dyn Fft<f64>> {
        &self.inv[axis]
    }
}

impl Clone for AxisPlans {
    fn clone(&self) -> Self {
        AxisPlans {
            fwd: self.fwd.clone(),
            inv: self.inv.clone(),
        }
    }
}

/// Runs `plan` over every lane of `data` along `axis`, in place.
///
/// Lanes are staged through a contiguous scratch buffer, so `data` may have
/// any layout. `plan.len()` must equal the axis length.
pub(crate) fn transform_axis(data: &mut ArrayD<Complex64>, axis: usize, plan: &Arc<dyn Fft<f64>>) {
    let n = data.shape()[axis];
    debug_assert_eq!(n, plan.len(), "plan length must match axis length");
    let mut lane_buf = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    for mut lane in data.lanes_mut(Axis(axis)) {
        for (dst, src) in lane_buf.iter_mut().zip(lane.iter()) {
            *dst = *src;
        }
        plan.process_with_scratch(&mut lane_buf, &mut scratch);
        for (dst, src) in lane.iter_mut().zip(lane_buf.iter()) {
            *dst = *src;
        }
    }
}
