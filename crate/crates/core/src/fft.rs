//! Multidimensional complex FFT on the flat row-major layout, with a shared
//! plan cache so repeated transforms on one grid reuse twiddle tables.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type PlanKey = (usize, bool);

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().expect("fft plan cache poisoned");
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

fn transform_axis(dims: &[usize], data: &mut [Complex64], axis: usize, inverse: bool) {
    let len = dims[axis];
    let fft = plan(len, inverse);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];

    // Stride of consecutive elements along `axis`, and how many lines there are.
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let inner = stride;
    let block = len * stride;

    if stride == 1 {
        for line in data.chunks_exact_mut(len) {
            fft.process_with_scratch(line, &mut scratch);
        }
        return;
    }

    let mut line = vec![Complex64::default(); len];
    for o in 0..outer {
        let base = o * block;
        for i in 0..inner {
            for k in 0..len {
                line[k] = data[base + k * stride + i];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for k in 0..len {
                data[base + k * stride + i] = line[k];
            }
        }
    }
}

/// Unnormalized forward DFT (`sum x_j e^{-i xi x}`) along every axis.
pub(crate) fn forward_nd(dims: &[usize], data: &mut [Complex64]) {
    debug_assert_eq!(dims.iter().product::<usize>(), data.len());
    for axis in 0..dims.len() {
        transform_axis(dims, data, axis, false);
    }
}

/// Unnormalized inverse DFT (`sum X_k e^{+i xi x}`) along every axis.
pub(crate) fn inverse_nd(dims: &[usize], data: &mut [Complex64]) {
    debug_assert_eq!(dims.iter().product::<usize>(), data.len());
    for axis in 0..dims.len() {
        transform_axis(dims, data, axis, true);
    }
}
