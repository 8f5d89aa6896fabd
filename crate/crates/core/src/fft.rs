//! Minimal 3-D FFT on top of rustfft, used by the spectrum estimator and the
//! Gaussian random field generator.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 3-D DFT over a row-major `n0 x n1 x n2` grid.
/// Forward uses the e^{-i...} kernel, inverse e^{+i...}; neither normalizes.
pub(crate) fn fft3(data: &mut [Complex64], dims: [usize; 3], inverse: bool) {
    let [n0, n1, n2] = dims;
    assert_eq!(data.len(), n0 * n1 * n2);
    let mut planner = FftPlanner::new();

    // Axis 2: contiguous lines.
    let fft2 = if inverse { planner.plan_fft_inverse(n2) } else { planner.plan_fft_forward(n2) };
    for line in data.chunks_exact_mut(n2) {
        fft2.process(line);
    }

    // Axis 1: stride n2 within each n1 x n2 plane.
    let fft1 = if inverse { planner.plan_fft_inverse(n1) } else { planner.plan_fft_forward(n1) };
    let mut scratch = vec![Complex64::default(); n1];
    for i0 in 0..n0 {
        let plane = &mut data[i0 * n1 * n2..(i0 + 1) * n1 * n2];
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                scratch[i1] = plane[i1 * n2 + i2];
            }
            fft1.process(&mut scratch);
            for i1 in 0..n1 {
                plane[i1 * n2 + i2] = scratch[i1];
            }
        }
    }

    // Axis 0: stride n1 * n2.
    let fft0 = if inverse { planner.plan_fft_inverse(n0) } else { planner.plan_fft_forward(n0) };
    let mut scratch = vec![Complex64::default(); n0];
    let stride = n1 * n2;
    for rest in 0..stride {
        for i0 in 0..n0 {
            scratch[i0] = data[i0 * stride + rest];
        }
        fft0.process(&mut scratch);
        for i0 in 0..n0 {
            data[i0 * stride + rest] = scratch[i0];
        }
    }
}
