//! Row/column 2-D FFT over row-major complex buffers.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

pub struct Fft2d {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Unnormalised inverse; callers divide by `width * height`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.width * self.height, "buffer does not match FFT size");
        process_rows(data, self.width, rows);
        let mut t = vec![Complex64::default(); data.len()];
        transpose(data, &mut t, self.width, self.height);
        process_rows(&mut t, self.height, cols);
        transpose(&t, data, self.height, self.width);
    }
}

fn process_rows(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    let scratch_len = fft.get_inplace_scratch_len();
    data.par_chunks_mut(len).for_each_init(
        || vec![Complex64::default(); scratch_len],
        |scratch, row| fft.process_with_scratch(row, scratch),
    );
}

const BLOCK: usize = 32;

/// `src` is `width x height` row-major; `dst` receives `height x width`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], width: usize, height: usize) {
    dst.par_chunks_mut(height * BLOCK)
        .enumerate()
        .for_each(|(bi, chunk)| {
            let x0 = bi * BLOCK;
            let rows = chunk.len() / height;
            for y0 in (0..height).step_by(BLOCK) {
                let y1 = (y0 + BLOCK).min(height);
                for dx in 0..rows {
                    let x = x0 + dx;
                    for y in y0..y1 {
                        chunk[dx * height + y] = src[y * width + x];
                    }
                }
            }
        });
}

/// Signed DFT frequency of bin `k` on a grid of length `n`, in cycles per sample.
#[inline]
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    if 2 * k < n {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}
