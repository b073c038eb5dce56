//! Mirror-padded convolution through cosine transforms.
//!
//! The DFT of an image reflected about its edges is a phase factor times the
//! image's type-II DCT. Multiplying by a response that is even along each
//! axis and transforming back reduces to a type-III DCT of the product, so the
//! doubled grid is never materialised.

use std::sync::Arc;

use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};

pub(crate) struct MirrorDct {
    width: usize,
    height: usize,
    rows: Arc<dyn TransformType2And3<f64>>,
    cols: Arc<dyn TransformType2And3<f64>>,
}

#[derive(Clone, Copy)]
enum Kind {
    Forward,
    Inverse,
}

fn process(data: &mut [f64], dct: &Arc<dyn TransformType2And3<f64>>, kind: Kind) {
    let len = dct.len();
    let scratch_len = dct.get_scratch_len();
    data.par_chunks_mut(len).for_each_init(
        || vec![0.0; scratch_len],
        |scratch, line| match kind {
            Kind::Forward => dct.process_dct2_with_scratch(line, scratch),
            Kind::Inverse => dct.process_dct3_with_scratch(line, scratch),
        },
    );
}

const BLOCK: usize = 32;

/// `src` is `width x height` row-major; the result is `height x width`.
fn transpose(src: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut dst = vec![0.0; src.len()];
    dst.par_chunks_mut(height * BLOCK).enumerate().for_each(|(bi, chunk)| {
        let x0 = bi * BLOCK;
        let rows = chunk.len() / height;
        for y0 in (0..height).step_by(BLOCK) {
            for dx in 0..rows {
                for y in y0..(y0 + BLOCK).min(height) {
                    chunk[dx * height + y] = src[y * width + x0 + dx];
                }
            }
        }
    });
    dst
}

impl MirrorDct {
    pub(crate) fn new(width: usize, height: usize) -> Self {
        let mut planner = DctPlanner::new();
        Self {
            width,
            height,
            rows: planner.plan_dct2(width),
            cols: planner.plan_dct2(height),
        }
    }

    /// Filters a `width x height` plane with `response`, sampled row-major on
    /// the `2 width x 2 height` DFT grid. Only bins `u < width, v < height`
    /// are read.
    pub(crate) fn apply(&self, plane: &[f64], response: &[f64]) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let grid_w = 2 * w;
        let mut buf = plane.to_vec();
        process(&mut buf, &self.rows, Kind::Forward);
        let mut t = transpose(&buf, w, h);
        process(&mut t, &self.cols, Kind::Forward);
        let scale = 4.0 / (w * h) as f64;
        t.par_chunks_mut(h).enumerate().for_each(|(u, col)| {
            for (v, c) in col.iter_mut().enumerate() {
                *c *= response[v * grid_w + u] * scale;
            }
        });
        process(&mut t, &self.cols, Kind::Inverse);
        let mut out = transpose(&t, h, w);
        process(&mut out, &self.rows, Kind::Inverse);
        out
    }
}
