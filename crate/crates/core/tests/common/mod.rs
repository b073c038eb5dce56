//! Deterministic synthetic test images shared by the integration tests.

#![allow(dead_code)]

use induction_core::colorimetry::{ColorEncoding, TriImage};
use induction_core::plane::Plane;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sum of randomly oriented sinusoids with 1/f amplitudes.
fn pink_field(rng: &mut ChaCha8Rng, w: usize, h: usize, components: usize) -> Vec<f64> {
    let side = w.min(h) as f64;
    let waves: Vec<(f64, f64, f64, f64)> = (0..components)
        .map(|_| {
            let f = (rng.gen_range(0.0..(side / 6.0).ln())).exp();
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU * f / side;
            (k * theta.cos(), k * theta.sin(), phase, 1.0 / f)
        })
        .collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = waves
                .iter()
                .map(|(kx, ky, ph, a)| a * (kx * x as f64 + ky * y as f64 + ph).sin())
                .sum();
        }
    }
    out
}

/// A photograph-like display image: correlated 1/f texture in luminance and
/// colour plus a few flat-coloured discs, scaled into `[0.03, 0.97]`.
pub fn natural_image(seed: u64, w: usize, h: usize) -> TriImage {
    let mut rng = rng(seed);
    let lum = pink_field(&mut rng, w, h, 24);
    let rg = pink_field(&mut rng, w, h, 12);
    let by = pink_field(&mut rng, w, h, 12);
    let discs: Vec<(f64, f64, f64, [f64; 3])> = (0..5)
        .map(|_| {
            (
                rng.gen_range(0.0..w as f64),
                rng.gen_range(0.0..h as f64),
                rng.gen_range(0.05..0.2) * w.min(h) as f64,
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            )
        })
        .collect();
    let mut raw: [Vec<f64>; 3] = Default::default();
    for i in 0..w * h {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let mut px = [lum[i] + rg[i] * 0.4, lum[i] - rg[i] * 0.4, lum[i] + by[i] * 0.5];
        for (cx, cy, r, c) in &discs {
            if (x - cx).hypot(y - cy) < *r {
                for (p, v) in px.iter_mut().zip(c) {
                    *p = 0.3 * *p + v;
                }
            }
        }
        for (ch, v) in raw.iter_mut().zip(px) {
            ch.push(v);
        }
    }
    let lo = raw.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = 0.94 / (hi - lo);
    let planes = raw.map(|ch| Plane::new(w, h, ch.iter().map(|v| 0.03 + (v - lo) * scale).collect()).unwrap());
    TriImage::new(planes, ColorEncoding::DisplayRGB).unwrap()
}

/// A smooth positive plane in `[0.1, 0.9]`.
pub fn smooth_plane(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Plane {
    let terms: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.5..4.0) * std::f64::consts::TAU / w as f64,
                rng.gen_range(0.5..4.0) * std::f64::consts::TAU / h as f64,
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.02..0.1),
            )
        })
        .collect();
    Plane::from_fn(w, h, |x, y| {
        0.5 + terms
            .iter()
            .map(|(fx, fy, ph, a)| a * (fx * x as f64 + fy * y as f64 + ph).sin())
            .sum::<f64>()
    })
}
