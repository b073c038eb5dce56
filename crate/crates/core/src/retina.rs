//! Photoreceptor nonlinearity.
//!
//! The Naka-Rushton curve `I^n / (I^n + I_s^n)` maps nonnegative intensities
//! into `[0, 1)` and is strictly increasing, so it has the closed-form inverse
//! `I_s * (J / (1 - J))^(1/n)`. The saturation response is fixed at 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NakaRushtonParams {
    pub n: f64,
    pub i_s: f64,
}

impl NakaRushtonParams {
    pub fn new(n: f64, i_s: f64) -> Result<Self> {
        let p = Self { n, i_s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n > 0.0) || !self.n.is_finite() {
            return Err(Error::Parameter(format!("Naka-Rushton exponent must be > 0, got {}", self.n)));
        }
        if !(self.i_s > 0.0) || !self.i_s.is_finite() {
            return Err(Error::Parameter(format!("semi-saturation must be > 0, got {}", self.i_s)));
        }
        Ok(())
    }

    #[inline]
    pub fn forward(&self, i: f64) -> f64 {
        // (I/I_s)^n / (1 + (I/I_s)^n) keeps large inputs from overflowing.
        let r = (i / self.i_s).powf(self.n);
        if r.is_infinite() {
            return 1.0;
        }
        r / (1.0 + r)
    }

    #[inline]
    pub fn inverse(&self, j: f64) -> f64 {
        self.i_s * (j / (1.0 - j)).powf(1.0 / self.n)
    }
}

pub fn nr_forward(plane: &Plane, p: &NakaRushtonParams) -> Result<Plane> {
    p.validate()?;
    if let Some((index, &value)) = plane.as_slice().iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::Domain {
            index,
            value,
            domain: "[0, inf)",
        });
    }
    Ok(plane.map(|v| p.forward(v)))
}

/// Inverse curve; values must already lie in `[0, 1)`.
pub fn nr_inverse(plane: &Plane, p: &NakaRushtonParams) -> Result<Plane> {
    p.validate()?;
    if let Some((index, &value)) = plane
        .as_slice()
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0 && **v < 1.0))
    {
        return Err(Error::Domain {
            index,
            value,
            domain: "[0, 1)",
        });
    }
    Ok(plane.map(|v| p.inverse(v)))
}

/// Median pixel value, used as the adaptation level.
///
/// A zero median falls back to the smallest positive value; an image with no
/// positive pixel has no usable adaptation level.
pub fn semi_saturation(plane: &Plane) -> Result<f64> {
    if plane.is_empty() {
        return Err(Error::Degenerate("empty plane".into()));
    }
    if let Some(v) = plane.as_slice().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Parameter(format!("negative or NaN intensity {v}")));
    }
    let mut values = plane.as_slice().to_vec();
    let n = values.len();
    let (_, &mut upper, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    let median = if n % 2 == 1 {
        upper
    } else {
        // The lower middle is the largest element left of the upper one.
        let lower = values[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median > 0.0 {
        return Ok(median);
    }
    values
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Degenerate("all-zero plane has no semi-saturation level".into()))
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `values` and the
/// uniform CDF on `[0, 1]`.
pub fn ks_distance_uniform(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    ks_distance_sorted(&sorted)
}

fn ks_distance_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let cdf = v.clamp(0.0, 1.0);
            let above = (i + 1) as f64 / n - cdf;
            let below = cdf - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const COARSE_SAMPLES: usize = 17;

/// Exponent whose Naka-Rushton mapping brings the histogram closest to uniform.
///
/// A coarse scan locates the best bracket, golden-section search refines it.
/// When the distance does not depend on `n` at all (e.g. a constant image) the
/// midpoint of the range is returned.
pub fn select_exponent(plane: &Plane, i_s: f64, range: (f64, f64)) -> Result<f64> {
    let (lo, hi) = range;
    if !(lo > 0.0) || !(hi <= 5.0) || !(lo < hi) {
        return Err(Error::Parameter(format!(
            "exponent search range must satisfy 0 < lo < hi <= 5, got ({lo}, {hi})"
        )));
    }
    if !(i_s > 0.0) {
        return Err(Error::Parameter(format!("semi-saturation must be > 0, got {i_s}")));
    }
    // Sorting once is enough: the mapping is monotone so order is preserved.
    let mut sorted = plane.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    if let Some(v) = sorted.first().filter(|v| !(**v >= 0.0)) {
        return Err(Error::Parameter(format!("negative or NaN intensity {v}")));
    }
    let cost = |n: f64| {
        let p = NakaRushtonParams { n, i_s };
        let mapped: Vec<f64> = sorted.iter().map(|&v| p.forward(v)).collect();
        ks_distance_sorted(&mapped)
    };

    let step = (hi - lo) / (COARSE_SAMPLES - 1) as f64;
    let samples: Vec<(f64, f64)> = (0..COARSE_SAMPLES)
        .map(|k| {
            let n = lo + step * k as f64;
            (n, cost(n))
        })
        .collect();
    let (worst, best) = samples.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(w, b), s| (w.max(s.1), b.min(s.1)));
    if worst - best <= 1e-12 {
        return Ok(0.5 * (lo + hi));
    }
    let best_k = samples
        .iter()
        .position(|s| s.1 == best)
        .expect("best is one of the samples");
    let mut a = lo + step * best_k.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_k + 1) as f64).min(hi);

    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = cost(x1);
    let mut f2 = cost(x2);
    while b - a > 1e-6 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = cost(x2);
        }
    }
    let mid = 0.5 * (a + b);
    // Never return something worse than the best coarse sample.
    Ok(if cost(mid) <= best { mid } else { samples[best_k].0 })
}

/// Photoreceptor exponent used when no equalising search is requested.
pub const DEFAULT_EXPONENT: f64 = 0.75;
