//! Neural-field induction model with a sigmoidal contrast term.
//!
//! The state `J` evolves by explicit Euler steps of
//!
//! ```text
//! J_t(x) = -alpha (J(x) - K_m * J(x)) + gamma R(x) - beta (J(x) - J0(x))
//! R(x)   = sum_y K_c(x - y) sigma(J(x) - J(y))
//! ```
//!
//! until the largest per-pixel update drops below `tol`. With a constant mean
//! level of 1/2 and a flat `K_c` this is the global histogram-equalising LHE
//! flow. With an odd sigmoid the flow is the gradient descent of
//! [`lhe_energy`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorimetry::{display_to_lms, ColorEncoding, ScreenSpec, TriImage, OPPONENT};
use crate::error::{Error, Result};
use crate::kernels::{Convolver, FilterGeometry, FreqFilter, Fft2d, GaussianMix};
use crate::plane::{Mask, Plane};
use crate::retina::{nr_forward, select_exponent, semi_saturation, NakaRushtonParams};
use num_complex::Complex64;

/// Largest image (in pixels) on which pairwise sums are evaluated exactly.
pub const EXACT_PIXEL_LIMIT: usize = 64 * 64;

/// Two-sided saturating sigmoid: `gain_pos tanh(slope d)` for `d >= 0`,
/// `gain_neg tanh(slope d)` below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidSpec {
    pub gain_pos: f64,
    pub gain_neg: f64,
    pub slope: f64,
}

impl SigmoidSpec {
    pub fn symmetric(gain: f64, slope: f64) -> Self {
        Self {
            gain_pos: gain,
            gain_neg: gain,
            slope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain_pos > 0.0) || !(self.gain_neg > 0.0) {
            return Err(Error::Parameter(format!(
                "sigmoid gains must be > 0, got ({}, {})",
                self.gain_pos, self.gain_neg
            )));
        }
        if !(self.slope > 0.0) || !self.slope.is_finite() {
            return Err(Error::Parameter(format!("sigmoid slope must be > 0, got {}", self.slope)));
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.gain_pos == self.gain_neg
    }

    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        let t = (self.slope * d).tanh();
        if d >= 0.0 {
            self.gain_pos * t
        } else {
            self.gain_neg * t
        }
    }

    /// Antiderivative `phi` with `phi(0) = 0`; only meaningful for the odd case.
    #[inline]
    pub fn antiderivative(&self, d: f64) -> f64 {
        let x = (self.slope * d).abs();
        // ln cosh x = x + ln(1 + e^{-2x}) - ln 2, stable for large x
        let ln_cosh = x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2;
        self.gain_pos / self.slope * ln_cosh
    }
}

pub fn sigmoid_eval(d: f64, s: &SigmoidSpec) -> f64 {
    s.eval(d)
}

/// Reference level the mean term pulls toward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MeanKernel {
    /// Local mean `K_m * J` with a Gaussian mixture.
    Mix { mix: GaussianMix },
    /// Mean of the whole image.
    Global,
    /// Fixed level, e.g. 1/2 for the grey-world term.
    Constant { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ContrastKernel {
    Mix { mix: GaussianMix },
    /// Every pair weighted `1 / N`.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ContrastEvaluation {
    /// Exact up to [`EXACT_PIXEL_LIMIT`], quantised above.
    #[default]
    Auto,
    Exact,
    Quantized { levels: usize },
}

pub const DEFAULT_LEVELS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LheiParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k_m: MeanKernel,
    pub k_c: ContrastKernel,
    pub sigmoid: SigmoidSpec,
    pub dt: f64,
    pub tol: f64,
    pub max_iters: usize,
    #[serde(default)]
    pub contrast_evaluation: ContrastEvaluation,
    /// Front-end exponent; `None` selects the histogram-equalising one per channel.
    #[serde(default)]
    pub nr_exponent: Option<f64>,
}

impl LheiParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if let MeanKernel::Mix { mix } = &self.k_m {
            mix.validate()?;
        }
        if let ContrastKernel::Mix { mix } = &self.k_c {
            mix.validate()?;
        }
        if let ContrastEvaluation::Quantized { levels } = self.contrast_evaluation {
            if levels < 2 {
                return Err(Error::Parameter(format!("need at least 2 quantisation levels, got {levels}")));
            }
        }
        if let Some(n) = self.nr_exponent {
            if !(n > 0.0) {
                return Err(Error::Parameter(format!("front-end exponent must be > 0, got {n}")));
            }
        }
        self.sigmoid.validate()
    }
}

/// Spatial contrast weights `K_c(dx, dy)` for offsets up to the image extent.
struct SpatialKernel {
    width: usize,
    height: usize,
    /// `(2w - 1) x (2h - 1)`, origin at `(w - 1, h - 1)`.
    weights: Vec<f64>,
}

impl SpatialKernel {
    fn new(mix: &GaussianMix, width: usize, height: usize) -> Self {
        let sigmas = mix.scaled_sigmas(width.min(height));
        let (kw, kh) = (2 * width - 1, 2 * height - 1);
        let mut weights = vec![0.0; kw * kh];
        // Sampled and renormalised per term so each integrates to its weight
        // over the full offset range, matching the unit-sum convention.
        for (term, &s) in mix.terms.iter().zip(&sigmas) {
            let gx: Vec<f64> = (0..kw)
                .map(|i| {
                    let d = i as f64 - (width as f64 - 1.0);
                    (-d * d / (2.0 * s * s)).exp()
                })
                .collect();
            let gy: Vec<f64> = (0..kh)
                .map(|i| {
                    let d = i as f64 - (height as f64 - 1.0);
                    (-d * d / (2.0 * s * s)).exp()
                })
                .collect();
            let norm = match mix.normalization {
                crate::kernels::GaussianNormalization::UnitSum => {
                    gx.iter().sum::<f64>() * gy.iter().sum::<f64>()
                }
                crate::kernels::GaussianNormalization::UnitPeak => 1.0,
            };
            let scale = term.weight / norm;
            for (j, &vy) in gy.iter().enumerate() {
                for (i, &vx) in gx.iter().enumerate() {
                    weights[j * kw + i] += scale * vx * vy;
                }
            }
        }
        Self {
            width,
            height,
            weights,
        }
    }

    #[inline]
    fn at(&self, dx: isize, dy: isize) -> f64 {
        let kw = 2 * self.width - 1;
        let i = (dx + self.width as isize - 1) as usize;
        let j = (dy + self.height as isize - 1) as usize;
        self.weights[j * kw + i]
    }
}

/// Linear (zero-padded) convolution of planes with a fixed spatial kernel.
struct LinearConvolver {
    fft: Fft2d,
    kernel_hat: Vec<Complex64>,
    width: usize,
    height: usize,
}

impl LinearConvolver {
    fn new(kernel: &SpatialKernel) -> Self {
        let (w, h) = (kernel.width, kernel.height);
        let (pw, ph) = (2 * w, 2 * h);
        let fft = Fft2d::new(pw, ph);
        let mut hat = vec![Complex64::default(); pw * ph];
        for dy in -(h as isize - 1)..=(h as isize - 1) {
            for dx in -(w as isize - 1)..=(w as isize - 1) {
                let x = dx.rem_euclid(pw as isize) as usize;
                let y = dy.rem_euclid(ph as isize) as usize;
                hat[y * pw + x] = Complex64::new(kernel.at(dx, dy), 0.0);
            }
        }
        fft.forward(&mut hat);
        Self {
            fft,
            kernel_hat: hat,
            width: w,
            height: h,
        }
    }

    /// Convolves two planes at once (packed as real and imaginary parts).
    fn apply_pair(&self, a: &[f64], b: Option<&[f64]>) -> (Vec<f64>, Option<Vec<f64>>) {
        let (w, h) = (self.width, self.height);
        let pw = 2 * w;
        let mut buf = vec![Complex64::default(); 4 * w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                buf[y * pw + x] = Complex64::new(a[i], b.map_or(0.0, |b| b[i]));
            }
        }
        self.fft.forward(&mut buf);
        for (c, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *c *= k;
        }
        self.fft.inverse(&mut buf);
        let n = buf.len() as f64;
        let mut ra = Vec::with_capacity(w * h);
        let mut rb = b.map(|_| Vec::with_capacity(w * h));
        for y in 0..h {
            for x in 0..w {
                let c = buf[y * pw + x] / n;
                ra.push(c.re);
                if let Some(rb) = rb.as_mut() {
                    rb.push(c.im);
                }
            }
        }
        (ra, rb)
    }
}

enum ContrastOp {
    ExactMix(SpatialKernel),
    ExactFlat,
    QuantizedMix(LinearConvolver, usize),
    QuantizedFlat(usize),
}

enum MeanOp {
    Local(Convolver, FreqFilter),
    Global,
    Constant(f64),
}

/// Precomputed operators for one image size.
pub struct LheiOperator {
    params: LheiParams,
    width: usize,
    height: usize,
    mean: MeanOp,
    contrast: ContrastOp,
}

impl LheiOperator {
    pub fn new(p: &LheiParams, width: usize, height: usize) -> Result<Self> {
        p.validate()?;
        let n = width * height;
        let exact = match p.contrast_evaluation {
            ContrastEvaluation::Auto => n <= EXACT_PIXEL_LIMIT,
            ContrastEvaluation::Exact => true,
            ContrastEvaluation::Quantized { .. } => false,
        };
        let levels = match p.contrast_evaluation {
            ContrastEvaluation::Quantized { levels } => levels,
            _ => DEFAULT_LEVELS,
        };
        let contrast = match (&p.k_c, exact) {
            (ContrastKernel::Mix { mix }, true) => ContrastOp::ExactMix(SpatialKernel::new(mix, width, height)),
            (ContrastKernel::Mix { mix }, false) => {
                ContrastOp::QuantizedMix(LinearConvolver::new(&SpatialKernel::new(mix, width, height)), levels)
            }
            (ContrastKernel::Flat, true) => ContrastOp::ExactFlat,
            (ContrastKernel::Flat, false) => ContrastOp::QuantizedFlat(levels),
        };
        let mean = match &p.k_m {
            MeanKernel::Mix { mix } => {
                let filter = mix.response(FilterGeometry::for_image(width, height))?;
                MeanOp::Local(Convolver::new(width, height), filter)
            }
            MeanKernel::Global => MeanOp::Global,
            MeanKernel::Constant { level } => MeanOp::Constant(*level),
        };
        Ok(Self {
            params: p.clone(),
            width,
            height,
            mean,
            contrast,
        })
    }

    pub fn params(&self) -> &LheiParams {
        &self.params
    }

    fn check_dims(&self, plane: &Plane) -> Result<()> {
        if plane.dims() != (self.width, self.height) {
            return Err(Error::Dimension {
                expected: (self.width, self.height),
                actual: plane.dims(),
            });
        }
        Ok(())
    }

    /// `J - K_m * J` (or `J - level`).
    fn mean_residual(&self, j: &Plane) -> Result<Vec<f64>> {
        Ok(match &self.mean {
            MeanOp::Local(conv, filter) => {
                let local = conv.apply(j, filter)?;
                j.as_slice().iter().zip(local.as_slice()).map(|(a, b)| a - b).collect()
            }
            MeanOp::Global => {
                let m = j.mean();
                j.as_slice().iter().map(|v| v - m).collect()
            }
            MeanOp::Constant(level) => j.as_slice().iter().map(|v| v - level).collect(),
        })
    }

    /// Contrast term `R(x)`.
    pub fn contrast_term(&self, j: &Plane) -> Result<Plane> {
        self.check_dims(j)?;
        let s = self.params.sigmoid;
        let (w, h) = (self.width, self.height);
        let vals = j.as_slice();
        let n = vals.len();
        let out = match &self.contrast {
            ContrastOp::ExactMix(kernel) => (0..n)
                .into_par_iter()
                .map(|i| {
                    let (xi, yi) = ((i % w) as isize, (i / w) as isize);
                    let ji = vals[i];
                    let mut acc = 0.0;
                    for (k, &jk) in vals.iter().enumerate() {
                        let (xk, yk) = ((k % w) as isize, (k / w) as isize);
                        acc += kernel.at(xi - xk, yi - yk) * s.eval(ji - jk);
                    }
                    acc
                })
                .collect(),
            ContrastOp::ExactFlat => {
                let inv = 1.0 / n as f64;
                vals.par_iter()
                    .map(|&ji| vals.iter().map(|&jk| s.eval(ji - jk)).sum::<f64>() * inv)
                    .collect()
            }
            ContrastOp::QuantizedMix(conv, levels) => quantized_contrast(vals, *levels, &s, |planes| {
                // Pack pairs of level planes into single complex transforms.
                let mut out: Vec<Vec<f64>> = Vec::with_capacity(planes.len());
                for pair in planes.chunks(2) {
                    let (a, b) = conv.apply_pair(&pair[0], pair.get(1).map(|v| v.as_slice()));
                    out.push(a);
                    if let Some(b) = b {
                        out.push(b);
                    }
                }
                out
            }),
            ContrastOp::QuantizedFlat(levels) => quantized_contrast(vals, *levels, &s, |planes| {
                planes
                    .iter()
                    .map(|p| {
                        let m = p.iter().sum::<f64>() / n as f64;
                        vec![m; n]
                    })
                    .collect()
            }),
        };
        Plane::new(w, h, out)
    }

    /// One explicit Euler step; returns the new state and the largest update.
    pub fn step(&self, j: &Plane, j0: &Plane) -> Result<(Plane, f64)> {
        self.check_dims(j)?;
        self.check_dims(j0)?;
        let p = &self.params;
        let mean_res = if p.alpha != 0.0 {
            Some(self.mean_residual(j)?)
        } else {
            None
        };
        let contrast = if p.gamma != 0.0 {
            Some(self.contrast_term(j)?)
        } else {
            None
        };
        let mut max_update: f64 = 0.0;
        let next: Vec<f64> = j
            .as_slice()
            .iter()
            .zip(j0.as_slice())
            .enumerate()
            .map(|(i, (&v, &v0))| {
                let mut rate = -p.beta * (v - v0);
                if let Some(m) = &mean_res {
                    rate -= p.alpha * m[i];
                }
                if let Some(r) = &contrast {
                    rate += p.gamma * r.as_slice()[i];
                }
                let du = p.dt * rate;
                max_update = max_update.max(du.abs());
                v + du
            })
            .collect();
        Ok((Plane::new(self.width, self.height, next)?, max_update))
    }

    /// Energy whose gradient flow is [`LheiOperator::step`], for odd sigmoids on
    /// images up to [`EXACT_PIXEL_LIMIT`] pixels.
    pub fn energy(&self, j: &Plane, j0: &Plane) -> Result<f64> {
        self.check_dims(j)?;
        self.check_dims(j0)?;
        let p = &self.params;
        if !p.sigmoid.is_symmetric() {
            return Err(Error::Parameter(
                "energy is only defined for a symmetric sigmoid".into(),
            ));
        }
        let n = j.len();
        if n > EXACT_PIXEL_LIMIT {
            return Err(Error::TooLarge {
                pixels: n,
                limit: EXACT_PIXEL_LIMIT,
            });
        }
        let vals = j.as_slice();
        let mean_term = if p.alpha == 0.0 {
            0.0
        } else {
            let res = self.mean_residual(j)?;
            match &self.mean {
                // <J, (I - K) J> is the quadratic form whose gradient is (I - K) J.
                MeanOp::Local(..) => vals.iter().zip(&res).map(|(a, r)| a * r).sum::<f64>(),
                MeanOp::Global | MeanOp::Constant(_) => res.iter().map(|r| r * r).sum::<f64>(),
            }
        };
        let s = p.sigmoid;
        let w = self.width;
        let pair_sum: f64 = if p.gamma == 0.0 {
            0.0
        } else {
            match &self.params.k_c {
                ContrastKernel::Mix { mix } => {
                    let ContrastOp::ExactMix(kernel) = &self.contrast else {
                        return energy_with_fresh_kernel(self, mix, j, j0);
                    };
                    pairwise_sum(vals, w, |dx, dy| kernel.at(dx, dy), &s)
                }
                ContrastKernel::Flat => {
                    let inv = 1.0 / n as f64;
                    pairwise_sum(vals, w, |_, _| inv, &s)
                }
            }
        };
        let fidelity: f64 = vals.iter().zip(j0.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
        // Sum over ordered pairs counts every unordered pair twice.
        Ok(0.5 * p.alpha * mean_term - 0.5 * p.gamma * pair_sum + 0.5 * p.beta * fidelity)
    }
}

fn energy_with_fresh_kernel(op: &LheiOperator, mix: &GaussianMix, j: &Plane, j0: &Plane) -> Result<f64> {
    let mut exact = op.params.clone();
    exact.contrast_evaluation = ContrastEvaluation::Exact;
    exact.k_c = ContrastKernel::Mix { mix: mix.clone() };
    LheiOperator::new(&exact, op.width, op.height)?.energy(j, j0)
}

fn pairwise_sum(vals: &[f64], w: usize, kernel: impl Fn(isize, isize) -> f64 + Sync, s: &SigmoidSpec) -> f64 {
    (0..vals.len())
        .into_par_iter()
        .map(|i| {
            let (xi, yi) = ((i % w) as isize, (i / w) as isize);
            let mut acc = 0.0;
            for (k, &jk) in vals.iter().enumerate() {
                let (xk, yk) = ((k % w) as isize, (k / w) as isize);
                acc += kernel(xi - xk, yi - yk) * s.antiderivative(vals[i] - jk);
            }
            acc
        })
        .sum()
}

/// Level-set approximation: `R(x) ~ sum_k sigma(J(x) - l_k) (K_c * w_k)(x)`,
/// with `w_k` the linear-interpolation weights of each pixel on the levels.
fn quantized_contrast(
    vals: &[f64],
    levels: usize,
    s: &SigmoidSpec,
    smooth: impl Fn(&[Vec<f64>]) -> Vec<Vec<f64>>,
) -> Vec<f64> {
    let n = vals.len();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; n];
    }
    let step = (hi - lo) / (levels - 1) as f64;
    let mut weights = vec![vec![0.0; n]; levels];
    for (i, &v) in vals.iter().enumerate() {
        let t = ((v - lo) / step).clamp(0.0, (levels - 1) as f64);
        let k = (t.floor() as usize).min(levels - 2);
        let frac = t - k as f64;
        weights[k][i] += 1.0 - frac;
        weights[k + 1][i] += frac;
    }
    let smoothed = smooth(&weights);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let v = vals[i];
            smoothed
                .iter()
                .enumerate()
                .map(|(k, a)| s.eval(v - (lo + step * k as f64)) * a[i])
                .sum()
        })
        .collect()
}

pub fn lhei_step(j: &Plane, j0: &Plane, p: &LheiParams) -> Result<(Plane, f64)> {
    j.ensure_same_dims(j0)?;
    LheiOperator::new(p, j.width(), j.height())?.step(j, j0)
}

pub fn lhe_energy(j: &Plane, j0: &Plane, p: &LheiParams) -> Result<f64> {
    j.ensure_same_dims(j0)?;
    if j.len() > EXACT_PIXEL_LIMIT {
        return Err(Error::TooLarge {
            pixels: j.len(),
            limit: EXACT_PIXEL_LIMIT,
        });
    }
    LheiOperator::new(p, j.width(), j.height())?.energy(j, j0)
}

#[derive(Debug, Clone)]
pub struct LheiRun {
    pub state: Plane,
    pub iterations: usize,
    /// Energy before the first step and after each step; empty when the energy
    /// is not defined for the configuration.
    pub energy_trace: Vec<f64>,
    pub converged: bool,
    pub last_update: f64,
}

/// Iterates from `J = J0` to a steady state.
///
/// Hitting `max_iters` is reported through `converged = false`, not an error.
pub fn lhei_run(j0: &Plane, p: &LheiParams) -> Result<LheiRun> {
    let op = LheiOperator::new(p, j0.width(), j0.height())?;
    run_with(&op, j0)
}

pub fn run_with(op: &LheiOperator, j0: &Plane) -> Result<LheiRun> {
    let p = op.params();
    let track_energy = p.sigmoid.is_symmetric() && j0.len() <= EXACT_PIXEL_LIMIT;
    let mut energy_trace = Vec::new();
    if track_energy {
        energy_trace.push(op.energy(j0, j0)?);
    }
    let mut state = j0.clone();
    let mut iterations = 0;
    let mut last_update = f64::INFINITY;
    let mut converged = false;
    while iterations < p.max_iters {
        let (next, update) = op.step(&state, j0)?;
        last_update = update;
        if update < p.tol {
            converged = true;
            break;
        }
        state = next;
        iterations += 1;
        if track_energy {
            energy_trace.push(op.energy(&state, j0)?);
        }
    }
    Ok(LheiRun {
        state,
        iterations,
        energy_trace,
        converged,
        last_update,
    })
}

/// Photoreceptor responses of a display image: LMS through Naka-Rushton with
/// each channel's median as semi-saturation.
pub fn retinal_front_end(image: &TriImage, screen: &ScreenSpec, exponent: Option<f64>) -> Result<[Plane; 3]> {
    let lms = display_to_lms(image, screen)?;
    let mut out: Vec<Plane> = Vec::with_capacity(3);
    for c in 0..3 {
        let plane = lms.channel(c).map(|v| v.max(0.0));
        let i_s = semi_saturation(&plane)?;
        let n = match exponent {
            Some(n) => n,
            None => select_exponent(&plane, i_s, (0.1, 3.0))?,
        };
        out.push(nr_forward(&plane, &NakaRushtonParams::new(n, i_s)?)?);
    }
    Ok(out.try_into().expect("three channels"))
}

/// Runs the model on each photoreceptor channel of a display image and returns
/// the steady state in opponent coordinates.
pub fn lhei_process(image: &TriImage, screen: &ScreenSpec, p: &LheiParams) -> Result<TriImage> {
    image.expect_encoding(ColorEncoding::DisplayRGB)?;
    let responses = retinal_front_end(image, screen, p.nr_exponent)?;
    let op = LheiOperator::new(p, image.width(), image.height())?;
    let states: Vec<Plane> = responses
        .iter()
        .map(|j0| run_with(&op, j0).map(|r| r.state))
        .collect::<Result<_>>()?;
    let lms = TriImage::new(states.try_into().expect("three channels"), ColorEncoding::CAT02LMS)?;
    Ok(lms.map_pixels(ColorEncoding::Opponent, |v| OPPONENT.apply(v)))
}

/// Mean opponent difference (test minus comparison) over the ring mask after
/// both images reach their steady states.
pub fn ring_difference(
    test: &TriImage,
    comparison: &TriImage,
    mask: &Mask,
    screen: &ScreenSpec,
    p: &LheiParams,
) -> Result<[f64; 3]> {
    if test.dims() != comparison.dims() {
        return Err(Error::Dimension {
            expected: test.dims(),
            actual: comparison.dims(),
        });
    }
    if mask.count() == 0 {
        return Err(Error::Parameter("test-ring mask is empty".into()));
    }
    let a = lhei_process(test, screen, p)?;
    let b = lhei_process(comparison, screen, p)?;
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let ma = a.channel(c).masked_mean(mask).ok_or_else(|| Error::Dimension {
            expected: a.dims(),
            actual: mask.dims(),
        })?;
        let mb = b.channel(c).masked_mean(mask).expect("same dims as test");
        *o = ma - mb;
    }
    Ok(out)
}

/// S-opponent (`op2`) shift between test and comparison rings.
pub fn monnier_shift(
    test: &TriImage,
    comparison: &TriImage,
    mask: &Mask,
    screen: &ScreenSpec,
    p: &LheiParams,
) -> Result<f64> {
    Ok(ring_difference(test, comparison, mask, screen, p)?[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_params() -> LheiParams {
        LheiParams {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.4,
            k_m: MeanKernel::Mix {
                mix: GaussianMix::new(&[(0.6, 20.0), (0.4, 80.0)]).unwrap(),
            },
            k_c: ContrastKernel::Mix {
                mix: GaussianMix::new(&[(0.7, 15.0), (0.3, 60.0)]).unwrap(),
            },
            sigmoid: SigmoidSpec::symmetric(1.0, 5.0),
            dt: 0.05,
            tol: 1e-5,
            max_iters: 2000,
            contrast_evaluation: ContrastEvaluation::Auto,
            nr_exponent: Some(0.75),
        }
    }

    #[test]
    fn sigmoid_properties() {
        let s = SigmoidSpec {
            gain_pos: 1.0,
            gain_neg: 0.5,
            slope: 3.0,
        };
        assert_eq!(s.eval(0.0), 0.0);
        assert!((s.eval(100.0) - 1.0).abs() < 1e-12);
        assert!((s.eval(-100.0) + 0.5).abs() < 1e-12);
        let odd = SigmoidSpec::symmetric(0.8, 2.0);
        for d in [0.01, 0.3, 2.0] {
            assert_eq!(odd.eval(-d), -odd.eval(d));
        }
    }

    #[test]
    fn antiderivative_matches_sigmoid() {
        let s = SigmoidSpec::symmetric(0.7, 4.0);
        for d in [-1.0, -0.2, 0.0, 0.05, 0.6, 3.0] {
            let h = 1e-6;
            let num = (s.antiderivative(d + h) - s.antiderivative(d - h)) / (2.0 * h);
            assert!((num - s.eval(d)).abs() < 1e-8, "d={d}");
        }
        assert_eq!(s.antiderivative(0.0), 0.0);
    }

    #[test]
    fn fidelity_only_fixed_point() {
        let mut p = base_params();
        p.alpha = 0.0;
        p.gamma = 0.0;
        let j0 = Plane::from_fn(6, 5, |x, y| (x + 2 * y) as f64 / 20.0);
        let (_, update) = lhei_step(&j0, &j0, &p).unwrap();
        assert_eq!(update, 0.0);
    }

    #[test]
    fn constant_state_has_zero_contrast() {
        let p = base_params();
        let op = LheiOperator::new(&p, 8, 8).unwrap();
        let r = op.contrast_term(&Plane::filled(8, 8, 0.37)).unwrap();
        assert!(r.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_pixel_step_matches_hand_computation() {
        // Two pixels, global mean, flat contrast kernel (weight 1/2 per pair).
        let s = SigmoidSpec {
            gain_pos: 1.0,
            gain_neg: 0.5,
            slope: 2.0,
        };
        let p = LheiParams {
            alpha: 0.5,
            beta: 2.0,
            gamma: 0.3,
            k_m: MeanKernel::Global,
            k_c: ContrastKernel::Flat,
            sigmoid: s,
            dt: 0.1,
            tol: 1e-9,
            max_iters: 10,
            contrast_evaluation: ContrastEvaluation::Exact,
            nr_exponent: None,
        };
        let j = Plane::new(2, 1, vec![0.2, 0.6]).unwrap();
        let j0 = Plane::new(2, 1, vec![0.3, 0.5]).unwrap();
        let (next, update) = lhei_step(&j, &j0, &p).unwrap();
        let mean = 0.4;
        let r0 = 0.5 * (1.0 * 0.0 + 0.5 * (2.0f64 * -0.4).tanh());
        let r1 = 0.5 * (1.0 * (2.0f64 * 0.4).tanh() + 0.0);
        let e0 = 0.2 + 0.1 * (-0.5 * (0.2 - mean) + 0.3 * r0 - 2.0 * (0.2 - 0.3));
        let e1 = 0.6 + 0.1 * (-0.5 * (0.6 - mean) + 0.3 * r1 - 2.0 * (0.6 - 0.5));
        assert!((next.get(0, 0) - e0).abs() < 1e-14);
        assert!((next.get(1, 0) - e1).abs() < 1e-14);
        assert!((update - (e0 - 0.2).abs().max((e1 - 0.6).abs())).abs() < 1e-14);
    }

    #[test]
    fn constant_input_is_already_steady() {
        let p = base_params();
        let run = lhei_run(&Plane::filled(12, 12, 0.42), &p).unwrap();
        assert!(run.converged);
        assert_eq!(run.iterations, 0);
        assert!(run.state.as_slice().iter().all(|&v| (v - 0.42).abs() < 1e-12));
    }

    #[test]
    fn energy_examples() {
        let p = base_params();
        let c = Plane::filled(8, 8, 0.3);
        assert!(lhe_energy(&c, &c, &p).unwrap().abs() < 1e-12);

        let mut fid = base_params();
        fid.alpha = 0.0;
        fid.gamma = 0.0;
        fid.beta = 3.0;
        let j = Plane::from_fn(4, 4, |x, y| (x * y) as f64 / 9.0);
        let j0 = Plane::filled(4, 4, 0.1);
        let expected: f64 = 1.5 * j.as_slice().iter().map(|v| (v - 0.1) * (v - 0.1)).sum::<f64>();
        assert!((lhe_energy(&j, &j0, &fid).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn energy_rejects_asymmetric_and_large() {
        let mut p = base_params();
        p.sigmoid.gain_neg = 0.5;
        let j = Plane::filled(4, 4, 0.2);
        assert!(lhe_energy(&j, &j, &p).is_err());
        let big = Plane::filled(65, 64, 0.2);
        assert!(matches!(lhe_energy(&big, &big, &base_params()), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn one_step_lowers_energy() {
        let p = base_params();
        let j0 = Plane::from_fn(16, 16, |x, y| {
            0.5 + 0.3 * ((x as f64 * 1.3).sin() * (y as f64 * 0.7 + 0.4).cos())
        });
        let e0 = lhe_energy(&j0, &j0, &p).unwrap();
        let (j1, _) = lhei_step(&j0, &j0, &p).unwrap();
        let e1 = lhe_energy(&j1, &j0, &p).unwrap();
        assert!(e1 < e0, "{e1} >= {e0}");
    }

    #[test]
    fn odd_sigmoid_contrast_sums_to_zero_with_flat_kernel() {
        let mut p = base_params();
        p.k_c = ContrastKernel::Flat;
        let j = Plane::from_fn(10, 10, |x, y| ((x * 13 + y * 7) % 17) as f64 / 17.0);
        let r = LheiOperator::new(&p, 10, 10).unwrap().contrast_term(&j).unwrap();
        assert!(r.as_slice().iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn quantized_contrast_tracks_exact() {
        let mut p = base_params();
        let j = Plane::from_fn(32, 32, |x, y| {
            0.5 + 0.35 * ((x as f64 * 0.45).sin() * (y as f64 * 0.3).cos()) + 0.05 * ((x * y) % 5) as f64 / 5.0
        });
        p.contrast_evaluation = ContrastEvaluation::Exact;
        let exact = LheiOperator::new(&p, 32, 32).unwrap().contrast_term(&j).unwrap();
        p.contrast_evaluation = ContrastEvaluation::Quantized { levels: 256 };
        let approx = LheiOperator::new(&p, 32, 32).unwrap().contrast_term(&j).unwrap();
        let dev = exact.max_abs_diff(&approx);
        assert!(dev < 1e-3, "max deviation {dev}");

        p.k_c = ContrastKernel::Flat;
        p.contrast_evaluation = ContrastEvaluation::Exact;
        let exact = LheiOperator::new(&p, 32, 32).unwrap().contrast_term(&j).unwrap();
        p.contrast_evaluation = ContrastEvaluation::Quantized { levels: 256 };
        let approx = LheiOperator::new(&p, 32, 32).unwrap().contrast_term(&j).unwrap();
        assert!(exact.max_abs_diff(&approx) < 1e-3);
    }
}
