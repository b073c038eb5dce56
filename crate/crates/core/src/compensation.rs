//! Invertible induction model and screen-to-screen compensation.
//!
//! The model is a Naka-Rushton stage followed by a linear filter. Compensating
//! from screen A to screen B applies A's forward model and B's inverse, which
//! collapses to a single filter `S_C` between the two nonlinear stages.

use serde::{Deserialize, Serialize};

use crate::colorimetry::{
    cat02_inverse, xyz_to_lab_pixel, lab_to_xyz_pixel, ColorEncoding, ScreenSpec, TriImage, CAT02, OPPONENT,
    OPPONENT_INV,
};
use crate::error::{Error, Result};
use crate::kernels::{
    convolve_freq, convolve_freq_pair, validate_stability, FilterCache, FilterGeometry, FreqFilter, GaussianMix,
    RationalFilterCoeffs,
};
use crate::plane::Plane;
use crate::retina::{nr_forward, nr_inverse, semi_saturation, NakaRushtonParams};

/// Upper clip margin below 1, keeping values inside the inverse curve's domain.
pub const CLIP_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationParams {
    pub n_a: f64,
    pub n_b: f64,
    pub achromatic: RationalFilterCoeffs,
    pub chromatic: RationalFilterCoeffs,
    pub apply_achromatic_kernel: bool,
    pub replace_lstar: bool,
}

pub const PRESET_NAMES: [&str; 4] = ["identity", "paper-achromatic", "paper-chromatic-set4", "paper-natural"];

fn achromatic_kf() -> GaussianMix {
    GaussianMix::new(&[(-1.14, 156.0), (1.86, 29.0), (0.13, 3.0), (-1.76, 40.0)]).expect("valid mixture")
}

fn chromatic_kf() -> GaussianMix {
    GaussianMix::new(&[(-1.53, 103.0), (-0.67, 43.0), (0.67, 4.0), (0.34, 26.0)]).expect("valid mixture")
}

fn achromatic_coeffs() -> RationalFilterCoeffs {
    RationalFilterCoeffs {
        c1: 3.94,
        c2: 2.54,
        d1: 2.46,
        d2: 2.72,
        k_f: achromatic_kf(),
    }
}

fn chromatic_coeffs() -> RationalFilterCoeffs {
    RationalFilterCoeffs {
        c1: 2.81,
        c2: 1.30,
        d1: 2.27,
        d2: 1.60,
        k_f: chromatic_kf(),
    }
}

impl CompensationParams {
    /// All-pass filters and equal exponents.
    pub fn identity() -> Self {
        let mix = GaussianMix::new(&[(1.0, 1.0)]).expect("valid mixture");
        Self {
            n_a: 0.75,
            n_b: 0.75,
            achromatic: RationalFilterCoeffs::identity(mix.clone()),
            chromatic: RationalFilterCoeffs::identity(mix),
            apply_achromatic_kernel: true,
            replace_lstar: false,
        }
    }

    /// Achromatic fit: luminance kernel only, chromatic channels untouched.
    pub fn paper_achromatic() -> Self {
        Self {
            n_a: 0.7861,
            n_b: 0.7063,
            achromatic: achromatic_coeffs(),
            chromatic: RationalFilterCoeffs::identity(achromatic_kf()),
            apply_achromatic_kernel: true,
            replace_lstar: false,
        }
    }

    /// Chromatic fit (colour set 4 held out): opponent-colour kernel with the
    /// lightness of the input restored afterwards.
    pub fn paper_chromatic_set4() -> Self {
        Self {
            n_a: 0.5187,
            n_b: 0.4439,
            achromatic: RationalFilterCoeffs::identity(chromatic_kf()),
            chromatic: chromatic_coeffs(),
            apply_achromatic_kernel: false,
            replace_lstar: true,
        }
    }

    /// Both fitted kernels together, as used on natural images.
    pub fn paper_natural() -> Self {
        Self {
            n_a: 0.7861,
            n_b: 0.7063,
            achromatic: achromatic_coeffs(),
            chromatic: chromatic_coeffs(),
            apply_achromatic_kernel: true,
            replace_lstar: false,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(Self::identity()),
            "paper-achromatic" => Some(Self::paper_achromatic()),
            "paper-chromatic-set4" => Some(Self::paper_chromatic_set4()),
            "paper-natural" => Some(Self::paper_natural()),
            _ => None,
        }
    }

    /// Parameters of the reverse direction: exponents swapped, filters inverted.
    pub fn inverted(&self) -> Self {
        Self {
            n_a: self.n_b,
            n_b: self.n_a,
            achromatic: self.achromatic.inverted(),
            chromatic: self.chromatic.inverted(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_a", self.n_a), ("n_b", self.n_b)] {
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Parameter(format!("{name} must be > 0, got {n}")));
            }
        }
        self.achromatic.k_f.validate()?;
        self.chromatic.k_f.validate()
    }

    /// Checks both kernels are stable at a `width x height` working size.
    pub fn validate_at(&self, width: usize, height: usize) -> Result<()> {
        self.validate()?;
        let geometry = FilterGeometry::for_image(width, height);
        for coeffs in self.active_kernels() {
            let report = validate_stability(coeffs, geometry)?;
            if !report.passed {
                return Err(Error::Stability {
                    min_abs: report.min_abs,
                    location: report.location,
                    count: report.failing_bins,
                });
            }
        }
        Ok(())
    }

    fn active_kernels(&self) -> Vec<&RationalFilterCoeffs> {
        let mut v = vec![&self.chromatic];
        if self.apply_achromatic_kernel {
            v.push(&self.achromatic);
        }
        v
    }
}

/// Forward model `S * NR(I)` with the plane's median as semi-saturation.
pub fn model_forward(plane: &Plane, n: f64, s: &FreqFilter) -> Result<Plane> {
    let i_s = semi_saturation(plane)?;
    let response = nr_forward(plane, &NakaRushtonParams::new(n, i_s)?)?;
    convolve_freq(&response, s)
}

/// Inverse model `NR^-1(clip(S^-1 * O))`.
pub fn model_inverse(plane: &Plane, n: f64, s_inv: &FreqFilter, i_s: f64) -> Result<Plane> {
    if !(i_s > 0.0) {
        return Err(Error::Parameter(format!("semi-saturation must be > 0, got {i_s}")));
    }
    let deconvolved = convolve_freq(plane, s_inv)?;
    let (clipped, _) = clip_unit(&deconvolved, CLIP_EPSILON)?;
    nr_inverse(&clipped, &NakaRushtonParams::new(n, i_s)?)
}

/// Transform round-off below zero that is clamped without being counted.
const ROUNDOFF: f64 = 1e-12;

/// Clamps to `[0, 1 - epsilon]` and reports the fraction of pixels moved by
/// more than FFT round-off.
pub fn clip_unit(plane: &Plane, epsilon: f64) -> Result<(Plane, f64)> {
    if !(epsilon > 0.0 && epsilon <= 0.01) {
        return Err(Error::Parameter(format!("clip epsilon must be in (0, 0.01], got {epsilon}")));
    }
    let hi = 1.0 - epsilon;
    let changed = plane.as_slice().iter().filter(|&&v| !(-ROUNDOFF..=hi).contains(&v)).count();
    let out = plane.map(|v| v.clamp(0.0, hi));
    let fraction = if plane.is_empty() {
        0.0
    } else {
        changed as f64 / plane.len() as f64
    };
    Ok((out, fraction))
}

#[derive(Debug, Default)]
pub struct CompensateOptions<'a> {
    /// Per-LMS-channel semi-saturation to use instead of the channel medians.
    pub semi_saturation: Option<[f64; 3]>,
    pub cache: Option<&'a FilterCache>,
}

#[derive(Debug, Clone)]
pub struct CompensationReport {
    pub image: TriImage,
    /// Result in XYZ (after any lightness replacement, before display clamping).
    pub xyz: TriImage,
    pub semi_saturation: [f64; 3],
    /// Pixels whose LMS value was negative before the photoreceptor stage.
    pub negative_lms_pixels: usize,
    /// Per-LMS-channel fraction clipped into the inverse curve's domain.
    pub response_clipped_fraction: [f64; 3],
    /// Fraction of output channel values clamped into `[0, 1]`.
    pub output_clamped_fraction: f64,
    pub lab_clamped_pixels: usize,
}

impl CompensationReport {
    /// True when neither the response clip nor the final clamp altered anything.
    pub fn is_clip_free(&self) -> bool {
        self.response_clipped_fraction.iter().all(|&f| f == 0.0) && self.output_clamped_fraction == 0.0
    }
}

pub fn compensate(image: &TriImage, src: &ScreenSpec, dst: &ScreenSpec, p: &CompensationParams) -> Result<TriImage> {
    Ok(compensate_detailed(image, src, dst, p, &CompensateOptions::default())?.image)
}

fn kernel(
    coeffs: &RationalFilterCoeffs,
    geometry: FilterGeometry,
    cache: Option<&FilterCache>,
) -> Result<std::sync::Arc<FreqFilter>> {
    match cache {
        Some(c) => c.compensation_kernel(coeffs, geometry),
        None => crate::kernels::build_s_c(coeffs, geometry).map(std::sync::Arc::new),
    }
}

pub fn compensate_detailed(
    image: &TriImage,
    src: &ScreenSpec,
    dst: &ScreenSpec,
    p: &CompensationParams,
    opts: &CompensateOptions<'_>,
) -> Result<CompensationReport> {
    image.expect_encoding(ColorEncoding::DisplayRGB)?;
    image.check_range(0.0, 1.0)?;
    src.validate()?;
    dst.validate()?;
    p.validate()?;
    let (w, h) = image.dims();
    let geometry = FilterGeometry::for_image(w, h);

    let (chromatic, achromatic) = rayon::join(
        || kernel(&p.chromatic, geometry, opts.cache),
        || {
            p.apply_achromatic_kernel
                .then(|| kernel(&p.achromatic, geometry, opts.cache))
                .transpose()
        },
    );
    let (chromatic, achromatic) = (chromatic?, achromatic?);

    // Display values straight to LMS in one matrix.
    let gamma_src = src.gamma;
    let to_lms = CAT02.mul(&src.rgb_to_xyz_matrix()?);
    let lms = image.map_pixels(ColorEncoding::CAT02LMS, |rgb| to_lms.apply(rgb.map(|v| v.powf(gamma_src))));
    let negative_lms_pixels = (0..lms.width() * lms.height())
        .filter(|&i| (0..3).any(|c| lms.channel(c).as_slice()[i] < 0.0))
        .count();
    let lms: [Plane; 3] = lms.into_channels().map(|c| c.map(|v| v.max(0.0)));

    let i_s: [f64; 3] = match opts.semi_saturation {
        Some(v) => v,
        None => {
            let mut out = [0.0; 3];
            for (o, c) in out.iter_mut().zip(&lms) {
                *o = semi_saturation(c)?;
            }
            out
        }
    };
    let mut responses = Vec::with_capacity(3);
    for (c, plane) in lms.iter().enumerate() {
        responses.push(nr_forward(plane, &NakaRushtonParams::new(p.n_a, i_s[c])?)?);
    }
    let responses = TriImage::new(responses.try_into().expect("three channels"), ColorEncoding::CAT02LMS)?;
    let [y, op1, op2] = responses
        .map_pixels(ColorEncoding::Opponent, |v| OPPONENT.apply(v))
        .into_channels();

    let (y, chroma) = rayon::join(
        || match &achromatic {
            Some(f) => convolve_freq(&y, f),
            None => Ok(y.clone()),
        },
        || convolve_freq_pair(&op1, &op2, &chromatic),
    );
    let (y, (op1, op2)) = (y?, chroma?);

    let filtered = TriImage::new([y, op1, op2], ColorEncoding::Opponent)?.map_pixels(ColorEncoding::CAT02LMS, |v| {
        OPPONENT_INV.apply(v)
    });
    let mut response_clipped_fraction = [0.0; 3];
    let mut restored = Vec::with_capacity(3);
    for (c, plane) in filtered.into_channels().into_iter().enumerate() {
        let (clipped, fraction) = clip_unit(&plane, CLIP_EPSILON)?;
        response_clipped_fraction[c] = fraction;
        restored.push(nr_inverse(&clipped, &NakaRushtonParams::new(p.n_b, i_s[c])?)?);
    }
    let restored = TriImage::new(restored.try_into().expect("three channels"), ColorEncoding::CAT02LMS)?;
    let lms_to_xyz = cat02_inverse();
    let mut xyz = restored.map_pixels(ColorEncoding::XYZ, |v| lms_to_xyz.apply(v));

    let mut lab_clamped_pixels = 0;
    if p.replace_lstar {
        let white = src.white_xyz()?;
        let to_xyz = src.rgb_to_xyz_matrix()?;
        let (w, h) = image.dims();
        let original = image.map_pixels(ColorEncoding::XYZ, |rgb| to_xyz.apply(rgb.map(|v| v.powf(gamma_src))));
        lab_clamped_pixels = (0..w * h)
            .filter(|&i| (0..3).any(|c| xyz.channel(c).as_slice()[i] < 0.0))
            .count();
        let replaced = TriImage::from_pixel_fn(w, h, ColorEncoding::XYZ, |x, yy| {
            let (lab, _) = xyz_to_lab_pixel(xyz.pixel(x, yy), white);
            let (lab_orig, _) = xyz_to_lab_pixel(original.pixel(x, yy), white);
            lab_to_xyz_pixel([lab_orig[0], lab[1], lab[2]], white)
        });
        xyz = replaced;
    }

    let to_rgb = dst.xyz_to_rgb_matrix()?;
    let inv_gamma = 1.0 / dst.gamma;
    let linear = xyz.map_pixels(ColorEncoding::LinearRGB, |v| to_rgb.apply(v));
    let total = 3 * w * h;
    let clamped = linear
        .channels()
        .iter()
        .map(|c| c.as_slice().iter().filter(|&&v| !(0.0..=1.0).contains(&v)).count())
        .sum::<usize>();
    let out = linear.map_pixels(ColorEncoding::DisplayRGB, |v| v.map(|c| c.clamp(0.0, 1.0).powf(inv_gamma)));

    Ok(CompensationReport {
        image: out,
        xyz,
        semi_saturation: i_s,
        negative_lms_pixels,
        response_clipped_fraction,
        output_clamped_fraction: if total == 0 { 0.0 } else { clamped as f64 / total as f64 },
        lab_clamped_pixels,
    })
}
