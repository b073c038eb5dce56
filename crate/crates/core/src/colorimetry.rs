//! Display encoding, primaries, CAT02 cone space, opponent channels and CIELAB.
//!
//! Every [`TriImage`] carries the encoding of its three planes. Conversions
//! check the tag and refuse images in the wrong state, so a pipeline cannot
//! silently apply a matrix twice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::{Plane, PAR_MIN_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorEncoding {
    DisplayRGB,
    LinearRGB,
    XYZ,
    CAT02LMS,
    Opponent,
    CIELAB,
}

/// Three equally sized planes plus the encoding they are expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct TriImage {
    channels: [Plane; 3],
    encoding: ColorEncoding,
}

impl TriImage {
    pub fn new(channels: [Plane; 3], encoding: ColorEncoding) -> Result<Self> {
        channels[0].ensure_same_dims(&channels[1])?;
        channels[0].ensure_same_dims(&channels[2])?;
        Ok(Self { channels, encoding })
    }

    /// Uniform image where every pixel holds `pixel`.
    pub fn filled(width: usize, height: usize, pixel: [f64; 3], encoding: ColorEncoding) -> Self {
        Self {
            channels: pixel.map(|v| Plane::filled(width, height, v)),
            encoding,
        }
    }

    pub fn from_pixel_fn(
        width: usize,
        height: usize,
        encoding: ColorEncoding,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        let mut data: [Vec<f64>; 3] = Default::default();
        for ch in &mut data {
            ch.reserve(width * height);
        }
        for y in 0..height {
            for x in 0..width {
                let p = f(x, y);
                for c in 0..3 {
                    data[c].push(p[c]);
                }
            }
        }
        let channels = data.map(|d| Plane::new(width, height, d).expect("sized by construction"));
        Self { channels, encoding }
    }

    pub fn encoding(&self) -> ColorEncoding {
        self.encoding
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn channel(&self, index: usize) -> &Plane {
        &self.channels[index]
    }

    pub fn channel_mut(&mut self, index: usize) -> &mut Plane {
        &mut self.channels[index]
    }

    pub fn channels(&self) -> &[Plane; 3] {
        &self.channels
    }

    pub fn into_channels(self) -> [Plane; 3] {
        self.channels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        [
            self.channels[0].get(x, y),
            self.channels[1].get(x, y),
            self.channels[2].get(x, y),
        ]
    }

    /// Replaces the tag without touching the data.
    pub fn retagged(mut self, encoding: ColorEncoding) -> Self {
        self.encoding = encoding;
        self
    }

    pub fn expect_encoding(&self, expected: ColorEncoding) -> Result<()> {
        if self.encoding != expected {
            return Err(Error::Encoding {
                expected,
                actual: self.encoding,
            });
        }
        Ok(())
    }

    /// Applies `f` to every pixel triple, producing an image with a new tag.
    pub fn map_pixels(&self, encoding: ColorEncoding, f: impl Fn([f64; 3]) -> [f64; 3] + Sync + Send) -> TriImage {
        let n = self.channels[0].len();
        let (w, h) = self.dims();
        let src = [
            self.channels[0].as_slice(),
            self.channels[1].as_slice(),
            self.channels[2].as_slice(),
        ];
        let mapped: Vec<[f64; 3]> = (0..n)
            .into_par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|i| f([src[0][i], src[1][i], src[2][i]]))
            .collect();
        let out = [0, 1, 2].map(|c| mapped.iter().map(|p| p[c]).collect::<Vec<f64>>());
        TriImage {
            channels: out.map(|d| Plane::new(w, h, d).expect("sized by construction")),
            encoding,
        }
    }

    pub fn max_abs_diff(&self, other: &TriImage) -> f64 {
        (0..3)
            .map(|c| self.channels[c].max_abs_diff(&other.channels[c]))
            .fold(0.0, f64::max)
    }

    /// Checks every channel lies within `[low, high]`.
    pub fn check_range(&self, low: f64, high: f64) -> Result<()> {
        for (channel, plane) in self.channels.iter().enumerate() {
            let (min, max) = (plane.min(), plane.max());
            if min < low || min.is_nan() {
                return Err(Error::Range {
                    channel,
                    extremum: min,
                    low,
                    high,
                });
            }
            if max > high || max.is_nan() {
                return Err(Error::Range {
                    channel,
                    extremum: max,
                    low,
                    high,
                });
            }
        }
        Ok(())
    }
}

/// 3x3 row-major matrix acting on column vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    #[inline]
    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn mul(&self, other: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[r][k] * other.0[k][c]).sum();
            }
        }
        Mat3(out)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Option<Mat3> {
        let det = self.determinant();
        let scale: f64 = self.0.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        if !det.is_finite() || det.abs() <= 1e-12 * scale.powi(3) {
            return None;
        }
        let m = &self.0;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        Some(Mat3(adj.map(|row| row.map(|v| v / det))))
    }
}

/// CIECAM02 chromatic adaptation matrix, XYZ to sharpened cone space.
pub const CAT02: Mat3 = Mat3([
    [0.7328, 0.4296, -0.1624],
    [-0.7036, 1.6975, 0.0061],
    [0.0030, 0.0136, 0.9834],
]);

/// Y = L+M+S, op1 = L-M, op2 = 2S-(L+M).
pub const OPPONENT: Mat3 = Mat3([[1.0, 1.0, 1.0], [1.0, -1.0, 0.0], [-1.0, -1.0, 2.0]]);

/// Exact inverse of [`OPPONENT`].
pub const OPPONENT_INV: Mat3 = Mat3([
    [1.0 / 3.0, 0.5, -1.0 / 6.0],
    [1.0 / 3.0, -0.5, -1.0 / 6.0],
    [1.0 / 3.0, 0.0, 1.0 / 3.0],
]);

/// Display description: primaries, white, decode exponent and viewing geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSpec {
    /// CIE xy of the red, green and blue primaries.
    pub primaries_xy: [[f64; 2]; 3],
    pub white_xy: [f64; 2],
    pub gamma: f64,
    pub vertical_angle_deg: f64,
    /// Size relative to the reference (cinema) rendition.
    pub scale_factor: f64,
    /// Side length in pixels the fitted kernels refer to.
    pub reference_resolution_px: f64,
}

pub const REC709_PRIMARIES: [[f64; 2]; 3] = [[0.64, 0.33], [0.30, 0.60], [0.15, 0.06]];
pub const D65_XY: [f64; 2] = [0.3127, 0.3290];

impl Default for ScreenSpec {
    fn default() -> Self {
        Self::cinema()
    }
}

impl ScreenSpec {
    /// Rec. 709 / D65 / gamma 2.4 reference monitor seen at cinema distance.
    pub fn cinema() -> Self {
        Self {
            primaries_xy: REC709_PRIMARIES,
            white_xy: D65_XY,
            gamma: 2.4,
            vertical_angle_deg: 18.92,
            scale_factor: 1.0,
            reference_resolution_px: 800.0,
        }
    }

    /// The same display showing the picture at 39% of the cinema size.
    pub fn mobile() -> Self {
        Self {
            scale_factor: 0.39,
            ..Self::cinema()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Configuration(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.vertical_angle_deg > 0.0) {
            return Err(Error::Configuration(format!(
                "vertical viewing angle must be > 0, got {}",
                self.vertical_angle_deg
            )));
        }
        if !(self.scale_factor > 0.0) {
            return Err(Error::Configuration(format!(
                "scale factor must be > 0, got {}",
                self.scale_factor
            )));
        }
        if !(self.reference_resolution_px > 0.0) {
            return Err(Error::Configuration(format!(
                "reference resolution must be > 0, got {}",
                self.reference_resolution_px
            )));
        }
        self.rgb_to_xyz_matrix().map(|_| ())
    }

    /// Linear RGB to XYZ, normalised so that RGB (1,1,1) maps to the white point at Y = 1.
    pub fn rgb_to_xyz_matrix(&self) -> Result<Mat3> {
        let xyz_of = |xy: [f64; 2]| -> Result<[f64; 3]> {
            let [x, y] = xy;
            if !(y > 0.0) || !x.is_finite() {
                return Err(Error::Configuration(format!("degenerate chromaticity ({x}, {y})")));
            }
            Ok([x / y, 1.0, (1.0 - x - y) / y])
        };
        let cols = [
            xyz_of(self.primaries_xy[0])?,
            xyz_of(self.primaries_xy[1])?,
            xyz_of(self.primaries_xy[2])?,
        ];
        let p = Mat3([
            [cols[0][0], cols[1][0], cols[2][0]],
            [cols[0][1], cols[1][1], cols[2][1]],
            [cols[0][2], cols[1][2], cols[2][2]],
        ]);
        let p_inv = p
            .inverse()
            .ok_or_else(|| Error::Configuration("primary chromaticities are collinear".into()))?;
        let white = xyz_of(self.white_xy)?;
        let s = p_inv.apply(white);
        Ok(Mat3([
            [p.0[0][0] * s[0], p.0[0][1] * s[1], p.0[0][2] * s[2]],
            [p.0[1][0] * s[0], p.0[1][1] * s[1], p.0[1][2] * s[2]],
            [p.0[2][0] * s[0], p.0[2][1] * s[1], p.0[2][2] * s[2]],
        ]))
    }

    pub fn xyz_to_rgb_matrix(&self) -> Result<Mat3> {
        self.rgb_to_xyz_matrix()?
            .inverse()
            .ok_or_else(|| Error::Configuration("primary matrix is singular".into()))
    }

    /// XYZ of the display white at relative luminance 1.
    pub fn white_xyz(&self) -> Result<[f64; 3]> {
        Ok(self.rgb_to_xyz_matrix()?.apply([1.0, 1.0, 1.0]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferDirection {
    Decode,
    Encode,
}

/// Values this far outside `[0, 1]` are treated as round-off and clamped.
const TRANSFER_ROUNDOFF: f64 = 1e-12;

/// Pure power-law display transfer function.
pub fn eotf(image: &TriImage, spec: &ScreenSpec, direction: TransferDirection) -> Result<TriImage> {
    if !(spec.gamma > 0.0) {
        return Err(Error::Configuration(format!("gamma must be > 0, got {}", spec.gamma)));
    }
    let (expected, target, exponent) = match direction {
        TransferDirection::Decode => (ColorEncoding::DisplayRGB, ColorEncoding::LinearRGB, spec.gamma),
        TransferDirection::Encode => (ColorEncoding::LinearRGB, ColorEncoding::DisplayRGB, 1.0 / spec.gamma),
    };
    image.expect_encoding(expected)?;
    image.check_range(-TRANSFER_ROUNDOFF, 1.0 + TRANSFER_ROUNDOFF)?;
    Ok(image.map_pixels(target, |p| p.map(|v| v.clamp(0.0, 1.0).powf(exponent))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimaryDirection {
    RgbToXyz,
    XyzToRgb,
}

pub fn primary_transform(image: &TriImage, spec: &ScreenSpec, direction: PrimaryDirection) -> Result<TriImage> {
    let (expected, target, m) = match direction {
        PrimaryDirection::RgbToXyz => (ColorEncoding::LinearRGB, ColorEncoding::XYZ, spec.rgb_to_xyz_matrix()?),
        PrimaryDirection::XyzToRgb => (ColorEncoding::XYZ, ColorEncoding::LinearRGB, spec.xyz_to_rgb_matrix()?),
    };
    image.expect_encoding(expected)?;
    Ok(image.map_pixels(target, |p| m.apply(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cat02Direction {
    XyzToLms,
    LmsToXyz,
}

pub fn cat02_inverse() -> Mat3 {
    CAT02.inverse().expect("CAT02 is invertible")
}

pub fn cat02_transform(image: &TriImage, direction: Cat02Direction) -> Result<TriImage> {
    let (expected, target, m) = match direction {
        Cat02Direction::XyzToLms => (ColorEncoding::XYZ, ColorEncoding::CAT02LMS, CAT02),
        Cat02Direction::LmsToXyz => (ColorEncoding::CAT02LMS, ColorEncoding::XYZ, cat02_inverse()),
    };
    image.expect_encoding(expected)?;
    Ok(image.map_pixels(target, |p| m.apply(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpponentDirection {
    LmsToOpponent,
    OpponentToLms,
}

pub fn opponent_transform(image: &TriImage, direction: OpponentDirection) -> Result<TriImage> {
    let (expected, target, m) = match direction {
        OpponentDirection::LmsToOpponent => (ColorEncoding::CAT02LMS, ColorEncoding::Opponent, OPPONENT),
        OpponentDirection::OpponentToLms => (ColorEncoding::Opponent, ColorEncoding::CAT02LMS, OPPONENT_INV),
    };
    image.expect_encoding(expected)?;
    Ok(image.map_pixels(target, |p| m.apply(p)))
}

const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

#[inline]
fn lab_f_inv(f: f64) -> f64 {
    let t = f * f * f;
    if t > LAB_EPSILON {
        t
    } else {
        (116.0 * f - 16.0) / LAB_KAPPA
    }
}

/// CIELAB of one XYZ triple. Negative components are clamped to zero; the
/// returned flag reports whether that happened.
pub fn xyz_to_lab_pixel(xyz: [f64; 3], white: [f64; 3]) -> ([f64; 3], bool) {
    let clamped = xyz.iter().any(|&v| v < 0.0);
    let [fx, fy, fz] = [0, 1, 2].map(|i| lab_f(xyz[i].max(0.0) / white[i]));
    ([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], clamped)
}

pub fn lab_to_xyz_pixel(lab: [f64; 3], white: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    [lab_f_inv(fx) * white[0], lab_f_inv(fy) * white[1], lab_f_inv(fz) * white[2]]
}

/// Result of an XYZ to CIELAB conversion with its clamp diagnostic.
#[derive(Debug, Clone)]
pub struct LabConversion {
    pub image: TriImage,
    /// Pixels with at least one negative XYZ component.
    pub clamped_pixels: usize,
}

fn check_white(white: [f64; 3]) -> Result<()> {
    if white.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Parameter(format!("reference white must be positive, got {white:?}")));
    }
    Ok(())
}

pub fn xyz_to_lab(image: &TriImage, white: [f64; 3]) -> Result<LabConversion> {
    image.expect_encoding(ColorEncoding::XYZ)?;
    check_white(white)?;
    let mut clamped_pixels = 0;
    let (w, h) = image.dims();
    let out = TriImage::from_pixel_fn(w, h, ColorEncoding::CIELAB, |x, y| {
        let (lab, clamped) = xyz_to_lab_pixel(image.pixel(x, y), white);
        clamped_pixels += usize::from(clamped);
        lab
    });
    Ok(LabConversion {
        image: out,
        clamped_pixels,
    })
}

pub fn lab_to_xyz(image: &TriImage, white: [f64; 3]) -> Result<TriImage> {
    image.expect_encoding(ColorEncoding::CIELAB)?;
    check_white(white)?;
    Ok(image.map_pixels(ColorEncoding::XYZ, |p| lab_to_xyz_pixel(p, white)))
}

/// CIE 1976 colour difference (Euclidean distance in L*a*b*).
pub fn delta_e(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// DisplayRGB to CAT02 LMS through the display decode and primaries.
pub fn display_to_lms(image: &TriImage, spec: &ScreenSpec) -> Result<TriImage> {
    let linear = eotf(image, spec, TransferDirection::Decode)?;
    let xyz = primary_transform(&linear, spec, PrimaryDirection::RgbToXyz)?;
    cat02_transform(&xyz, Cat02Direction::XyzToLms)
}

/// CIELAB triple to DisplayRGB on `spec`, relative to its white. Fails when the
/// colour lies outside the display gamut by more than `tolerance`.
pub fn lab_to_display_pixel(lab: [f64; 3], spec: &ScreenSpec, tolerance: f64) -> Result<[f64; 3]> {
    let white = spec.white_xyz()?;
    let xyz = lab_to_xyz_pixel(lab, white);
    let rgb = spec.xyz_to_rgb_matrix()?.apply(xyz);
    for (channel, &v) in rgb.iter().enumerate() {
        if v < -tolerance || v > 1.0 + tolerance {
            return Err(Error::Range {
                channel,
                extremum: v,
                low: 0.0,
                high: 1.0,
            });
        }
    }
    Ok(rgb.map(|v| v.clamp(0.0, 1.0).powf(1.0 / spec.gamma)))
}

pub fn display_to_lab_pixel(rgb: [f64; 3], spec: &ScreenSpec) -> Result<[f64; 3]> {
    let white = spec.white_xyz()?;
    let linear = rgb.map(|v| v.max(0.0).powf(spec.gamma));
    let xyz = spec.rgb_to_xyz_matrix()?.apply(linear);
    Ok(xyz_to_lab_pixel(xyz, white).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(v: [f64; 3], enc: ColorEncoding) -> TriImage {
        TriImage::filled(1, 1, v, enc)
    }

    #[test]
    fn eotf_examples() {
        let spec = ScreenSpec::cinema();
        let img = TriImage::from_pixel_fn(3, 1, ColorEncoding::DisplayRGB, |x, _| {
            let v = [0.0, 0.5, 1.0][x];
            [v, v, v]
        });
        let lin = eotf(&img, &spec, TransferDirection::Decode).unwrap();
        assert_eq!(lin.encoding(), ColorEncoding::LinearRGB);
        assert_eq!(lin.channel(0).get(0, 0), 0.0);
        assert!((lin.channel(0).get(1, 0) - 0.189_464_570_813_8).abs() < 1e-9);
        assert_eq!(lin.channel(0).get(2, 0), 1.0);

        for k in 1..10 {
            let x = k as f64 / 10.0;
            let i = px([x, x, x], ColorEncoding::DisplayRGB);
            let back = eotf(&eotf(&i, &spec, TransferDirection::Decode).unwrap(), &spec, TransferDirection::Encode).unwrap();
            assert!((back.channel(1).get(0, 0) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn eotf_range_error_names_channel() {
        let spec = ScreenSpec::cinema();
        let img = px([0.2, 1.5, 0.3], ColorEncoding::DisplayRGB);
        match eotf(&img, &spec, TransferDirection::Decode) {
            Err(Error::Range { channel, extremum, .. }) => {
                assert_eq!(channel, 1);
                assert_eq!(extremum, 1.5);
            }
            other => panic!("expected range error, got {other:?}"),
        }
        let wrong_tag = px([0.2, 0.2, 0.2], ColorEncoding::XYZ);
        assert!(matches!(
            eotf(&wrong_tag, &spec, TransferDirection::Decode),
            Err(Error::Encoding { .. })
        ));
    }

    #[test]
    fn primaries_map_white_and_red() {
        let spec = ScreenSpec::cinema();
        let m = spec.rgb_to_xyz_matrix().unwrap();
        let w = m.apply([1.0, 1.0, 1.0]);
        let sum = w[0] + w[1] + w[2];
        assert!((w[1] - 1.0).abs() < 1e-12);
        assert!((w[0] / sum - 0.3127).abs() < 1e-12);
        assert!((w[1] / sum - 0.3290).abs() < 1e-12);

        let r = m.apply([1.0, 0.0, 0.0]);
        let s = r[0] + r[1] + r[2];
        assert!((r[0] / s - 0.64).abs() < 1e-12);
        assert!((r[1] / s - 0.33).abs() < 1e-12);

        let x = [0.3, 0.6, 0.1];
        let back = spec.xyz_to_rgb_matrix().unwrap().apply(m.apply(x));
        for i in 0..3 {
            assert!((back[i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn collinear_primaries_are_configuration_errors() {
        let spec = ScreenSpec {
            primaries_xy: [[0.2, 0.2], [0.3, 0.3], [0.4, 0.4]],
            ..ScreenSpec::cinema()
        };
        assert!(matches!(spec.rgb_to_xyz_matrix(), Err(Error::Configuration(_))));
        assert!(spec.validate().is_err());
    }

    #[test]
    fn cat02_examples() {
        let zero = cat02_transform(&px([0.0; 3], ColorEncoding::XYZ), Cat02Direction::XyzToLms).unwrap();
        assert_eq!(zero.pixel(0, 0), [0.0; 3]);

        let white = ScreenSpec::cinema().white_xyz().unwrap();
        let lms = CAT02.apply(white);
        assert!(lms.iter().all(|&v| v > 0.0), "{lms:?}");

        let x = [0.41, 0.21, 0.93];
        let back = cat02_inverse().apply(CAT02.apply(x));
        for i in 0..3 {
            assert!((back[i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn opponent_examples() {
        assert_eq!(OPPONENT.apply([1.0, 1.0, 1.0]), [3.0, 0.0, 0.0]);
        assert_eq!(OPPONENT.apply([1.0, 0.0, 0.0]), [1.0, 1.0, -1.0]);
        let x = [0.3, 0.7, 0.2];
        let back = OPPONENT_INV.apply(OPPONENT.apply(x));
        for i in 0..3 {
            assert!((back[i] - x[i]).abs() < 1e-12);
        }
        let p = OPPONENT.mul(&OPPONENT_INV);
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((p.0[r][c] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lab_examples() {
        let white = ScreenSpec::cinema().white_xyz().unwrap();
        let (lab_w, _) = xyz_to_lab_pixel(white, white);
        assert!((lab_w[0] - 100.0).abs() < 1e-12);
        assert!(lab_w[1].abs() < 1e-12 && lab_w[2].abs() < 1e-12);

        let (lab_k, _) = xyz_to_lab_pixel([0.0; 3], white);
        assert!(lab_k.iter().all(|v| v.abs() < 1e-12));

        // 116 * 0.2^(1/3) - 16
        let (lab_g, _) = xyz_to_lab_pixel(white.map(|v| v / 5.0), white);
        assert!((lab_g[0] - 51.837_211_526_5).abs() < 1e-9, "{}", lab_g[0]);

        let (_, clamped) = xyz_to_lab_pixel([-0.01, 0.2, 0.3], white);
        assert!(clamped);

        let img = px([-0.01, 0.2, 0.3], ColorEncoding::XYZ);
        assert_eq!(xyz_to_lab(&img, white).unwrap().clamped_pixels, 1);
    }

    #[test]
    fn lab_round_trip() {
        let white = ScreenSpec::cinema().white_xyz().unwrap();
        for xyz in [[0.2, 0.3, 0.1], [0.001, 0.002, 0.003], [0.9, 0.95, 1.0]] {
            let (lab, _) = xyz_to_lab_pixel(xyz, white);
            let back = lab_to_xyz_pixel(lab, white);
            for i in 0..3 {
                assert!((back[i] - xyz[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn delta_e_examples() {
        assert_eq!(delta_e([50.0, 1.0, 2.0], [50.0, 1.0, 2.0]), 0.0);
        assert_eq!(delta_e([50.0, 0.0, 0.0], [50.0, 3.0, 4.0]), 5.0);
    }
}
