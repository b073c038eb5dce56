//! Center-surround kernels built in the Fourier domain and the convolution engine.
//!
//! Filters are real, even frequency responses sampled on the DFT grid of a
//! mirror-padded image. Convolution reflects the image to twice its size in
//! each direction, so the periodic product never wraps one edge onto the other.

mod cache;
mod dct;
pub mod fft;
mod filters;
mod gaussian;

use num_complex::Complex64;

pub use cache::FilterCache;
pub use fft::Fft2d;
pub use filters::{
    build_s, build_s_c, build_s_inv, validate_stability, LinearModelParams, RationalFilterCoeffs, StabilityReport,
    STABILITY_EPSILON,
};
pub use gaussian::{
    gaussian_mix_response, GaussianMix, GaussianNormalization, GaussianTerm, REFERENCE_RESOLUTION,
};

use crate::error::{Error, FrequencyBin, Result};
use dct::MirrorDct;
use crate::plane::Plane;

/// Frequency grid a filter is sampled on plus the image size its sigmas refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FilterGeometry {
    pub grid: (usize, usize),
    pub image_min_side: usize,
}

impl FilterGeometry {
    /// Grid used to convolve a `width x height` image (mirror padded to 2x).
    pub fn for_image(width: usize, height: usize) -> Self {
        Self {
            grid: (2 * width, 2 * height),
            image_min_side: width.min(height),
        }
    }

    /// Unpadded grid whose sigmas scale with the grid itself.
    pub fn grid(width: usize, height: usize) -> Self {
        Self {
            grid: (width, height),
            image_min_side: width.min(height),
        }
    }

    pub fn bin(&self, u: usize, v: usize) -> FrequencyBin {
        FrequencyBin {
            u: fft::bin_frequency(u, self.grid.0),
            v: fft::bin_frequency(v, self.grid.1),
        }
    }
}

/// Real frequency response over a DFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqFilter {
    geometry: FilterGeometry,
    response: Vec<f64>,
}

impl FreqFilter {
    pub fn new(geometry: FilterGeometry, response: Vec<f64>) -> Result<Self> {
        let (w, h) = geometry.grid;
        if response.len() != w * h {
            return Err(Error::Dimension {
                expected: (w, h),
                actual: (response.len(), 1),
            });
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "filter response is not finite at {}",
                geometry.bin(i % w, i / w)
            )));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs());
        let odd = (0..h).find_map(|v| {
            let row = &response[v * w..(v + 1) * w];
            let opposite = &response[((h - v) % h) * w..][..w];
            (0..w)
                .find(|&u| !close(row[u], row[(w - u) % w]) || !close(row[u], opposite[u]))
                .map(|u| (u, v))
        });
        if let Some((u, v)) = odd {
            return Err(Error::Parameter(format!(
                "filter response must be even along each axis; it is not at {}",
                geometry.bin(u, v)
            )));
        }
        Ok(Self { geometry, response })
    }

    /// All-pass filter.
    pub fn identity(geometry: FilterGeometry) -> Self {
        let (w, h) = geometry.grid;
        Self {
            geometry,
            response: vec![1.0; w * h],
        }
    }

    pub fn geometry(&self) -> FilterGeometry {
        self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.grid.0
    }

    pub fn height(&self) -> usize {
        self.geometry.grid.1
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.response[v * self.geometry.grid.0 + u]
    }

    pub fn dc_gain(&self) -> f64 {
        self.response[0]
    }

    /// Per-bin product, i.e. the cascade of both filters.
    pub fn compose(&self, other: &FreqFilter) -> Result<FreqFilter> {
        if self.geometry.grid != other.geometry.grid {
            return Err(Error::Dimension {
                expected: self.geometry.grid,
                actual: other.geometry.grid,
            });
        }
        FreqFilter::new(
            self.geometry,
            self.response.iter().zip(&other.response).map(|(a, b)| a * b).collect(),
        )
    }

    pub fn as_plane(&self) -> Plane {
        let (w, h) = self.geometry.grid;
        Plane::new(w, h, self.response.clone()).expect("sized by construction")
    }

    /// Spatial kernel (inverse DFT), centred so the origin sits at `(w/2, h/2)`.
    ///
    /// Also returns the largest imaginary residue, which is zero up to rounding
    /// for even responses.
    pub fn spatial_kernel(&self) -> (Plane, f64) {
        let (w, h) = self.geometry.grid;
        let mut buf: Vec<Complex64> = self.response.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        Fft2d::new(w, h).inverse(&mut buf);
        let n = (w * h) as f64;
        let imag = buf.iter().map(|c| (c.im / n).abs()).fold(0.0, f64::max);
        let kernel = Plane::from_fn(w, h, |x, y| {
            let sx = (x + w - w / 2) % w;
            let sy = (y + h - h / 2) % h;
            buf[sy * w + sx].re / n
        });
        (kernel, imag)
    }
}

fn check_filter_for(plane: &Plane, filter: &FreqFilter) -> Result<()> {
    let expected = (2 * plane.width(), 2 * plane.height());
    if filter.geometry.grid != expected {
        return Err(Error::Dimension {
            expected,
            actual: filter.geometry.grid,
        });
    }
    Ok(())
}

/// Filters `plane` with `filter`, which must be built for this image size
/// (see [`FilterGeometry::for_image`]).
pub fn convolve_freq(plane: &Plane, filter: &FreqFilter) -> Result<Plane> {
    Convolver::new(plane.width(), plane.height()).apply(plane, filter)
}

/// Filters two same-size planes with one filter.
pub fn convolve_freq_pair(a: &Plane, b: &Plane, filter: &FreqFilter) -> Result<(Plane, Plane)> {
    a.ensure_same_dims(b)?;
    let conv = Convolver::new(a.width(), a.height());
    let (x, y) = rayon::join(|| conv.apply(a, filter), || conv.apply(b, filter));
    Ok((x?, y?))
}

/// Convolution with reusable transform plans, for loops over many same-size planes.
pub struct Convolver {
    dct: MirrorDct,
    width: usize,
    height: usize,
}

impl Convolver {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            dct: MirrorDct::new(width, height),
            width,
            height,
        }
    }

    pub fn apply(&self, plane: &Plane, filter: &FreqFilter) -> Result<Plane> {
        if plane.dims() != (self.width, self.height) {
            return Err(Error::Dimension {
                expected: (self.width, self.height),
                actual: plane.dims(),
            });
        }
        check_filter_for(plane, filter)?;
        Plane::new(self.width, self.height, self.dct.apply(plane.as_slice(), filter.response()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference: explicit mirror padding and a full complex FFT.
    fn fft_oracle(plane: &Plane, filter: &FreqFilter) -> Plane {
        let (w, h) = plane.dims();
        let (pw, ph) = (2 * w, 2 * h);
        let mirror = |i: usize, n: usize| if i < n { i } else { 2 * n - 1 - i };
        let mut buf: Vec<Complex64> = (0..pw * ph)
            .map(|i| Complex64::new(plane.get(mirror(i % pw, w), mirror(i / pw, h)), 0.0))
            .collect();
        let fft = Fft2d::new(pw, ph);
        fft.forward(&mut buf);
        for (c, &r) in buf.iter_mut().zip(filter.response()) {
            *c *= r;
        }
        fft.inverse(&mut buf);
        Plane::from_fn(w, h, |x, y| buf[y * pw + x].re / (pw * ph) as f64)
    }

    #[test]
    fn cosine_path_matches_padded_fft() {
        for (w, h) in [(13, 9), (16, 16), (7, 20)] {
            let p = Plane::from_fn(w, h, |x, y| ((x * x + 3 * y) % 7) as f64 / 6.0 + 0.1 * x as f64);
            let g = FilterGeometry::for_image(w, h);
            let mix = GaussianMix::new(&[(1.3, 40.0), (-0.4, 150.0)]).unwrap();
            let f = build_s_c(
                &RationalFilterCoeffs { c1: 0.5, c2: 1.0, d1: -0.7, d2: 1.2, k_f: mix },
                g,
            )
            .unwrap();
            let got = convolve_freq(&p, &f).unwrap();
            assert!(got.max_abs_diff(&fft_oracle(&p, &f)) < 1e-12, "{w}x{h}");
        }
    }

    #[test]
    fn odd_responses_are_rejected() {
        let g = FilterGeometry::for_image(4, 4);
        let mut r = vec![1.0; 64];
        r[1] = 2.0;
        assert!(matches!(FreqFilter::new(g, r), Err(Error::Parameter(_))));
    }

    fn ramp(w: usize, h: usize) -> Plane {
        Plane::from_fn(w, h, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0)
    }

    #[test]
    fn identity_filter_is_identity() {
        let p = ramp(13, 9);
        let out = convolve_freq(&p, &FreqFilter::identity(FilterGeometry::for_image(13, 9))).unwrap();
        assert!(out.max_abs_diff(&p) < 1e-10);
    }

    #[test]
    fn constant_plane_scales_by_dc() {
        let mix = GaussianMix::new(&[(0.6, 2.0), (-0.1, 5.0)]).unwrap();
        let f = mix.response(FilterGeometry::for_image(16, 12)).unwrap();
        let out = convolve_freq(&Plane::filled(16, 12, 0.25), &f).unwrap();
        for &v in out.as_slice() {
            assert!((v - 0.25 * 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_filter_is_rejected() {
        let p = ramp(8, 8);
        let f = FreqFilter::identity(FilterGeometry::grid(8, 8));
        assert!(matches!(convolve_freq(&p, &f), Err(Error::Dimension { .. })));
    }

    #[test]
    fn pair_matches_single() {
        let a = ramp(10, 14);
        let b = a.map(|v| 1.0 - v * v);
        let mix = GaussianMix::new(&[(1.0, 3.0)]).unwrap();
        let f = mix.response(FilterGeometry::for_image(10, 14)).unwrap();
        let (ca, cb) = convolve_freq_pair(&a, &b, &f).unwrap();
        assert!(ca.max_abs_diff(&convolve_freq(&a, &f).unwrap()) < 1e-12);
        assert!(cb.max_abs_diff(&convolve_freq(&b, &f).unwrap()) < 1e-12);
    }

    #[test]
    fn gaussian_spatial_kernel_is_real_and_symmetric() {
        let mix = GaussianMix::new(&[(1.0, 2.5), (-0.3, 6.0)]).unwrap();
        let f = mix.response(FilterGeometry::grid(32, 32)).unwrap();
        let (k, imag) = f.spatial_kernel();
        assert!(imag < 1e-10);
        for y in 1..32 {
            for x in 1..32 {
                assert!((k.get(x, y) - k.get(32 - x, y)).abs() < 1e-12);
                assert!((k.get(x, y) - k.get(y, x)).abs() < 1e-12);
            }
        }
    }
}
