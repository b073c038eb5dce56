use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::fft::bin_frequency;
use super::{FilterGeometry, FreqFilter};
use crate::error::{Error, Result};

/// Amplitude convention for the individual Gaussians of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianNormalization {
    /// Each Gaussian integrates to one, so its DC gain equals its weight.
    #[default]
    UnitSum,
    /// Each Gaussian peaks at one in the spatial domain (DC gain `2 pi sigma^2`).
    UnitPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTerm {
    pub weight: f64,
    pub sigma_px: f64,
}

/// Weighted sum of isotropic Gaussians, sized for a reference image side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMix {
    pub terms: Vec<GaussianTerm>,
    pub reference_resolution_px: f64,
    #[serde(default)]
    pub normalization: GaussianNormalization,
}

pub const REFERENCE_RESOLUTION: f64 = 800.0;

impl GaussianMix {
    /// Builds a mixture from `(weight, sigma)` pairs at the 800 px reference.
    pub fn new(terms: &[(f64, f64)]) -> Result<Self> {
        let mix = Self {
            terms: terms
                .iter()
                .map(|&(weight, sigma_px)| GaussianTerm { weight, sigma_px })
                .collect(),
            reference_resolution_px: REFERENCE_RESOLUTION,
            normalization: GaussianNormalization::UnitSum,
        };
        mix.validate()?;
        Ok(mix)
    }

    pub fn with_normalization(mut self, normalization: GaussianNormalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Parameter("Gaussian mixture needs at least one term".into()));
        }
        if let Some(t) = self.terms.iter().find(|t| !(t.sigma_px > 0.0) || !t.sigma_px.is_finite()) {
            return Err(Error::Parameter(format!("Gaussian sigma must be > 0, got {}", t.sigma_px)));
        }
        if let Some(t) = self.terms.iter().find(|t| !t.weight.is_finite()) {
            return Err(Error::Parameter(format!("Gaussian weight must be finite, got {}", t.weight)));
        }
        if !(self.reference_resolution_px > 0.0) {
            return Err(Error::Parameter(format!(
                "reference resolution must be > 0, got {}",
                self.reference_resolution_px
            )));
        }
        Ok(())
    }

    pub fn weight_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// Sigmas rescaled to an image whose smaller side is `min_side` pixels.
    pub fn scaled_sigmas(&self, min_side: usize) -> Vec<f64> {
        let scale = min_side as f64 / self.reference_resolution_px;
        self.terms.iter().map(|t| t.sigma_px * scale).collect()
    }

    fn amplitude(&self, sigma: f64) -> f64 {
        match self.normalization {
            GaussianNormalization::UnitSum => 1.0,
            GaussianNormalization::UnitPeak => 2.0 * PI * sigma * sigma,
        }
    }

    /// Continuous Fourier transform of the mixture at radial frequency `f` (cycles/px)
    /// for an image of smaller side `min_side`.
    pub fn response_at(&self, f: f64, min_side: usize) -> f64 {
        self.terms
            .iter()
            .zip(self.scaled_sigmas(min_side))
            .map(|(t, s)| t.weight * self.amplitude(s) * (-2.0 * PI * PI * s * s * f * f).exp())
            .sum()
    }

    /// Frequency response sampled on the DFT grid of `geometry`.
    pub fn response(&self, geometry: FilterGeometry) -> Result<FreqFilter> {
        self.validate()?;
        let (w, h) = geometry.grid;
        let sigmas = self.scaled_sigmas(geometry.image_min_side);
        // Separable: exp(-c (u^2 + v^2)) = exp(-c u^2) exp(-c v^2).
        let tables: Vec<(f64, Vec<f64>, Vec<f64>)> = self
            .terms
            .iter()
            .zip(&sigmas)
            .map(|(t, &s)| {
                let c = 2.0 * PI * PI * s * s;
                let eu = (0..w).map(|k| (-c * bin_frequency(k, w).powi(2)).exp()).collect();
                let ev = (0..h).map(|k| (-c * bin_frequency(k, h).powi(2)).exp()).collect();
                (t.weight * self.amplitude(s), eu, ev)
            })
            .collect();
        let mut response = vec![0.0; w * h];
        for (y, row) in response.chunks_exact_mut(w).enumerate() {
            for (amp, eu, ev) in &tables {
                let a = amp * ev[y];
                for (r, e) in row.iter_mut().zip(eu) {
                    *r += a * e;
                }
            }
        }
        FreqFilter::new(geometry, response)
    }
}

/// Response of `mix` on a `width x height` frequency grid, with sigmas scaled
/// by `min(width, height) / reference`.
pub fn gaussian_mix_response(mix: &GaussianMix, width: usize, height: usize) -> Result<FreqFilter> {
    if width < 8 || height < 8 {
        return Err(Error::Parameter(format!("frequency grid must be at least 8x8, got {width}x{height}")));
    }
    mix.response(FilterGeometry::grid(width, height))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_term_has_unit_dc() {
        for sigma in [0.5, 3.0, 40.0, 156.0] {
            let mix = GaussianMix::new(&[(1.0, sigma)]).unwrap();
            let f = gaussian_mix_response(&mix, 32, 32).unwrap();
            assert!((f.dc_gain() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn paper_achromatic_mix_dc() {
        let mix = GaussianMix::new(&[(-1.14, 156.0), (1.86, 29.0), (0.13, 3.0), (-1.76, 40.0)]).unwrap();
        let f = gaussian_mix_response(&mix, 64, 64).unwrap();
        assert!((f.dc_gain() + 0.91).abs() < 1e-12);
    }

    #[test]
    fn response_is_isotropic_on_square_grids() {
        let mix = GaussianMix::new(&[(0.7, 4.0), (-0.2, 11.0)]).unwrap();
        let n = 24;
        let f = gaussian_mix_response(&mix, n, n).unwrap();
        for v in 0..n {
            for u in 0..n {
                let here = f.at(u, v);
                assert!((here - f.at((n - u) % n, v)).abs() < 1e-15);
                assert!((here - f.at(v, u)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_terms() {
        assert!(GaussianMix::new(&[(1.0, 0.0)]).is_err());
        assert!(GaussianMix::new(&[]).is_err());
        let mix = GaussianMix::new(&[(1.0, 2.0)]).unwrap();
        assert!(gaussian_mix_response(&mix, 4, 16).is_err());
    }

    #[test]
    fn unit_peak_dc_scales_with_area() {
        let mix = GaussianMix::new(&[(1.0, 3.0)])
            .unwrap()
            .with_normalization(GaussianNormalization::UnitPeak);
        let f = mix.response(FilterGeometry::grid(800, 800)).unwrap();
        assert!((f.dc_gain() - 2.0 * PI * 9.0).abs() < 1e-12);
    }

    #[test]
    fn sigmas_follow_resolution() {
        let mix = GaussianMix::new(&[(1.0, 40.0)]).unwrap();
        assert_eq!(mix.scaled_sigmas(400), vec![20.0]);
        assert_eq!(mix.scaled_sigmas(1600), vec![80.0]);
    }
}
