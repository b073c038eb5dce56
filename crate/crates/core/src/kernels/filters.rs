use serde::{Deserialize, Serialize};

use super::{FilterGeometry, FreqFilter, GaussianMix};
use crate::error::{Error, FrequencyBin, Result};

/// Smallest tolerated denominator magnitude of a rational filter.
pub const STABILITY_EPSILON: f64 = 1e-6;

/// Weights and kernels of the regularised (quadratic-contrast) induction model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k_m: GaussianMix,
    pub k_c: GaussianMix,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) {
        return Err(Error::Parameter(format!("fidelity weight beta must be > 0, got {beta}")));
    }
    Ok(())
}

/// `alpha + beta - gamma - alpha F(K_m) + gamma F(K_c)` on the grid.
fn steady_state_denominator(p: &LinearModelParams, geometry: FilterGeometry) -> Result<Vec<f64>> {
    let km = p.k_m.response(geometry)?;
    let kc = p.k_c.response(geometry)?;
    let base = p.alpha + p.beta - p.gamma;
    Ok(km
        .response()
        .iter()
        .zip(kc.response())
        .map(|(m, c)| base - p.alpha * m + p.gamma * c)
        .collect())
}

fn ensure_stable(values: &[f64], geometry: FilterGeometry) -> Result<()> {
    let report = scan_min_abs(values, geometry);
    if report.passed {
        Ok(())
    } else {
        Err(Error::Stability {
            min_abs: report.min_abs,
            location: report.location,
            count: report.failing_bins,
        })
    }
}

/// Steady-state kernel of the quadratic-contrast evolution:
/// `F(S) = beta / (alpha + beta - gamma - alpha F(K_m) + gamma F(K_c))`.
pub fn build_s(p: &LinearModelParams, geometry: FilterGeometry) -> Result<FreqFilter> {
    check_beta(p.beta)?;
    let denom = steady_state_denominator(p, geometry)?;
    ensure_stable(&denom, geometry)?;
    FreqFilter::new(geometry, denom.iter().map(|d| p.beta / d).collect())
}

/// Inverse steady-state kernel, the per-bin reciprocal of [`build_s`].
pub fn build_s_inv(p: &LinearModelParams, geometry: FilterGeometry) -> Result<FreqFilter> {
    check_beta(p.beta)?;
    let denom = steady_state_denominator(p, geometry)?;
    ensure_stable(&denom, geometry)?;
    FreqFilter::new(geometry, denom.iter().map(|d| d / p.beta).collect())
}

/// Coefficients of the compensation kernel
/// `F(S_C) = (d2 + d1 F(K_F)) / (c2 + c1 F(K_F))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalFilterCoeffs {
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub k_f: GaussianMix,
}

impl RationalFilterCoeffs {
    /// Numerator equals denominator: the all-pass compensation.
    pub fn identity(k_f: GaussianMix) -> Self {
        Self {
            c1: 0.0,
            c2: 1.0,
            d1: 0.0,
            d2: 1.0,
            k_f,
        }
    }

    /// Coefficients of the reverse (B to A) compensation.
    pub fn inverted(&self) -> Self {
        Self {
            c1: self.d1,
            c2: self.d2,
            d1: self.c1,
            d2: self.c2,
            k_f: self.k_f.clone(),
        }
    }

    /// DC gain of the compensation kernel under the mixture's convention.
    pub fn dc_gain(&self) -> f64 {
        let f = self.k_f.response_at(0.0, self.k_f.reference_resolution_px as usize);
        (self.d2 + self.d1 * f) / (self.c2 + self.c1 * f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub min_abs: f64,
    pub location: FrequencyBin,
    pub failing_bins: usize,
    pub threshold: f64,
    pub passed: bool,
}

fn scan_min_abs(values: &[f64], geometry: FilterGeometry) -> StabilityReport {
    let w = geometry.grid.0;
    let mut min_abs = f64::INFINITY;
    let mut at = 0;
    let mut failing = 0;
    for (i, v) in values.iter().enumerate() {
        let a = v.abs();
        if a < min_abs || a.is_nan() {
            min_abs = a;
            at = i;
        }
        if !(a >= STABILITY_EPSILON) {
            failing += 1;
        }
    }
    StabilityReport {
        min_abs,
        location: geometry.bin(at % w, at / w),
        failing_bins: failing,
        threshold: STABILITY_EPSILON,
        passed: failing == 0,
    }
}

/// Scans `|c2 + c1 F(K_F)|` over the whole grid.
pub fn validate_stability(coeffs: &RationalFilterCoeffs, geometry: FilterGeometry) -> Result<StabilityReport> {
    let kf = coeffs.k_f.response(geometry)?;
    let denom: Vec<f64> = kf.response().iter().map(|f| coeffs.c2 + coeffs.c1 * f).collect();
    Ok(scan_min_abs(&denom, geometry))
}

pub fn build_s_c(coeffs: &RationalFilterCoeffs, geometry: FilterGeometry) -> Result<FreqFilter> {
    let kf = coeffs.k_f.response(geometry)?;
    let denom: Vec<f64> = kf.response().iter().map(|f| coeffs.c2 + coeffs.c1 * f).collect();
    ensure_stable(&denom, geometry)?;
    let response = kf
        .response()
        .iter()
        .zip(&denom)
        .map(|(f, d)| (coeffs.d2 + coeffs.d1 * f) / d)
        .collect();
    FreqFilter::new(geometry, response)
}
