use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::{build_s_c, FilterGeometry, FreqFilter, GaussianNormalization, RationalFilterCoeffs};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    bits: Vec<u64>,
    normalization: GaussianNormalization,
    geometry: FilterGeometry,
}

impl Key {
    fn new(coeffs: &RationalFilterCoeffs, geometry: FilterGeometry) -> Self {
        let mut bits = vec![
            coeffs.c1.to_bits(),
            coeffs.c2.to_bits(),
            coeffs.d1.to_bits(),
            coeffs.d2.to_bits(),
            coeffs.k_f.reference_resolution_px.to_bits(),
        ];
        for t in &coeffs.k_f.terms {
            bits.push(t.weight.to_bits());
            bits.push(t.sigma_px.to_bits());
        }
        Self {
            bits,
            normalization: coeffs.k_f.normalization,
            geometry,
        }
    }
}

/// Compensation kernels keyed by exact coefficients and grid.
///
/// Readers share a lock; a miss builds outside the lock and inserts once.
#[derive(Debug, Default)]
pub struct FilterCache {
    filters: RwLock<HashMap<Key, Arc<FreqFilter>>>,
}

impl FilterCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn compensation_kernel(&self, coeffs: &RationalFilterCoeffs, geometry: FilterGeometry) -> Result<Arc<FreqFilter>> {
        let key = Key::new(coeffs, geometry);
        if let Some(f) = self.filters.read().expect("filter cache poisoned").get(&key) {
            return Ok(Arc::clone(f));
        }
        let built = Arc::new(build_s_c(coeffs, geometry)?);
        let mut guard = self.filters.write().expect("filter cache poisoned");
        Ok(Arc::clone(guard.entry(key).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.filters.read().expect("filter cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
