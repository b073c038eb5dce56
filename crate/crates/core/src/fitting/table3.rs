use serde::{Deserialize, Serialize};

use super::objectives::{chromatic_errors, original_errors, ChromaticStimulus, ObserverDatum, ScreenPair};
use crate::compensation::CompensationParams;
use crate::error::{Error, Result};

/// Relative error reduction in percent.
pub fn improvement_percent(original: f64, test: f64) -> Result<f64> {
    if !(original > 0.0) {
        return Err(Error::Degenerate(format!("original error must be > 0, got {original}")));
    }
    Ok(100.0 * (original - test) / original)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    /// Held-out set of this fold.
    pub test_set: String,
    /// Error on every set (training and test), in `Table3Report::sets` order.
    pub errors: Vec<f64>,
    pub test_error: f64,
    /// Uncorrected error on the held-out set.
    pub original_error: f64,
    pub improvement_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Report {
    pub sets: Vec<String>,
    pub rows: Vec<Table3Row>,
}

impl Table3Report {
    /// Builds the report from precomputed errors, `errors[fold][set]`.
    pub fn from_errors(sets: Vec<String>, test_sets: Vec<String>, errors: Vec<Vec<f64>>, original: Vec<f64>) -> Result<Self> {
        if test_sets.len() != sets.len() || errors.len() != sets.len() || original.len() != sets.len() {
            return Err(Error::Parameter(format!(
                "fold mismatch: {} sets, {} folds, {} error rows, {} originals",
                sets.len(),
                test_sets.len(),
                errors.len(),
                original.len()
            )));
        }
        let mut rows = Vec::with_capacity(sets.len());
        for (test_set, errs) in test_sets.into_iter().zip(errors) {
            if errs.len() != sets.len() {
                return Err(Error::Parameter(format!("fold {test_set}: expected {} errors", sets.len())));
            }
            let k = sets
                .iter()
                .position(|s| *s == test_set)
                .ok_or_else(|| Error::Parameter(format!("fold test set {test_set} is not a known set")))?;
            if rows.iter().any(|r: &Table3Row| r.test_set == test_set) {
                return Err(Error::Parameter(format!("set {test_set} is held out twice")));
            }
            rows.push(Table3Row {
                test_error: errs[k],
                original_error: original[k],
                improvement_percent: improvement_percent(original[k], errs[k])?,
                errors: errs,
                test_set,
            });
        }
        Ok(Self { sets, rows })
    }

    /// Fixed-width text table.
    pub fn render(&self) -> String {
        let mut out = format!("{:<10}", "held out");
        for s in &self.sets {
            out.push_str(&format!("{s:>10}"));
        }
        out.push_str(&format!("{:>10}{:>12}\n", "original", "improv. %"));
        for r in &self.rows {
            out.push_str(&format!("{:<10}", r.test_set));
            for e in &r.errors {
                out.push_str(&format!("{e:>10.2}"));
            }
            out.push_str(&format!("{:>10.2}{:>12.2}\n", r.original_error, r.improvement_percent));
        }
        out
    }
}

/// Evaluates per-fold parameters on every set; each fold is `(held-out set, params)`.
pub fn table3_report(
    folds: &[(String, CompensationParams)],
    data: &[ObserverDatum],
    stimuli: &[ChromaticStimulus],
    screens: &ScreenPair,
    sets: &[String],
) -> Result<Table3Report> {
    if sets.len() != 4 || folds.len() != 4 {
        return Err(Error::Parameter(format!(
            "fold mismatch: expected 4 sets and 4 folds, got {} and {}",
            sets.len(),
            folds.len()
        )));
    }
    let errors = folds
        .iter()
        .map(|(_, p)| chromatic_errors(p, data, stimuli, screens, sets))
        .collect::<Result<Vec<_>>>()?;
    let original = original_errors(data, stimuli, &screens.src, sets)?;
    Table3Report::from_errors(
        sets.to_vec(),
        folds.iter().map(|(s, _)| s.clone()).collect(),
        errors,
        original,
    )
}
