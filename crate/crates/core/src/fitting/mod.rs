//! Parameter fitting against observer data.

pub mod nelder_mead;
mod objectives;
mod space;
mod table3;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use nelder_mead::{minimize, Bounds, NelderMeadOptions, OptimResult};
pub use objectives::{
    achromatic_error, achromatic_objective, chromatic_errors, chromatic_objective, data_sets, lhei_objective,
    model_luminances, model_ring_lab, original_errors, original_luminances, original_ring_lab, AchromaticStimulus,
    ChromaticStimulus, LheiCase, Measurement, ObserverDatum, Probe, ScreenPair,
};
pub use space::{
    Coefficient, CompensationField, CompensationSpace, KernelGroup, LheiField, LheiSpace, ParameterSpace,
};
pub use table3::{improvement_percent, table3_report, Table3Report, Table3Row};

use crate::compensation::CompensationParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<P> {
    pub params: P,
    pub objective_value: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// Errors that mark a trial point as infeasible rather than ending the fit.
fn is_infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::Stability { .. } | Error::Parameter(_) | Error::Domain { .. } | Error::Degenerate(_) | Error::Range { .. }
    )
}

/// Optimises `objective` over `space`, starting from `initial`.
///
/// Infeasible trial points (unstable kernels, out-of-domain parameters) score
/// `+inf`; any other error aborts the fit and is returned as is.
pub fn fit<S, F>(
    space: &S,
    initial: &S::Params,
    objective: F,
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Result<FitResult<S::Params>>
where
    S: ParameterSpace + Sync,
    S::Params: Sync,
    F: Fn(&S::Params) -> Result<f64> + Sync,
{
    // The start must evaluate cleanly, so setup problems surface directly.
    let start_value = objective(initial)?;
    if !start_value.is_finite() {
        return Err(Error::NonFinite {
            value: start_value,
            point: space.encode(initial),
        });
    }
    let fatal: Mutex<Option<Error>> = Mutex::new(None);
    let f = |x: &[f64]| match objective(&space.decode(initial, x)) {
        Ok(v) => v,
        Err(e) if is_infeasible(&e) => f64::INFINITY,
        Err(e) => {
            fatal.lock().expect("error slot poisoned").get_or_insert(e);
            f64::NAN
        }
    };
    let x0 = space.encode(initial);
    let result = minimize(&f, &x0, bounds, opts);
    if let Some(e) = fatal.into_inner().expect("error slot poisoned") {
        return Err(e);
    }
    let r = result?;
    Ok(FitResult {
        params: space.decode(initial, &r.x),
        objective_value: r.value,
        evaluations: r.evaluations,
        converged: r.converged,
        trace: r.trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub test_set: String,
    pub train_sets: Vec<String>,
    pub result: FitResult<CompensationParams>,
}

/// Leave-one-set-out chromatic fits.
///
/// Each fold only ever sees observer data of its training sets.
#[allow(clippy::too_many_arguments)]
pub fn chromatic_cross_validation(
    initial: &CompensationParams,
    space: &CompensationSpace,
    bounds: &Bounds,
    data: &[ObserverDatum],
    stimuli: &[ChromaticStimulus],
    screens: &ScreenPair,
    sets: &[String],
    opts: &NelderMeadOptions,
) -> Result<Vec<Fold>> {
    if sets.len() < 2 {
        return Err(Error::Parameter("cross-validation needs at least two colour sets".into()));
    }
    sets.iter()
        .map(|test| {
            let train: Vec<String> = sets.iter().filter(|s| *s != test).cloned().collect();
            let train_data: Vec<ObserverDatum> =
                data.iter().filter(|d| train.contains(&d.stimulus_id)).cloned().collect();
            let result = fit(
                space,
                initial,
                |p| chromatic_objective(p, &train_data, stimuli, screens, &train),
                bounds,
                opts,
            )?;
            Ok(Fold {
                test_set: test.clone(),
                train_sets: train,
                result,
            })
        })
        .collect()
}
