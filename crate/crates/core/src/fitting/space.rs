//! Flat parameter vectors for the optimiser.
//!
//! Each space lists the fields it exposes; everything else is taken from a
//! base parameter set. Gaussian sigmas travel as natural logarithms.

use serde::{Deserialize, Serialize};

use super::nelder_mead::Bounds;
use crate::compensation::CompensationParams;
use crate::kernels::{GaussianMix, GaussianTerm, RationalFilterCoeffs};
use crate::lhei::{ContrastKernel, LheiParams, MeanKernel};

pub trait ParameterSpace {
    type Params: Clone;
    fn dim(&self) -> usize;
    fn encode(&self, params: &Self::Params) -> Vec<f64>;
    fn decode(&self, base: &Self::Params, x: &[f64]) -> Self::Params;
    fn default_bounds(&self) -> Bounds;
}

const LOG_SIGMA_RANGE: (f64, f64) = (-1.386_294_361_119_890_7, 6.684_611_727_667_927); // ln 0.25 .. ln 800

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelGroup {
    Achromatic,
    Chromatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coefficient {
    C1,
    C2,
    D1,
    D2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "field")]
pub enum CompensationField {
    NA,
    NB,
    Coefficient { group: KernelGroup, which: Coefficient },
    Weight { group: KernelGroup, term: usize },
    Sigma { group: KernelGroup, term: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationSpace {
    pub fields: Vec<CompensationField>,
}

impl CompensationSpace {
    /// Both exponents plus every coefficient, weight and sigma of one kernel.
    pub fn full(group: KernelGroup, params: &CompensationParams) -> Self {
        let terms = coeffs(params, group).k_f.terms.len();
        let mut fields = vec![CompensationField::NA, CompensationField::NB];
        for which in [Coefficient::C1, Coefficient::C2, Coefficient::D1, Coefficient::D2] {
            fields.push(CompensationField::Coefficient { group, which });
        }
        for term in 0..terms {
            fields.push(CompensationField::Weight { group, term });
        }
        for term in 0..terms {
            fields.push(CompensationField::Sigma { group, term });
        }
        Self { fields }
    }
}

/// Term `i` of `mix`, appending zero-weight terms when the base is shorter.
fn term_mut(mix: &mut GaussianMix, i: usize) -> &mut GaussianTerm {
    while mix.terms.len() <= i {
        mix.terms.push(GaussianTerm { weight: 0.0, sigma_px: 1.0 });
    }
    &mut mix.terms[i]
}

fn coeffs(p: &CompensationParams, group: KernelGroup) -> &RationalFilterCoeffs {
    match group {
        KernelGroup::Achromatic => &p.achromatic,
        KernelGroup::Chromatic => &p.chromatic,
    }
}

fn coeffs_mut(p: &mut CompensationParams, group: KernelGroup) -> &mut RationalFilterCoeffs {
    match group {
        KernelGroup::Achromatic => &mut p.achromatic,
        KernelGroup::Chromatic => &mut p.chromatic,
    }
}

impl ParameterSpace for CompensationSpace {
    type Params = CompensationParams;

    fn dim(&self) -> usize {
        self.fields.len()
    }

    fn encode(&self, p: &CompensationParams) -> Vec<f64> {
        self.fields
            .iter()
            .map(|f| match *f {
                CompensationField::NA => p.n_a,
                CompensationField::NB => p.n_b,
                CompensationField::Coefficient { group, which } => {
                    let c = coeffs(p, group);
                    match which {
                        Coefficient::C1 => c.c1,
                        Coefficient::C2 => c.c2,
                        Coefficient::D1 => c.d1,
                        Coefficient::D2 => c.d2,
                    }
                }
                CompensationField::Weight { group, term } => coeffs(p, group).k_f.terms[term].weight,
                CompensationField::Sigma { group, term } => coeffs(p, group).k_f.terms[term].sigma_px.ln(),
            })
            .collect()
    }

    fn decode(&self, base: &CompensationParams, x: &[f64]) -> CompensationParams {
        let mut p = base.clone();
        for (f, &v) in self.fields.iter().zip(x) {
            match *f {
                CompensationField::NA => p.n_a = v,
                CompensationField::NB => p.n_b = v,
                CompensationField::Coefficient { group, which } => {
                    let c = coeffs_mut(&mut p, group);
                    match which {
                        Coefficient::C1 => c.c1 = v,
                        Coefficient::C2 => c.c2 = v,
                        Coefficient::D1 => c.d1 = v,
                        Coefficient::D2 => c.d2 = v,
                    }
                }
                CompensationField::Weight { group, term } => {
                    term_mut(&mut coeffs_mut(&mut p, group).k_f, term).weight = v
                }
                CompensationField::Sigma { group, term } => {
                    term_mut(&mut coeffs_mut(&mut p, group).k_f, term).sigma_px = v.exp()
                }
            }
        }
        p
    }

    fn default_bounds(&self) -> Bounds {
        let (lower, upper) = self
            .fields
            .iter()
            .map(|f| match f {
                CompensationField::NA | CompensationField::NB => (0.05, 5.0),
                CompensationField::Coefficient { .. } | CompensationField::Weight { .. } => (-20.0, 20.0),
                CompensationField::Sigma { .. } => LOG_SIGMA_RANGE,
            })
            .unzip();
        Bounds { lower, upper }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "field")]
pub enum LheiField {
    Alpha,
    Beta,
    Gamma,
    GainPos,
    GainNeg,
    Slope,
    MeanWeight { term: usize },
    MeanSigma { term: usize },
    ContrastWeight { term: usize },
    ContrastSigma { term: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LheiSpace {
    pub fields: Vec<LheiField>,
}

impl LheiSpace {
    /// Weights, sigmoid and every Gaussian term of the mixture kernels.
    pub fn full(p: &LheiParams) -> Self {
        let mut fields = vec![
            LheiField::Alpha,
            LheiField::Beta,
            LheiField::Gamma,
            LheiField::GainPos,
            LheiField::GainNeg,
            LheiField::Slope,
        ];
        if let MeanKernel::Mix { mix } = &p.k_m {
            for term in 0..mix.terms.len() {
                fields.push(LheiField::MeanWeight { term });
                fields.push(LheiField::MeanSigma { term });
            }
        }
        if let ContrastKernel::Mix { mix } = &p.k_c {
            for term in 0..mix.terms.len() {
                fields.push(LheiField::ContrastWeight { term });
                fields.push(LheiField::ContrastSigma { term });
            }
        }
        Self { fields }
    }
}

fn mean_mix(p: &LheiParams) -> Option<&GaussianMix> {
    match &p.k_m {
        MeanKernel::Mix { mix } => Some(mix),
        _ => None,
    }
}

fn contrast_mix(p: &LheiParams) -> Option<&GaussianMix> {
    match &p.k_c {
        ContrastKernel::Mix { mix } => Some(mix),
        ContrastKernel::Flat => None,
    }
}

impl ParameterSpace for LheiSpace {
    type Params = LheiParams;

    fn dim(&self) -> usize {
        self.fields.len()
    }

    fn encode(&self, p: &LheiParams) -> Vec<f64> {
        let missing = "field refers to a kernel the parameters do not have";
        self.fields
            .iter()
            .map(|f| match *f {
                LheiField::Alpha => p.alpha,
                LheiField::Beta => p.beta,
                LheiField::Gamma => p.gamma,
                LheiField::GainPos => p.sigmoid.gain_pos,
                LheiField::GainNeg => p.sigmoid.gain_neg,
                LheiField::Slope => p.sigmoid.slope,
                LheiField::MeanWeight { term } => mean_mix(p).expect(missing).terms[term].weight,
                LheiField::MeanSigma { term } => mean_mix(p).expect(missing).terms[term].sigma_px.ln(),
                LheiField::ContrastWeight { term } => contrast_mix(p).expect(missing).terms[term].weight,
                LheiField::ContrastSigma { term } => contrast_mix(p).expect(missing).terms[term].sigma_px.ln(),
            })
            .collect()
    }

    fn decode(&self, base: &LheiParams, x: &[f64]) -> LheiParams {
        let mut p = base.clone();
        for (f, &v) in self.fields.iter().zip(x) {
            match *f {
                LheiField::Alpha => p.alpha = v,
                LheiField::Beta => p.beta = v,
                LheiField::Gamma => p.gamma = v,
                LheiField::GainPos => p.sigmoid.gain_pos = v,
                LheiField::GainNeg => p.sigmoid.gain_neg = v,
                LheiField::Slope => p.sigmoid.slope = v,
                LheiField::MeanWeight { term } | LheiField::MeanSigma { term } => {
                    if let MeanKernel::Mix { mix } = &mut p.k_m {
                        let t = term_mut(mix, term);
                        if matches!(f, LheiField::MeanWeight { .. }) {
                            t.weight = v;
                        } else {
                            t.sigma_px = v.exp();
                        }
                    }
                }
                LheiField::ContrastWeight { term } | LheiField::ContrastSigma { term } => {
                    if let ContrastKernel::Mix { mix } = &mut p.k_c {
                        let t = term_mut(mix, term);
                        if matches!(f, LheiField::ContrastWeight { .. }) {
                            t.weight = v;
                        } else {
                            t.sigma_px = v.exp();
                        }
                    }
                }
            }
        }
        p
    }

    fn default_bounds(&self) -> Bounds {
        let (lower, upper) = self
            .fields
            .iter()
            .map(|f| match f {
                LheiField::Alpha | LheiField::Beta | LheiField::Gamma => (0.0, 10.0),
                LheiField::GainPos | LheiField::GainNeg => (1e-3, 10.0),
                LheiField::Slope => (1e-2, 100.0),
                LheiField::MeanWeight { .. } | LheiField::ContrastWeight { .. } => (-10.0, 10.0),
                LheiField::MeanSigma { .. } | LheiField::ContrastSigma { .. } => LOG_SIGMA_RANGE,
            })
            .unzip();
        Bounds { lower, upper }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lhei::{ContrastEvaluation, SigmoidSpec};

    #[test]
    fn compensation_round_trip() {
        let p = CompensationParams::paper_achromatic();
        let space = CompensationSpace::full(KernelGroup::Achromatic, &p);
        assert_eq!(space.dim(), 14);
        let x = space.encode(&p);
        let back = space.decode(&CompensationParams::identity(), &x);
        assert_eq!(back.n_a, p.n_a);
        assert_eq!(back.achromatic.c1, p.achromatic.c1);
        for (a, b) in back.achromatic.k_f.terms.iter().zip(&p.achromatic.k_f.terms) {
            assert!((a.sigma_px - b.sigma_px).abs() < 1e-12);
            assert_eq!(a.weight, b.weight);
        }
        let bounds = space.default_bounds();
        assert!(x.iter().zip(&bounds.lower).zip(&bounds.upper).all(|((v, l), u)| v >= l && v <= u));
    }

    #[test]
    fn lhei_round_trip() {
        let p = LheiParams {
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.3,
            k_m: MeanKernel::Mix {
                mix: GaussianMix::new(&[(0.5, 10.0), (0.5, 40.0)]).unwrap(),
            },
            k_c: ContrastKernel::Flat,
            sigmoid: SigmoidSpec::symmetric(1.0, 4.0),
            dt: 0.1,
            tol: 1e-5,
            max_iters: 100,
            contrast_evaluation: ContrastEvaluation::Auto,
            nr_exponent: None,
        };
        let space = LheiSpace::full(&p);
        assert_eq!(space.dim(), 10);
        let mut x = space.encode(&p);
        x[2] = 0.7;
        x[9] = 3.0f64.ln();
        let q = space.decode(&p, &x);
        assert_eq!(q.gamma, 0.7);
        let MeanKernel::Mix { mix } = &q.k_m else { panic!() };
        assert!((mix.terms[1].sigma_px - 3.0).abs() < 1e-12);
    }
}
