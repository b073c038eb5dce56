use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorimetry::{delta_e, display_to_lab_pixel, xyz_to_lab_pixel, ColorEncoding, ScreenSpec, TriImage};
use crate::compensation::{compensate_detailed, CompensateOptions, CompensationParams};
use crate::error::{Error, Result};
use crate::lhei::{ring_difference, LheiParams};
use crate::plane::Mask;
use crate::stimuli::{BarPatternSpec, BarStimulus, RingStimulus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measurement {
    /// cd/m^2
    Luminance(f64),
    Lab([f64; 3]),
}

impl Measurement {
    fn components(&self) -> Vec<f64> {
        match self {
            Measurement::Luminance(v) => vec![*v],
            Measurement::Lab(v) => v.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverDatum {
    pub stimulus_id: String,
    pub response: Measurement,
    pub ci_low: Measurement,
    pub ci_high: Measurement,
    #[serde(default)]
    pub condition: BTreeMap<String, String>,
}

impl ObserverDatum {
    pub fn new(
        stimulus_id: impl Into<String>,
        response: Measurement,
        ci_low: Measurement,
        ci_high: Measurement,
        condition: BTreeMap<String, String>,
    ) -> Result<Self> {
        let d = Self {
            stimulus_id: stimulus_id.into(),
            response,
            ci_low,
            ci_high,
            condition,
        };
        d.validate()?;
        Ok(d)
    }

    /// A datum with a degenerate (zero-width) confidence interval.
    pub fn exact(stimulus_id: impl Into<String>, response: Measurement) -> Self {
        Self {
            stimulus_id: stimulus_id.into(),
            response,
            ci_low: response,
            ci_high: response,
            condition: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (r, lo, hi) = (self.response.components(), self.ci_low.components(), self.ci_high.components());
        if r.len() != lo.len() || r.len() != hi.len() {
            return Err(Error::Parameter(format!(
                "datum {}: response and interval have different kinds",
                self.stimulus_id
            )));
        }
        for i in 0..r.len() {
            if !(lo[i] <= r[i] && r[i] <= hi[i]) {
                return Err(Error::Parameter(format!(
                    "datum {}: response {} outside [{}, {}]",
                    self.stimulus_id, r[i], lo[i], hi[i]
                )));
            }
        }
        Ok(())
    }
}

/// Source and destination screens of a compensation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenPair {
    pub src: ScreenSpec,
    pub dst: ScreenSpec,
}

impl Default for ScreenPair {
    fn default() -> Self {
        Self {
            src: ScreenSpec::cinema(),
            dst: ScreenSpec::mobile(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Probe {
    pub id: String,
    pub mask: Mask,
}

/// A bar image and the comparison bars read off it.
#[derive(Debug, Clone)]
pub struct AchromaticStimulus {
    pub image: TriImage,
    pub probes: Vec<Probe>,
    /// Luminance of full display drive, cd/m^2.
    pub white_luminance: f64,
}

impl AchromaticStimulus {
    /// Probes `"{prefix}/white"` and `"{prefix}/black"` for the two sides.
    pub fn from_bars(prefix: &str, stimulus: &BarStimulus, spec: &BarPatternSpec) -> Self {
        Self {
            image: stimulus.image.clone(),
            probes: vec![
                Probe {
                    id: format!("{prefix}/white"),
                    mask: stimulus.over_white.clone(),
                },
                Probe {
                    id: format!("{prefix}/black"),
                    mask: stimulus.over_black.clone(),
                },
            ],
            white_luminance: spec.white_luminance,
        }
    }
}

fn masked_mean<F: Fn(usize) -> f64>(mask: &Mask, value: F) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, _) in mask.as_slice().iter().enumerate().filter(|(_, m)| **m) {
        sum += value(i);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Parameter("probe mask is empty".into()));
    }
    Ok(sum / n as f64)
}

fn image_luminance(image: &TriImage, screen: &ScreenSpec, white_luminance: f64, mask: &Mask) -> Result<f64> {
    let m = screen.rgb_to_xyz_matrix()?;
    let g = screen.gamma;
    let ch = image.channels();
    masked_mean(mask, |i| {
        let rgb = [ch[0].as_slice()[i], ch[1].as_slice()[i], ch[2].as_slice()[i]];
        m.apply(rgb.map(|v| v.max(0.0).powf(g)))[1] * white_luminance
    })
}

/// Mean luminance (cd/m^2) of each probe before compensation.
pub fn original_luminances(stimuli: &[AchromaticStimulus], screen: &ScreenSpec) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for s in stimuli {
        for probe in &s.probes {
            out.insert(probe.id.clone(), image_luminance(&s.image, screen, s.white_luminance, &probe.mask)?);
        }
    }
    Ok(out)
}

/// Mean luminance of each probe after compensating its image.
pub fn model_luminances(
    p: &CompensationParams,
    stimuli: &[AchromaticStimulus],
    screens: &ScreenPair,
) -> Result<BTreeMap<String, f64>> {
    let per_stimulus: Vec<Vec<(String, f64)>> = stimuli
        .par_iter()
        .map(|s| {
            let report = compensate_detailed(&s.image, &screens.src, &screens.dst, p, &CompensateOptions::default())?;
            s.probes
                .iter()
                .map(|probe| {
                    image_luminance(&report.image, &screens.dst, s.white_luminance, &probe.mask)
                        .map(|l| (probe.id.clone(), l))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_stimulus.into_iter().flatten().collect())
}

fn luminance_of(d: &ObserverDatum) -> Result<f64> {
    match d.response {
        Measurement::Luminance(v) => Ok(v),
        Measurement::Lab(_) => Err(Error::Parameter(format!(
            "datum {} is a colour match, expected a luminance",
            d.stimulus_id
        ))),
    }
}

/// Sum of squared luminance errors over every datum.
pub fn achromatic_objective(
    p: &CompensationParams,
    data: &[ObserverDatum],
    stimuli: &[AchromaticStimulus],
    screens: &ScreenPair,
) -> Result<f64> {
    let model = model_luminances(p, stimuli, screens)?;
    achromatic_error(&model, data)
}

/// Sum of squared differences between model values and observer responses.
pub fn achromatic_error(model: &BTreeMap<String, f64>, data: &[ObserverDatum]) -> Result<f64> {
    let mut sse = 0.0;
    for d in data {
        let m = model
            .get(&d.stimulus_id)
            .ok_or_else(|| Error::MissingData(format!("no stimulus for datum {}", d.stimulus_id)))?;
        sse += (luminance_of(d)? - m).powi(2);
    }
    Ok(sse)
}

/// One colour set: the test pattern and its ring mask.
#[derive(Debug, Clone)]
pub struct ChromaticStimulus {
    pub set_id: String,
    pub image: TriImage,
    pub mask: Mask,
}

impl ChromaticStimulus {
    pub fn from_rings(set_id: impl Into<String>, stimulus: &RingStimulus) -> Self {
        Self {
            set_id: set_id.into(),
            image: stimulus.test_image.clone(),
            mask: stimulus.test_mask.clone(),
        }
    }
}

/// Mean CIELAB of the test ring after compensation, read directly from the
/// XYZ stage relative to the source white.
pub fn model_ring_lab(p: &CompensationParams, stimulus: &ChromaticStimulus, screens: &ScreenPair) -> Result<[f64; 3]> {
    let report = compensate_detailed(&stimulus.image, &screens.src, &screens.dst, p, &CompensateOptions::default())?;
    let white = screens.src.white_xyz()?;
    mean_lab(&stimulus.mask, |i| {
        let c = report.xyz.channels();
        xyz_to_lab_pixel([c[0].as_slice()[i], c[1].as_slice()[i], c[2].as_slice()[i]], white).0
    })
}

/// Mean CIELAB of the uncompensated test ring.
pub fn original_ring_lab(stimulus: &ChromaticStimulus, screen: &ScreenSpec) -> Result<[f64; 3]> {
    stimulus.image.expect_encoding(ColorEncoding::DisplayRGB)?;
    let mut err = None;
    let lab = mean_lab(&stimulus.mask, |i| {
        let w = stimulus.image.width();
        match display_to_lab_pixel(stimulus.image.pixel(i % w, i / w), screen) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                [0.0; 3]
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(lab),
    }
}

fn mean_lab(mask: &Mask, mut lab: impl FnMut(usize) -> [f64; 3]) -> Result<[f64; 3]> {
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for (i, _) in mask.as_slice().iter().enumerate().filter(|(_, m)| **m) {
        let v = lab(i);
        for k in 0..3 {
            acc[k] += v[k];
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Parameter("test-ring mask is empty".into()));
    }
    Ok(acc.map(|v| v / n as f64))
}

fn lab_of(d: &ObserverDatum) -> Result<[f64; 3]> {
    match d.response {
        Measurement::Lab(v) => Ok(v),
        Measurement::Luminance(_) => Err(Error::Parameter(format!(
            "datum {} is a luminance, expected a colour match",
            d.stimulus_id
        ))),
    }
}

fn observer_lab<'a>(data: &'a [ObserverDatum], set: &str) -> Result<&'a ObserverDatum> {
    data.iter()
        .find(|d| d.stimulus_id == set)
        .ok_or_else(|| Error::MissingData(format!("no observer match for colour set {set}")))
}

fn stimulus_for<'a>(stimuli: &'a [ChromaticStimulus], set: &str) -> Result<&'a ChromaticStimulus> {
    stimuli
        .iter()
        .find(|s| s.set_id == set)
        .ok_or_else(|| Error::MissingData(format!("no stimulus for colour set {set}")))
}

/// Per-set colour difference between the compensated ring and the observer match.
pub fn chromatic_errors(
    p: &CompensationParams,
    data: &[ObserverDatum],
    stimuli: &[ChromaticStimulus],
    screens: &ScreenPair,
    sets: &[String],
) -> Result<Vec<f64>> {
    sets.par_iter()
        .map(|set| {
            let target = lab_of(observer_lab(data, set)?)?;
            let model = model_ring_lab(p, stimulus_for(stimuli, set)?, screens)?;
            Ok(delta_e(model, target))
        })
        .collect()
}

/// Worst colour difference over the training sets.
pub fn chromatic_objective(
    p: &CompensationParams,
    data: &[ObserverDatum],
    stimuli: &[ChromaticStimulus],
    screens: &ScreenPair,
    train_sets: &[String],
) -> Result<f64> {
    if train_sets.is_empty() {
        return Err(Error::Parameter("chromatic objective needs at least one training set".into()));
    }
    Ok(chromatic_errors(p, data, stimuli, screens, train_sets)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Original (uncorrected) ring error per set.
pub fn original_errors(
    data: &[ObserverDatum],
    stimuli: &[ChromaticStimulus],
    screen: &ScreenSpec,
    sets: &[String],
) -> Result<Vec<f64>> {
    sets.iter()
        .map(|set| {
            let target = lab_of(observer_lab(data, set)?)?;
            Ok(delta_e(original_ring_lab(stimulus_for(stimuli, set)?, screen)?, target))
        })
        .collect()
}

/// Test pattern paired with the comparison ring as adjusted by observers.
#[derive(Debug, Clone)]
pub struct LheiCase {
    pub id: String,
    pub test_image: TriImage,
    pub comparison_image: TriImage,
    pub mask: Mask,
}

/// Sum over cases of the squared opponent-space distance between the two
/// steady-state rings.
pub fn lhei_objective(p: &LheiParams, cases: &[LheiCase], screen: &ScreenSpec) -> Result<f64> {
    let parts: Vec<f64> = cases
        .par_iter()
        .map(|c| {
            let d = ring_difference(&c.test_image, &c.comparison_image, &c.mask, screen, p)?;
            Ok(d.iter().map(|v| v * v).sum::<f64>())
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

/// Ids of the colour sets mentioned in `data`, in sorted order.
pub fn data_sets(data: &[ObserverDatum]) -> Vec<String> {
    data.iter()
        .map(|d| d.stimulus_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
