//! TOML configuration: named screens, presets, colour sets and LHEI parameters.
//!
//! Built-in screens (`cinema`, `mobile`) and presets are always available; a
//! config file can add entries or override them by name.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use induction_core::colorimetry::ScreenSpec;
use induction_core::compensation::{CompensationParams, PRESET_NAMES};
use induction_core::kernels::GaussianMix;
use induction_core::lhei::{ContrastEvaluation, ContrastKernel, LheiParams, MeanKernel, SigmoidSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Colours of one concentric test pattern, CIELAB relative to the screen white.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorSet {
    /// First inducer (next to the test ring), then second inducer.
    pub ring_colors_lab: [[f64; 3]; 2],
    pub test_color_lab: [f64; 3],
    #[serde(default)]
    pub background_lab: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub screens: BTreeMap<String, ScreenSpec>,
    #[serde(default)]
    pub presets: BTreeMap<String, CompensationParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lhei: Option<LheiParams>,
    #[serde(default)]
    pub sets: BTreeMap<String, ColorSet>,
    #[serde(default)]
    pub paths: Paths,
    /// When set, every preset's kernels are stability-checked at this square
    /// image size while loading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub working_size_px: Option<usize>,
}

/// LHEI parameters used when the config has no `[lhei]` table.
pub fn default_lhei() -> LheiParams {
    LheiParams {
        alpha: 1.0,
        beta: 1.0,
        gamma: 0.4,
        k_m: MeanKernel::Mix {
            mix: GaussianMix::new(&[(0.6, 20.0), (0.4, 80.0)]).expect("valid default mixture"),
        },
        k_c: ContrastKernel::Mix {
            mix: GaussianMix::new(&[(0.7, 15.0), (0.3, 60.0)]).expect("valid default mixture"),
        },
        sigmoid: SigmoidSpec::symmetric(1.0, 5.0),
        dt: 0.05,
        tol: 1e-5,
        max_iters: 2000,
        contrast_evaluation: ContrastEvaluation::Auto,
        nr_exponent: Some(0.75),
    }
}

impl Config {
    /// Built-ins only.
    pub fn builtin() -> Self {
        let mut c = Self::default();
        c.add_builtins();
        c
    }

    fn add_builtins(&mut self) {
        self.screens.entry("cinema".into()).or_insert_with(ScreenSpec::cinema);
        self.screens.entry("mobile".into()).or_insert_with(ScreenSpec::mobile);
        for name in PRESET_NAMES {
            self.presets
                .entry(name.into())
                .or_insert_with(|| CompensationParams::preset(name).expect("built-in preset"));
        }
    }

    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let mut c: Config = toml::from_str(text).map_err(|e| CliError::config(format!("{origin}: {e}")))?;
        c.add_builtins();
        c.validate().map_err(|e| e.context(origin))?;
        Ok(c)
    }

    /// Loads `path` if given, otherwise the built-ins.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::builtin()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        for (name, s) in &self.screens {
            s.validate().map_err(|e| CliError::from(e).context(format!("screen {name}")))?;
        }
        for (name, p) in &self.presets {
            p.validate().map_err(|e| CliError::from(e).context(format!("preset {name}")))?;
            if let Some(size) = self.working_size_px {
                p.validate_at(size, size)
                    .map_err(|e| CliError::from(e).context(format!("preset {name} at {size} px")))?;
            }
        }
        if let Some(l) = &self.lhei {
            l.validate().map_err(|e| CliError::from(e).context("lhei"))?;
        }
        Ok(())
    }

    pub fn screen(&self, name: &str) -> CliResult<&ScreenSpec> {
        self.screens.get(name).ok_or_else(|| {
            CliError::config(format!(
                "unknown screen {name:?} (known: {})",
                self.screens.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn preset(&self, name: &str) -> CliResult<&CompensationParams> {
        self.presets.get(name).ok_or_else(|| {
            CliError::config(format!(
                "unknown preset {name:?} (known: {})",
                self.presets.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn color_set(&self, name: &str) -> CliResult<&ColorSet> {
        self.sets
            .get(name)
            .ok_or_else(|| CliError::config(format!("colour set {name:?} is not defined under [sets]")))
    }

    pub fn lhei_params(&self) -> LheiParams {
        self.lhei.clone().unwrap_or_else(default_lhei)
    }
}

/// A config fragment holding fitted results, written by `fit`.
#[derive(Debug, Default, Serialize)]
pub struct FittedOutput {
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub presets: BTreeMap<String, CompensationParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhei: Option<LheiParams>,
}

impl FittedOutput {
    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = toml::to_string_pretty(self).map_err(|e| CliError::processing(format!("serialising results: {e}")))?;
        fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }
}
