//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use induction_core::colorimetry::ScreenSpec;
use induction_core::compensation::{compensate_detailed, CompensateOptions, CompensationParams};
use induction_core::fitting::{
    self, chromatic_cross_validation, chromatic_objective, data_sets, table3_report, AchromaticStimulus,
    ChromaticStimulus, CompensationSpace, FitResult, KernelGroup, LheiCase, LheiSpace, NelderMeadOptions,
    ObserverDatum, ParameterSpace, ScreenPair,
};
use induction_core::kernels::{build_s_c, validate_stability, FilterGeometry};
use induction_core::lhei::LheiParams;
use induction_core::stimuli::{
    generate_bars, generate_rings, factor_grid, BarPatternSpec, BarStimulus, RingPatternSpec, RingStimulus,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{ColorSet, Config, FittedOutput};
use crate::error::{CliError, CliResult};
use crate::imageio::{check_output_path, read_image, write_image, write_mask, write_plane_pfm, Format};
use crate::observer::{read_observer_csv, Quantity, Row};
use crate::{CompensateArgs, FitArgs, Group, InspectArgs, Objective, OutputFormat, StimulusArgs, StimulusKind};

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Png8 => Format::Png8,
            OutputFormat::Png16 => Format::Png16,
            OutputFormat::Pfm => Format::Pfm,
        }
    }
}

fn required(arg: Option<&PathBuf>, fallback: Option<&PathBuf>, what: &str) -> CliResult<PathBuf> {
    arg.or(fallback)
        .cloned()
        .ok_or_else(|| CliError::config(format!("no {what} path given on the command line or under [paths]")))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

pub fn compensate(config: &Config, args: &CompensateArgs) -> CliResult<()> {
    let input = required(args.input.as_ref(), config.paths.input.as_ref(), "input")?;
    let output = required(args.out.as_ref(), config.paths.output.as_ref(), "output")?;
    let src = config.screen(&args.src_screen)?;
    let dst = config.screen(&args.dst_screen)?;
    let preset = config.preset(&args.preset)?;

    let (image, input_format) = read_image(&input)?;
    let format = args.format.map_or(input_format, Format::from);
    check_output_path(&output, format)?;
    let (w, h) = image.dims();
    preset
        .validate_at(w, h)
        .map_err(|e| CliError::from(e).context(format!("preset {} at {w}x{h}", args.preset)))?;
    let report = compensate_detailed(&image, src, dst, preset, &CompensateOptions::default())
        .map_err(|e| CliError::from(e).context(input.display()))?;
    write_image(&output, &report.image, format)?;

    let [l, m, s] = report.response_clipped_fraction;
    println!("wrote {} ({w}x{h}, {format:?})", output.display());
    println!("response clipped fraction: L {l:.3e}  M {m:.3e}  S {s:.3e}");
    println!("output clamped fraction:   {:.3e}", report.output_clamped_fraction);
    println!("negative LMS pixels:       {}", report.negative_lms_pixels);
    println!("clamped L* pixels:         {}", report.lab_clamped_pixels);
    Ok(())
}

/// Replaces fields of `base` with those given in the TOML file at `path`.
fn with_overrides<T: Serialize + DeserializeOwned>(base: &T, path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let err = |e: &dyn std::fmt::Display| CliError::config(format!("{}: {e}", path.display()));
    let overrides: toml::Table = toml::from_str(&text).map_err(|e| err(&e))?;
    let mut merged = toml::Table::try_from(base).map_err(|e| err(&e))?;
    for (key, value) in overrides {
        if !merged.contains_key(&key) {
            return Err(err(&format!("unknown pattern field {key:?}")));
        }
        merged.insert(key, value);
    }
    merged.try_into().map_err(|e| err(&e))
}

/// Colours used for rings when neither `--set` nor a spec file picks them.
fn default_ring_colors() -> ColorSet {
    ColorSet {
        ring_colors_lab: [[55.0, 30.0, -25.0], [55.0, -25.0, 30.0]],
        test_color_lab: [55.0, 8.0, 8.0],
        background_lab: None,
    }
}

fn ring_spec(screen: &ScreenSpec, size: usize, set: &ColorSet) -> CliResult<RingPatternSpec> {
    let mut spec = RingPatternSpec::for_screen(screen, size, set.ring_colors_lab, set.test_color_lab)?;
    if let Some(bg) = set.background_lab {
        spec.background = bg;
    }
    Ok(spec)
}

/// `dir/stem_suffix.png` for a mask belonging to `image_path`.
fn sibling(image_path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = image_path.file_stem().and_then(|s| s.to_str()).unwrap_or("stimulus");
    image_path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Pfm => "pfm",
        Format::Png8 | Format::Png16 => "png",
    }
}

fn write_bars(path: &Path, stimulus: &BarStimulus, format: Format) -> CliResult<()> {
    write_image(path, &stimulus.image, format)?;
    write_mask(&sibling(path, "mask_white", "png"), &stimulus.over_white)?;
    write_mask(&sibling(path, "mask_black", "png"), &stimulus.over_black)
}

fn write_rings(path: &Path, stimulus: &RingStimulus, format: Format) -> CliResult<()> {
    write_image(path, &stimulus.test_image, format)?;
    write_image(&sibling(path, "comparison", extension(format)), &stimulus.comparison_image, format)?;
    write_mask(&sibling(path, "mask_test", "png"), &stimulus.test_mask)
}

pub fn stimulus(config: &Config, args: &StimulusArgs) -> CliResult<()> {
    let screen = config.screen(&args.screen)?;
    let format = Format::from(args.format);
    match args.kind {
        StimulusKind::Bars => {
            let mut base = BarPatternSpec::for_screen(screen, args.size, args.width_deg)?;
            if let Some(path) = &args.spec {
                base = with_overrides(&base, path)?;
            }
            if args.factor_grid {
                let grid = factor_grid(&base);
                // Generate everything first so a bad spec leaves no partial output.
                let stimuli = grid.iter().map(generate_bars).collect::<Result<Vec<_>, _>>()?;
                create_dir(&args.out)?;
                create_dir(&args.out.join("masks"))?;
                for (spec, stimulus) in grid.iter().zip(&stimuli) {
                    let name = format!(
                        "bars_{}deg_{}cd.{}",
                        spec.comparison_bar_width_deg,
                        spec.gray_luminance,
                        extension(format)
                    );
                    let masks = args.out.join("masks").join(&name);
                    write_image(&args.out.join(&name), &stimulus.image, format)?;
                    write_mask(&sibling(&masks, "mask_white", "png"), &stimulus.over_white)?;
                    write_mask(&sibling(&masks, "mask_black", "png"), &stimulus.over_black)?;
                }
                println!("wrote {} bar patterns to {}", grid.len(), args.out.display());
            } else {
                let stimulus = generate_bars(&base)?;
                write_bars(&args.out, &stimulus, format)?;
                let g = &stimulus.geometry;
                println!(
                    "bars: inducing {:.2} px, comparison {:.2} px, {} comparison bars per side",
                    g.inducing_px,
                    g.comparison_px,
                    g.gray_over_white.len()
                );
                println!(
                    "probe pixels: over white {}, over black {}",
                    stimulus.over_white.count(),
                    stimulus.over_black.count()
                );
            }
        }
        StimulusKind::Rings => {
            if args.factor_grid {
                return Err(CliError::config("--factor-grid applies to bar patterns only"));
            }
            let set = match &args.set {
                Some(name) => config.color_set(name)?.clone(),
                None => default_ring_colors(),
            };
            let mut spec = ring_spec(screen, args.size, &set)?;
            if let Some(path) = &args.spec {
                spec = with_overrides(&spec, path)?;
            }
            let stimulus = generate_rings(&spec, screen)?;
            write_rings(&args.out, &stimulus, format)?;
            let g = &stimulus.geometry;
            let ppd = spec.pixels_per_degree;
            println!(
                "rings: pattern {:.2} deg, test ring centre line {:.2} deg, {} inducing rings",
                2.0 * g.pattern_radius / ppd,
                (g.test.start + g.test.end) / ppd,
                g.inducers.len()
            );
            println!(
                "ring width {:.2} px, test-ring pixels {}",
                g.test.end - g.test.start,
                stimulus.test_mask.count()
            );
        }
    }
    Ok(())
}

fn observer_data(path: &Path, quantity: Quantity) -> CliResult<(Vec<Row>, Vec<ObserverDatum>)> {
    let rows = read_observer_csv(path, quantity)?;
    let data = rows.iter().map(|r| r.datum.clone()).collect();
    Ok((rows, data))
}

fn nm_options(args: &FitArgs) -> NelderMeadOptions {
    NelderMeadOptions {
        max_evaluations: args.max_evaluations,
        seed: args.seed,
        ..NelderMeadOptions::default()
    }
}

fn summarize<P>(label: &str, result: &FitResult<P>) {
    let start = result.trace.first().copied().unwrap_or(result.objective_value);
    println!(
        "{label}: objective {start:.6e} -> {:.6e} after {} evaluations ({})",
        result.objective_value,
        result.evaluations,
        if result.converged { "converged" } else { "budget exhausted" }
    );
    if result.trace.len() > 2 {
        let marks: Vec<String> = [0.25, 0.5, 0.75]
            .iter()
            .map(|q| {
                let i = ((result.trace.len() - 1) as f64 * q).round() as usize;
                format!("{:.4e}", result.trace[i])
            })
            .collect();
        println!("  best value at 25/50/75% of the trace: {}", marks.join(", "));
    }
}

fn start_preset<'a>(config: &'a Config, args: &FitArgs, default: &str) -> CliResult<&'a CompensationParams> {
    config.preset(args.preset.as_deref().unwrap_or(default))
}

pub fn fit(config: &Config, args: &FitArgs) -> CliResult<()> {
    let screens = ScreenPair {
        src: config.screen(&args.src_screen)?.clone(),
        dst: config.screen(&args.dst_screen)?.clone(),
    };
    match args.objective {
        Objective::Achromatic => fit_achromatic(config, args, &screens),
        Objective::Chromatic => fit_chromatic(config, args, &screens),
        Objective::Lhei => fit_lhei(config, args, &screens),
    }
}

fn fit_achromatic(config: &Config, args: &FitArgs, screens: &ScreenPair) -> CliResult<()> {
    if args.folds {
        return Err(CliError::config("--folds applies to the chromatic objective only"));
    }
    let (rows, data) = observer_data(&args.data, Quantity::Luminance)?;
    let base = BarPatternSpec::for_screen(&screens.src, args.size, 0.19)?;
    let wanted: BTreeSet<&str> = data.iter().filter_map(|d| d.stimulus_id.rsplit_once('/')).map(|(p, _)| p).collect();
    let mut stimuli = Vec::new();
    for spec in factor_grid(&base) {
        let prefix = format!("{}/{}", spec.comparison_bar_width_deg, spec.gray_luminance);
        if wanted.contains(prefix.as_str()) {
            let bars = generate_bars(&spec)?;
            stimuli.push(AchromaticStimulus::from_bars(&prefix, &bars, &spec));
        }
    }
    let known: BTreeSet<&str> = stimuli.iter().flat_map(|s| s.probes.iter().map(|p| p.id.as_str())).collect();
    if let Some(row) = rows.iter().find(|r| !known.contains(r.datum.stimulus_id.as_str())) {
        return Err(CliError::io(format!(
            "{}: line {}: unknown stimulus id {:?} (expected width/gray/side from the achromatic grid)",
            args.data.display(),
            row.line,
            row.datum.stimulus_id
        )));
    }

    let initial = start_preset(config, args, "paper-achromatic")?;
    let space = CompensationSpace::full(KernelGroup::Achromatic, initial);
    let result = fitting::fit(
        &space,
        initial,
        |p| fitting::achromatic_objective(p, &data, &stimuli, screens),
        &space.default_bounds(),
        &nm_options(args),
    )?;
    summarize("achromatic fit", &result);
    let mut out = FittedOutput::default();
    out.presets.insert(args.name.clone(), result.params);
    out.write(&args.out)?;
    println!("wrote preset {} to {}", args.name, args.out.display());
    Ok(())
}

fn chromatic_stimuli(
    config: &Config,
    screen: &ScreenSpec,
    size: usize,
    sets: &[String],
) -> CliResult<Vec<(ChromaticStimulus, RingPatternSpec)>> {
    sets.iter()
        .map(|name| {
            let spec = ring_spec(screen, size, config.color_set(name)?)?;
            // An out-of-gamut colour is a configuration problem, not a processing one.
            let rings = generate_rings(&spec, screen).map_err(|e| CliError::config(format!("colour set {name}: {e}")))?;
            Ok((ChromaticStimulus::from_rings(name.clone(), &rings), spec))
        })
        .collect()
}

fn fit_chromatic(config: &Config, args: &FitArgs, screens: &ScreenPair) -> CliResult<()> {
    let (_, data) = observer_data(&args.data, Quantity::Lab)?;
    let sets = data_sets(&data);
    let stimuli: Vec<ChromaticStimulus> = chromatic_stimuli(config, &screens.src, args.size, &sets)?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    let initial = start_preset(config, args, "paper-chromatic-set4")?;
    let space = CompensationSpace::full(KernelGroup::Chromatic, initial);
    let bounds = space.default_bounds();
    let opts = nm_options(args);
    let mut out = FittedOutput::default();

    if args.folds {
        let folds = chromatic_cross_validation(initial, &space, &bounds, &data, &stimuli, screens, &sets, &opts)?;
        for f in &folds {
            summarize(&format!("fold {} (trained on {})", f.test_set, f.train_sets.join(", ")), &f.result);
        }
        let fitted: Vec<(String, CompensationParams)> =
            folds.iter().map(|f| (f.test_set.clone(), f.result.params.clone())).collect();
        let report = table3_report(&fitted, &data, &stimuli, screens, &sets)?;
        print!("{}", report.render());
        for (set, params) in fitted {
            out.presets.insert(format!("{}-{set}", args.name), params);
        }
    } else {
        let result = fitting::fit(
            &space,
            initial,
            |p| chromatic_objective(p, &data, &stimuli, screens, &sets),
            &bounds,
            &opts,
        )?;
        summarize("chromatic fit", &result);
        out.presets.insert(args.name.clone(), result.params);
    }
    out.write(&args.out)?;
    println!(
        "wrote {} to {}",
        out.presets.keys().cloned().collect::<Vec<_>>().join(", "),
        args.out.display()
    );
    Ok(())
}

fn lhei_cases(
    config: &Config,
    screen: &ScreenSpec,
    size: usize,
    data: &[ObserverDatum],
) -> CliResult<Vec<LheiCase>> {
    let targets: BTreeMap<&str, [f64; 3]> = data
        .iter()
        .filter_map(|d| match d.response {
            fitting::Measurement::Lab(v) => Some((d.stimulus_id.as_str(), v)),
            fitting::Measurement::Luminance(_) => None,
        })
        .collect();
    targets
        .into_iter()
        .map(|(name, matched)| {
            let mut spec = ring_spec(screen, size, config.color_set(name)?)?;
            // Both images share one comparison surround so only the ring colour differs.
            spec.comparison_field = Some([spec.test_color[0], 0.0, 0.0]);
            let test = generate_rings(&spec, screen)?;
            let adjusted = generate_rings(
                &RingPatternSpec {
                    test_color: matched,
                    ..spec
                },
                screen,
            )?;
            Ok(LheiCase {
                id: name.to_string(),
                test_image: test.test_image,
                comparison_image: adjusted.comparison_image,
                mask: test.test_mask,
            })
        })
        .collect()
}

fn fit_lhei(config: &Config, args: &FitArgs, screens: &ScreenPair) -> CliResult<()> {
    if args.folds {
        return Err(CliError::config("--folds applies to the chromatic objective only"));
    }
    if args.preset.is_some() {
        return Err(CliError::config("the LHEI fit starts from the [lhei] table; --preset does not apply"));
    }
    let (_, data) = observer_data(&args.data, Quantity::Lab)?;
    let cases = lhei_cases(config, &screens.src, args.size, &data)?;
    let initial: LheiParams = config.lhei_params();
    let space = LheiSpace::full(&initial);
    let result = fitting::fit(
        &space,
        &initial,
        |p| fitting::lhei_objective(p, &cases, &screens.src),
        &space.default_bounds(),
        &nm_options(args),
    )?;
    summarize("LHEI fit", &result);
    let out = FittedOutput {
        lhei: Some(result.params),
        ..FittedOutput::default()
    };
    out.write(&args.out)?;
    println!("wrote [lhei] to {}", args.out.display());
    Ok(())
}

pub fn inspect_kernel(config: &Config, args: &InspectArgs) -> CliResult<()> {
    let preset = config.preset(&args.preset)?;
    let coeffs = match args.group {
        Group::Achromatic => &preset.achromatic,
        Group::Chromatic => &preset.chromatic,
    };
    let geometry = FilterGeometry::for_image(args.size, args.size);
    let stability = validate_stability(coeffs, geometry)?;
    println!(
        "stability: min |c2 + c1 F(K_F)| = {:.6e} at {} (threshold {:.1e})",
        stability.min_abs, stability.location, stability.threshold
    );
    let filter = build_s_c(coeffs, geometry).map_err(|e| CliError::from(e).context(format!("preset {}", args.preset)))?;
    create_dir(&args.out)?;
    let (spatial, _) = filter.spatial_kernel();
    write_plane_pfm(&args.out.join("kernel_spatial.pfm"), &spatial)?;
    write_plane_pfm(&args.out.join("kernel_response.pfm"), &filter.as_plane())?;
    println!("DC gain: {:.6}", filter.dc_gain());
    println!("wrote kernel_spatial.pfm and kernel_response.pfm to {}", args.out.display());
    Ok(())
}
