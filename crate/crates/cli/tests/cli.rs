//! End-to-end runs of the `induction` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{ImageBuffer, Rgb};
use induction_core::colorimetry::{display_to_lab_pixel, ScreenSpec};
use induction_core::compensation::CompensationParams;
use induction_core::kernels::GaussianMix;
use induction_core::fitting::{achromatic_objective, model_luminances, AchromaticStimulus, Measurement, ObserverDatum, ScreenPair};
use induction_core::stimuli::{generate_bars, factor_grid, BarPatternSpec};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_induction"))
        .args(args)
        .env_remove("INDUCTION_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Smooth colourful test picture with a few hard-edged patches.
fn picture(w: u32, h: u32) -> ImageBuffer<Rgb<u16>, Vec<u16>> {
    ImageBuffer::from_fn(w, h, |x, y| {
        let (fx, fy) = (x as f64 / w as f64, y as f64 / h as f64);
        let mut px = [
            0.45 + 0.3 * (6.0 * fx).sin() * (4.0 * fy).cos(),
            0.5 + 0.25 * (5.0 * fy + 1.0).sin(),
            0.4 + 0.3 * (3.0 * (fx + fy)).cos(),
        ];
        if (fx - 0.3).hypot(fy - 0.6) < 0.15 {
            px = [0.85, 0.2, 0.15];
        } else if (fx - 0.7).hypot(fy - 0.3) < 0.12 {
            px = [0.1, 0.3, 0.8];
        }
        Rgb(px.map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16))
    })
}

fn write_picture(dir: &Path, w: u32, h: u32) -> PathBuf {
    let path = dir.join("in.png");
    picture(w, h).save(&path).unwrap();
    path
}

fn read16(path: &Path) -> ImageBuffer<Rgb<u16>, Vec<u16>> {
    image::open(path).unwrap().to_rgb16()
}

fn mean_chroma(img: &ImageBuffer<Rgb<u16>, Vec<u16>>, screen: &ScreenSpec) -> f64 {
    let total: f64 = img
        .pixels()
        .map(|px| {
            let lab = display_to_lab_pixel(px.0.map(|v| v as f64 / 65535.0), screen).unwrap();
            lab[1].hypot(lab[2])
        })
        .sum();
    total / (img.width() * img.height()) as f64
}

fn config_with(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn preset_toml(name: &str, params: &CompensationParams) -> String {
    let mut presets = BTreeMap::new();
    presets.insert(name.to_string(), params.clone());
    let mut root = BTreeMap::new();
    root.insert("presets", presets);
    toml::to_string(&root).unwrap()
}

#[test]
fn identity_preset_reproduces_16_bit_input() {
    let dir = TempDir::new().unwrap();
    let input = write_picture(dir.path(), 48, 32);
    let out = dir.path().join("out.png");
    let o = run(&["compensate", "-i", p(&input), "--out", p(&out), "--preset", "identity"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("response clipped fraction"));
    assert_eq!(read16(&out), read16(&input));
}

#[test]
fn compensation_is_idempotent_across_runs() {
    let dir = TempDir::new().unwrap();
    let input = write_picture(dir.path(), 40, 40);
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    for out in [&a, &b] {
        let o = run(&["compensate", "-i", p(&input), "--out", p(out), "--preset", "paper-natural"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn paper_presets_make_colours_more_vivid() {
    let dir = TempDir::new().unwrap();
    let input = write_picture(dir.path(), 96, 64);
    let before = mean_chroma(&read16(&input), &ScreenSpec::mobile());
    for preset in ["paper-natural", "paper-chromatic-set4"] {
        let out = dir.path().join(format!("{preset}.png"));
        let o = run(&["compensate", "-i", p(&input), "--out", p(&out), "--preset", preset]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let after = mean_chroma(&read16(&out), &ScreenSpec::mobile());
        assert!(after > before, "{preset}: mean chroma {after} <= {before}");
    }
}

#[test]
fn pfm_input_gives_pfm_output() {
    let dir = TempDir::new().unwrap();
    let png = write_picture(dir.path(), 16, 12);
    let pfm = dir.path().join("in.pfm");
    // Round through the CLI itself: identity compensation with a format switch.
    let o = run(&["compensate", "-i", p(&png), "--out", p(&pfm), "--preset", "identity", "--format", "pfm"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out.pfm");
    let o = run(&["compensate", "-i", p(&pfm), "--out", p(&out), "--preset", "identity"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::read(&out).unwrap().starts_with(b"PF\n16 12\n"));
    let wrong = dir.path().join("out.png");
    assert_eq!(code(&run(&["compensate", "-i", p(&pfm), "--out", p(&wrong), "--preset", "identity"])), 2);
}

#[test]
fn missing_preset_or_screen_exits_3() {
    let dir = TempDir::new().unwrap();
    let input = write_picture(dir.path(), 8, 8);
    let out = dir.path().join("o.png");
    let o = run(&["compensate", "-i", p(&input), "--out", p(&out), "--preset", "no-such-preset"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("no-such-preset"));
    assert!(!out.exists());
    let o = run(&["compensate", "-i", p(&input), "--out", p(&out), "--preset", "identity", "--dst-screen", "tv"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn unreadable_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let bogus = dir.path().join("bogus.png");
    fs::write(&bogus, b"not a png").unwrap();
    let out = dir.path().join("o.png");
    assert_eq!(code(&run(&["compensate", "-i", p(&bogus), "--out", p(&out), "--preset", "identity"])), 2);
    let missing = dir.path().join("missing.png");
    assert_eq!(code(&run(&["compensate", "-i", p(&missing), "--out", p(&out), "--preset", "identity"])), 2);
}

#[test]
fn config_from_environment_is_used() {
    let dir = TempDir::new().unwrap();
    let mut p_ = CompensationParams::identity();
    p_.n_a = 0.8;
    p_.n_b = 0.8;
    let config = config_with(dir.path(), &preset_toml("mine", &p_));
    let input = write_picture(dir.path(), 16, 16);
    let out = dir.path().join("o.png");
    let o = Command::new(env!("CARGO_BIN_EXE_induction"))
        .args(["compensate", "-i", p(&input), "--out", p(&out), "--preset", "mine"])
        .env("INDUCTION_CONFIG", &config)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let broken = config_with(dir.path(), "[presets.x]\nn_a = 'oops'\n");
    let o = run(&["--config", p(&broken), "compensate", "-i", p(&input), "--out", p(&out), "--preset", "identity"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn factor_grid_emits_fifteen_patterns() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("grid");
    let o = run(&["stimulus", "bars", "--factor-grid", "--size", "200", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let patterns: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    assert_eq!(patterns.len(), 15);
    assert!(out.join("bars_0.96deg_22cd.png").exists());
    assert_eq!(fs::read_dir(out.join("masks")).unwrap().count(), 30);
}

#[test]
fn zero_bar_width_exits_3() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("b.png");
    let o = run(&["stimulus", "bars", "--width-deg", "0", "--size", "200", "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, "comparison_bar_width_deg = 0.0\n").unwrap();
    let o = run(&["stimulus", "bars", "--spec", p(&spec), "--size", "200", "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    fs::write(&spec, "no_such_field = 1\n").unwrap();
    assert_eq!(code(&run(&["stimulus", "bars", "--spec", p(&spec), "--out", p(&out)])), 3);
}

#[test]
fn default_rings_report_pattern_geometry() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("rings.png");
    let o = run(&["stimulus", "rings", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("pattern 11.00 deg"), "{s}");
    assert!(s.contains("centre line 4.39 deg"), "{s}");
    for f in ["rings.png", "rings_comparison.png", "rings_mask_test.png"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let again = dir.path().join("again.png");
    run(&["stimulus", "rings", "--out", p(&again)]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn empty_or_malformed_csv_exits_2() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("d.csv");
    let out = dir.path().join("fit.toml");
    fs::write(&csv, "").unwrap();
    let o = run(&["fit", "achromatic", "--data", p(&csv), "--out", p(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    fs::write(&csv, "stimulus_id,luminance_cd_m2\n0.19/8.1/white,7\n0.19/8.1/black,x\n").unwrap();
    let o = run(&["fit", "achromatic", "--data", p(&csv), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    fs::write(&csv, "stimulus_id,luminance_cd_m2\n0.2/8.1/white,7\n").unwrap();
    let o = run(&["fit", "achromatic", "--data", p(&csv), "--out", p(&out), "--size", "200"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn synthetic_achromatic_fit_matches_its_generator() {
    let dir = TempDir::new().unwrap();
    let size = 200;
    let screens = ScreenPair::default();
    let generator = CompensationParams::paper_achromatic();
    let base = BarPatternSpec::for_screen(&screens.src, size, 0.19).unwrap();
    let stimuli: Vec<AchromaticStimulus> = factor_grid(&base)
        .into_iter()
        .filter(|s| s.gray_luminance == 8.1 && s.comparison_bar_width_deg <= 0.38)
        .map(|s| {
            let prefix = format!("{}/{}", s.comparison_bar_width_deg, s.gray_luminance);
            AchromaticStimulus::from_bars(&prefix, &generate_bars(&s).unwrap(), &s)
        })
        .collect();
    let truth = model_luminances(&generator, &stimuli, &screens).unwrap();
    let mut csv = String::from("stimulus_id,luminance_cd_m2\n");
    for (id, l) in &truth {
        csv.push_str(&format!("{id},{l:.17e}\n"));
    }
    let data_path = dir.path().join("synthetic.csv");
    fs::write(&data_path, csv).unwrap();
    let data: Vec<ObserverDatum> =
        truth.iter().map(|(id, &l)| ObserverDatum::exact(id.clone(), Measurement::Luminance(l))).collect();
    let generator_objective = achromatic_objective(&generator, &data, &stimuli, &screens).unwrap();

    // Start away from the generator so the optimiser has work to do.
    let mut start = generator.clone();
    start.n_a *= 1.05;
    start.achromatic.d1 *= 0.95;
    let config = config_with(dir.path(), &preset_toml("start", &start));
    let out = dir.path().join("fit.toml");
    let o = run(&[
        "--config", p(&config), "fit", "achromatic", "--data", p(&data_path), "--out", p(&out),
        "--preset", "start", "--size", "200", "--max-evaluations", "150", "--name", "recovered",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("achromatic fit: objective"), "{}", stdout(&o));

    let fitted: BTreeMap<String, BTreeMap<String, CompensationParams>> =
        toml::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let recovered = &fitted["presets"]["recovered"];
    let start_objective = achromatic_objective(&start, &data, &stimuli, &screens).unwrap();
    let fitted_objective = achromatic_objective(recovered, &data, &stimuli, &screens).unwrap();
    assert!(fitted_objective < start_objective, "{fitted_objective} >= {start_objective}");

    // Starting at the generator itself, the fit can only keep or improve it.
    let o = run(&[
        "fit", "achromatic", "--data", p(&data_path), "--out", p(&out), "--size", "200",
        "--max-evaluations", "40", "--name", "recovered",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fitted: BTreeMap<String, BTreeMap<String, CompensationParams>> =
        toml::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let fitted_objective = achromatic_objective(&fitted["presets"]["recovered"], &data, &stimuli, &screens).unwrap();
    assert!(fitted_objective <= generator_objective + 1e-6, "{fitted_objective} vs {generator_objective}");
}

const FOUR_SETS: &str = r#"
[sets.s1]
ring_colors_lab = [[55.0, 30.0, -25.0], [55.0, -25.0, 30.0]]
test_color_lab = [55.0, 8.0, 8.0]

[sets.s2]
ring_colors_lab = [[50.0, -20.0, -20.0], [50.0, 20.0, 20.0]]
test_color_lab = [50.0, 0.0, 5.0]

[sets.s3]
ring_colors_lab = [[60.0, 20.0, 20.0], [60.0, -20.0, -20.0]]
test_color_lab = [60.0, -5.0, 0.0]

[sets.s4]
ring_colors_lab = [[45.0, 0.0, 30.0], [45.0, 0.0, -30.0]]
test_color_lab = [45.0, 6.0, -6.0]
"#;

#[test]
fn chromatic_folds_print_a_four_by_four_table() {
    let dir = TempDir::new().unwrap();
    let config = config_with(dir.path(), FOUR_SETS);
    let csv = dir.path().join("matches.csv");
    fs::write(
        &csv,
        "stimulus_id,l_star,a_star,b_star\ns1,55,10,9\ns2,50,-1,6\ns3,60,-3,1.5\ns4,45,7,-4\n",
    )
    .unwrap();
    let out = dir.path().join("folds.toml");
    let o = run(&[
        "--config", p(&config), "fit", "chromatic", "--folds", "--data", p(&csv), "--out", p(&out),
        "--size", "160", "--max-evaluations", "12", "--name", "cv",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = stdout(&o);
    let header = s.lines().find(|l| l.starts_with("held out")).expect("table header");
    for col in ["s1", "s2", "s3", "s4", "original", "improv. %"] {
        assert!(header.contains(col), "{header}");
    }
    let rows: Vec<&str> = s.lines().skip_while(|l| !l.starts_with("held out")).skip(1).take(4).collect();
    for (row, set) in rows.iter().zip(["s1", "s2", "s3", "s4"]) {
        assert!(row.starts_with(set), "{row}");
        assert_eq!(row.split_whitespace().count(), 7, "{row}");
    }
    let fitted: BTreeMap<String, BTreeMap<String, CompensationParams>> =
        toml::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(fitted["presets"].keys().collect::<Vec<_>>(), ["cv-s1", "cv-s2", "cv-s3", "cv-s4"]);

    // Three sets cannot fill the four-fold table.
    fs::write(&csv, "stimulus_id,l_star,a_star,b_star\ns1,55,10,9\ns2,50,-1,6\ns3,60,-3,1.5\n").unwrap();
    let o = run(&[
        "--config", p(&config), "fit", "chromatic", "--folds", "--data", p(&csv), "--out", p(&out),
        "--size", "160", "--max-evaluations", "4",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn inspect_identity_is_a_delta_with_unit_gain() {
    let dir = TempDir::new().unwrap();
    let o = run(&["inspect-kernel", "--preset", "identity", "--size", "32", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("DC gain: 1.000000"), "{}", stdout(&o));
    let bytes = fs::read(dir.path().join("kernel_spatial.pfm")).unwrap();
    let header = b"Pf\n64 64\n-1.0\n".len();
    assert!(bytes.starts_with(b"Pf\n64 64\n"));
    let values: Vec<f32> = bytes[header..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let peak = values.iter().copied().fold(f32::MIN, f32::max);
    assert!((peak - 1.0).abs() < 1e-6);
    assert!(values.iter().filter(|v| v.abs() > 1e-6).count() == 1);
    assert!(dir.path().join("kernel_response.pfm").exists());
}

#[test]
fn inspect_paper_achromatic_reports_negative_dc_gain() {
    let dir = TempDir::new().unwrap();
    let o = run(&["inspect-kernel", "--preset", "paper-achromatic", "--size", "800", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = stdout(&o);
    let gain: f64 = s
        .lines()
        .find_map(|l| l.strip_prefix("DC gain: "))
        .expect("gain line")
        .trim()
        .parse()
        .unwrap();
    assert!((gain + 0.4605).abs() < 5e-4, "{gain}");
    assert!(s.contains("stability: min"));
}

#[test]
fn unstable_preset_exits_3_naming_the_frequency() {
    let dir = TempDir::new().unwrap();
    let mut bad = CompensationParams::identity();
    bad.achromatic.c1 = -1.0;
    // A unit-sum kernel has F = 1 at DC, so the denominator vanishes there.
    bad.achromatic.c2 = 1.0;
    bad.achromatic.k_f = GaussianMix::new(&[(1.0, 4.0)]).unwrap();
    let config = config_with(dir.path(), &preset_toml("bad", &bad));
    let o = run(&["--config", p(&config), "inspect-kernel", "--preset", "bad", "--size", "32", "--out", p(dir.path())]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let e = stderr(&o);
    assert!(e.contains("unstable") && e.contains("cycles/px"), "{e}");
    assert!(!dir.path().join("kernel_spatial.pfm").exists());
}

#[test]
fn out_of_gamut_colour_set_exits_3_naming_the_set() {
    let dir = TempDir::new().unwrap();
    let sets = "[sets.vivid]\nring_colors_lab = [[60.0, 25.0, 25.0], [60.0, -25.0, -25.0]]\ntest_color_lab = [60.0, 0.0, 0.0]\n";
    let config = config_with(dir.path(), sets);
    let csv = dir.path().join("matches.csv");
    fs::write(&csv, "stimulus_id,l_star,a_star,b_star\nvivid,60,1,1\n").unwrap();
    let out = dir.path().join("fit.toml");
    let o = run(&[
        "--config", p(&config), "fit", "chromatic", "--data", p(&csv), "--out", p(&out), "--size", "64",
        "--max-evaluations", "4",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("colour set vivid"), "{}", stderr(&o));
}
