mod commands;
mod config;
mod error;
mod imageio;
mod observer;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::error::CliResult;

/// Induction compensation, stimulus generation and model fitting.
#[derive(Debug, Parser)]
#[command(name = "induction", version)]
struct Cli {
    /// TOML file with screens, presets, colour sets and LHEI parameters.
    #[arg(long, global = true, env = "INDUCTION_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compensate an image for display on another screen.
    Compensate(CompensateArgs),
    /// Render bar or ring patterns with their probe masks.
    Stimulus(StimulusArgs),
    /// Fit model parameters to observer data.
    Fit(FitArgs),
    /// Export a preset's compensation kernel and report its DC gain and stability margin.
    InspectKernel(InspectArgs),
}

#[derive(Debug, Args)]
pub struct CompensateArgs {
    /// 8/16-bit PNG or PFM (defaults to `paths.input` of the config).
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output path (defaults to `paths.output` of the config).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Output encoding; the input's format and bit depth when omitted.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long, default_value = "cinema")]
    pub src_screen: String,
    #[arg(long, default_value = "mobile")]
    pub dst_screen: String,
    #[arg(long)]
    pub preset: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Png8,
    Png16,
    Pfm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StimulusKind {
    Bars,
    Rings,
}

#[derive(Debug, Args)]
pub struct StimulusArgs {
    pub kind: StimulusKind,
    /// Output image (.png or .pfm); a directory when `--factor-grid` is set.
    /// Masks are written next to it as 8-bit PNGs.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Image encoding; 16-bit PNG when omitted.
    #[arg(long, value_enum, default_value_t = OutputFormat::Png16)]
    pub format: OutputFormat,
    /// TOML file overriding pattern fields (e.g. `comparison_bar_width_deg`).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value = "cinema")]
    pub screen: String,
    /// Square canvas size in pixels.
    #[arg(long, default_value_t = 800)]
    pub size: usize,
    /// Comparison bar width for a single bar pattern.
    #[arg(long, default_value_t = 0.38)]
    pub width_deg: f64,
    /// Colour set (from the config) for ring patterns.
    #[arg(long)]
    pub set: Option<String>,
    /// Emit all five widths crossed with the three initial gray levels.
    #[arg(long)]
    pub factor_grid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    Achromatic,
    Chromatic,
    Lhei,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub objective: Objective,
    /// Observer data CSV. Achromatic ids read `{width_deg}/{gray_cd_m2}/{white|black}`
    /// (e.g. `0.38/8.1/white`); chromatic and LHEI ids name a colour set.
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the fitted config fragment (TOML).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Starting preset for compensation objectives (`paper-achromatic` or
    /// `paper-chromatic-set4` by default).
    #[arg(long)]
    pub preset: Option<String>,
    /// Name of the fitted preset in the output.
    #[arg(long, default_value = "fitted")]
    pub name: String,
    #[arg(long, default_value = "cinema")]
    pub src_screen: String,
    #[arg(long, default_value = "mobile")]
    pub dst_screen: String,
    /// Stimulus canvas size in pixels.
    #[arg(long, default_value_t = 800)]
    pub size: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_evaluations: usize,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Leave-one-set-out chromatic fits with a per-fold error table.
    #[arg(long)]
    pub folds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Group {
    Achromatic,
    Chromatic,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub preset: String,
    #[arg(long, value_enum, default_value_t = Group::Achromatic)]
    pub group: Group,
    /// Working image size in pixels (square).
    #[arg(long, default_value_t = 800)]
    pub size: usize,
    /// Directory for `kernel_spatial.pfm` and `kernel_response.pfm`.
    #[arg(long, short)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> CliResult<()> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Compensate(a) => commands::compensate(&config, &a),
        Command::Stimulus(a) => commands::stimulus(&config, &a),
        Command::Fit(a) => commands::fit(&config, &a),
        Command::InspectKernel(a) => commands::inspect_kernel(&config, &a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
