//! The `herdlab` command-line front end.
//!
//! | exit code | meaning |
//! |-----------|---------|
//! | 0 | every output written |
//! | 1 | I/O or other failure |
//! | 2 | usage error (bad flags or values) |
//! | 3 | input file could not be loaded |
//! | 4 | calibration failed |
//! | 5 | model or numerical failure |
//!
//! Outputs go to the directory given by `--out`, or to a subdirectory named
//! after the command under `$HERDLAB_OUT` (default `.`). Each command writes
//! its files to a staging directory and moves them into place only on
//! success.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::calibration::{self, calibrate, CalibrationConfig, ModelParams, ProbabilitySource, Scope};
use crate::data::{self, LoadOptions, NormalizedPanel, ReturnPanel};
use crate::engine::{self, PopulationMode};
use crate::error::{Error, Result};
use crate::fixtures::{self, FixtureKind, FixtureSpec};
use crate::manifest::{digest_bytes, RunManifest, Staging};
use crate::spectral::{self, AnalysisConfig, SpectralReport};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "HERDLAB_OUT";

#[derive(Debug, Parser, Serialize)]
#[command(name = "herdlab", version, about = "Multi-level herding market model: calibrate, simulate, analyze")]
pub struct Cli {
    /// Worker threads for the parallel stages (default: one per core).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Measure co-movement degrees on a price panel and write params JSON.
    Calibrate(CalibrateArgs),
    /// Run the herding simulation and write the return panel.
    Simulate(SimulateArgs),
    /// Volatility autocorrelation and correlation spectrum of a panel.
    Analyze(AnalyzeArgs),
    /// Calibrate, simulate for several seeds and analyze, in one go.
    Pipeline(PipelineArgs),
    /// Write a synthetic price panel.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProbabilityArgs {
    /// Individual trading probability `p`; overrides the derived value.
    #[arg(long, conflicts_with_all = ["institutional", "turnover", "days_per_year"])]
    pub p: Option<f64>,
    /// Institutional holding fraction used to derive `p`.
    #[arg(long)]
    pub institutional: Option<f64>,
    /// Yearly turnover used to derive `p`.
    #[arg(long)]
    pub turnover: Option<f64>,
    /// Trading days per year used to derive `p`.
    #[arg(long)]
    pub days_per_year: Option<u32>,
}

impl ProbabilityArgs {
    fn source(&self) -> ProbabilitySource {
        match self.p {
            Some(p) => ProbabilitySource::Fixed(p),
            None => ProbabilitySource::Derived {
                institutional_fraction: self.institutional.unwrap_or(calibration::DEFAULT_INSTITUTIONAL_FRACTION),
                yearly_turnover: self.turnover.unwrap_or(calibration::DEFAULT_YEARLY_TURNOVER),
                trading_days: self.days_per_year.unwrap_or(calibration::DEFAULT_TRADING_DAYS),
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long)]
    pub sectors: PathBuf,
    /// Params file (`*.json`) or directory to write into.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub probability: ProbabilityArgs,
    /// Drop dates on which any ticker is missing instead of failing.
    #[arg(long)]
    pub intersect_dates: bool,
    #[arg(long)]
    pub agents: Option<u64>,
    #[arg(long)]
    pub max_horizon: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
}

/// Flags that override individual model parameters.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ModelOverrides {
    /// Output length `T_out`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub days: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Total agents `N`.
    #[arg(long)]
    pub agents: Option<u64>,
    /// Maximum investment horizon `L`.
    #[arg(long)]
    pub max_horizon: Option<usize>,
    /// Individual probability `p`; `P` is recomputed from it.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, value_enum, default_value_t = PopulationArg::Random)]
    pub population_mode: PopulationArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationArg {
    #[default]
    Random,
    Uniform,
}

impl From<PopulationArg> for PopulationMode {
    fn from(p: PopulationArg) -> Self {
        match p {
            PopulationArg::Random => PopulationMode::Random,
            PopulationArg::Uniform => PopulationMode::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Nyse,
    Hkse,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Params JSON; without it the preset is used.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Nyse)]
    pub preset: Preset,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub overrides: ModelOverrides,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalysisArgs {
    #[arg(long, default_value_t = 100)]
    pub max_lag: usize,
    /// Histogram bins over `[0, 1.05 λ0]`.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    pub bins: u32,
    /// Leading eigenvectors to report.
    #[arg(long, default_value_t = 3)]
    pub top: usize,
}

impl AnalysisArgs {
    fn config(&self) -> AnalysisConfig {
        AnalysisConfig { max_lag: self.max_lag, bins: self.bins as usize, top_vectors: self.top }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Returns CSV (`t,<tickers>`).
    #[arg(long, required_unless_present = "prices", conflicts_with = "prices")]
    pub returns: Option<PathBuf>,
    /// Price CSV (`date,<tickers>`); log returns are taken first.
    #[arg(long)]
    pub prices: Option<PathBuf>,
    #[arg(long)]
    pub sectors: PathBuf,
    #[arg(long)]
    pub intersect_dates: bool,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long, required_unless_present = "fixture", conflicts_with = "fixture", requires = "sectors")]
    pub prices: Option<PathBuf>,
    #[arg(long)]
    pub sectors: Option<PathBuf>,
    /// Use a generated panel instead of `--prices`.
    #[arg(long)]
    pub fixture: Option<FixtureKind>,
    #[arg(long, default_value_t = 1)]
    pub fixture_seed: u64,
    /// Simulation seeds: `3`, `1,4,9` or an inclusive range `1..5`.
    #[arg(long, default_value = "1")]
    pub seeds: SeedList,
    #[command(flatten)]
    pub probability: ProbabilityArgs,
    /// Output length `T_out` (default: the input panel length).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub days: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub agents: Option<u64>,
    #[arg(long)]
    pub max_horizon: Option<usize>,
    #[arg(long, value_enum, default_value_t = PopulationArg::Random)]
    pub population_mode: PopulationArg,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    #[arg(long)]
    pub intersect_dates: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FixturesArgs {
    #[arg(long)]
    pub kind: FixtureKind,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Price rows (default: the market's sample length).
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long, default_value_t = 150)]
    pub stocks: usize,
    #[arg(long = "sector-count", default_value_t = 5)]
    pub sector_count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Seeds given as a single value, a comma list or an inclusive range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("cannot read seeds from '{s}'");
        let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if b < a {
                return Err(format!("empty seed range '{s}'"));
            }
            (a..=b).collect()
        } else {
            s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<std::result::Result<_, _>>()?
        };
        if seeds.is_empty() {
            return Err(bad());
        }
        Ok(SeedList(seeds))
    }
}

/// Exit code for an error, following the table in the module docs.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) => 2,
        Error::Load { .. } | Error::ZeroVariance { .. } | Error::Csv(_) => 3,
        Error::Calibration(_) => 4,
        Error::Model(_) | Error::Numeric(_) => 5,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct Failure {
    pub stage: Option<(u8, &'static str)>,
    pub error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { stage: None, error }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.stage {
            Some((k, name)) => write!(f, "stage {k} ({name}): {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

fn stage<T>(k: u8, name: &'static str, r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(|error| Failure { stage: Some((k, name)), error })
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    ExitCode::from(run_code(args))
}

/// Like [`run_from`] but returns the numeric exit code.
pub fn run_code<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("herdlab: {f}");
            exit_code(&f.error)
        }
    }
}

pub fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        builder = builder.num_threads(k as usize);
    }
    let pool = builder.build().map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(a, cli.format).map_err(Failure::from),
        Command::Simulate(a) => cmd_simulate(a, cli.format).map_err(Failure::from),
        Command::Analyze(a) => cmd_analyze(a, cli.format).map_err(Failure::from),
        Command::Pipeline(a) => cmd_pipeline(a, cli.format),
        Command::Fixtures(a) => cmd_fixtures(a).map_err(Failure::from),
    })
}

fn default_out(command: &str) -> PathBuf {
    let base = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    base.join(command)
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::load(path.display().to_string(), "file", "not found"))
    }
}

fn calibration_config(probability: &ProbabilityArgs, agents: Option<u64>, max_horizon: Option<usize>, burn_in: Option<usize>) -> CalibrationConfig {
    let d = CalibrationConfig::default();
    CalibrationConfig {
        n_agents: agents.unwrap_or(d.n_agents),
        max_horizon: max_horizon.unwrap_or(d.max_horizon),
        probability: probability.source(),
        burn_in: burn_in.unwrap_or(d.burn_in),
        ..d
    }
}

fn load_normalized(prices: &Path, sectors: &Path, intersect_dates: bool) -> Result<(NormalizedPanel, usize)> {
    require_file(prices)?;
    require_file(sectors)?;
    let panel = data::load_price_panel(prices, sectors, LoadOptions { intersect_dates })?;
    let rows = panel.n_days();
    Ok((data::normalize(&data::log_returns(&panel)?)?, rows))
}

fn summary_json(params: &ModelParams, labels: &[String]) -> Result<String> {
    let w = params.weights()?;
    let v = json!({
        "H_M": params.h_market,
        "sectors": labels.iter().zip(&params.h_sectors).map(|(l, h)| json!({"label": l, "H": h})).collect::<Vec<_>>(),
        "H_bar": params.co_movement().mean_sector(),
        "k": w.k(),
        "p": params.p_individual,
        "P": params.p_group,
    });
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn cmd_calibrate(a: &CalibrateArgs, format: Format) -> Result<()> {
    let start = Instant::now();
    let (panel, rows) = load_normalized(&a.prices, &a.sectors, a.intersect_dates)?;
    let config = calibration_config(&a.probability, a.agents, a.max_horizon, a.burn_in);
    let params = calibrate(&panel, &config).map_err(|e| match e {
        Error::Calibration(m) => Error::Calibration(format!(
            "{m}; check the sector file (every sector needs stocks that co-move more than the market as a whole)"
        )),
        other => other,
    })?;
    let labels = panel.sectors().labels().to_vec();

    let out = a.out.clone().unwrap_or_else(|| default_out("calibrate"));
    let (dir, name) = if out.extension().is_some_and(|e| e == "json") {
        let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        (out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf(), name)
    } else {
        (out.clone(), "params.json".to_string())
    };
    let stem = name.trim_end_matches(".json").to_string();

    let text = calibration::summary(&params, &labels);
    let mut stage = Staging::new(&dir)?;
    stage.write(&name, params.to_json()?)?;
    stage.write(&format!("{stem}.summary.txt"), &text)?;

    let mut m = RunManifest::new("calibrate", json!({ "args": a, "params": params, "price_rows": rows }));
    m.add_input(&a.prices)?;
    m.add_input(&a.sectors)?;
    m.outputs = stage.digests()?;
    m.wall_time_seconds = start.elapsed().as_secs_f64();
    stage.write(&format!("{stem}.manifest.json"), m.to_json()?)?;
    stage.commit()?;

    match format {
        Format::Csv => print!("{text}"),
        Format::Json => print!("{}", summary_json(&params, &labels)?),
    }
    eprintln!("wrote {}", dir.join(&name).display());
    Ok(())
}

/// Applies the layered configuration: preset, then params file, then flags.
/// Returns the params and the origin of each field.
fn resolve_params(
    preset: Preset,
    file: Option<&Path>,
    o: &ModelOverrides,
) -> Result<(ModelParams, BTreeMap<String, String>)> {
    let mut params = match preset {
        Preset::Nyse => ModelParams::nyse(),
        Preset::Hkse => ModelParams::hkse(),
    };
    let fields = ["n", "n_sec", "N", "L", "exponent", "H_M", "H", "p", "P", "burn_in", "T_out"];
    let mut sources: BTreeMap<String, String> = fields.iter().map(|f| (f.to_string(), "default".into())).collect();
    if let Some(path) = file {
        require_file(path)?;
        let text = std::fs::read_to_string(path)?;
        params = ModelParams::from_json(&text)
            .map_err(|e| Error::load(path.display().to_string(), "params", e.to_string()))?;
        sources.values_mut().for_each(|v| *v = "params-file".into());
    }
    let mut cli = |k: &str| {
        sources.insert(k.into(), "cli".into());
    };
    if let Some(d) = o.days {
        params.t_out = d as usize;
        cli("T_out");
    }
    if let Some(b) = o.burn_in {
        params.burn_in = b;
        cli("burn_in");
    }
    if let Some(n) = o.agents {
        params.n_agents = n;
        cli("N");
    }
    if let Some(l) = o.max_horizon {
        params.max_horizon = l;
        cli("L");
    }
    if let Some(p) = o.p {
        params.p_individual = p;
        params.refresh_group_probability()?;
        cli("p");
        cli("P");
    }
    params.validate()?;
    Ok((params, sources))
}

fn returns_json(panel: &ReturnPanel) -> Result<String> {
    let v = json!({
        "kind": panel.kind(),
        "tickers": panel.tickers(),
        "sectors": panel.tickers().iter().enumerate().map(|(i, _)| &panel.sectors().labels()[panel.sectors().sector(i)]).collect::<Vec<_>>(),
        "returns": panel.columns(),
    });
    Ok(serde_json::to_string(&v)? + "\n")
}

/// Writes returns, sectors and params for one simulation into `stage`
/// under `prefix`.
fn write_simulation(
    stage: &mut Staging,
    prefix: &str,
    out: &engine::SimOutput,
    params: &ModelParams,
    format: Format,
) -> Result<()> {
    let panel = &out.returns;
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            data::write_returns_csv(panel, &mut buf)?;
            stage.write(&format!("{prefix}returns.csv"), buf)?;
        }
        Format::Json => stage.write(&format!("{prefix}returns.json"), returns_json(panel)?)?,
    }
    let mut buf = Vec::new();
    data::write_sectors_csv(panel.tickers(), panel.sectors(), &mut buf)?;
    stage.write(&format!("{prefix}sectors.csv"), buf)?;
    stage.write(&format!("{prefix}params.json"), params.to_json()?)?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, format: Format) -> Result<()> {
    let start = Instant::now();
    let (params, sources) = resolve_params(a.preset, a.params.as_deref(), &a.overrides)?;
    let mode: PopulationMode = a.overrides.population_mode.into();
    let out = engine::run_simulation_with(&params, a.seed, mode)?;

    let dir = a.out.clone().unwrap_or_else(|| default_out("simulate"));
    let mut stage = Staging::new(&dir)?;
    write_simulation(&mut stage, "", &out, &params, format)?;

    let mut m = RunManifest::new(
        "simulate",
        json!({ "args": a, "params": params, "simulation": out.manifest, "format": format }),
    );
    m.sources = sources;
    m.seed = Some(a.seed);
    if let Some(p) = &a.params {
        m.add_input(p)?;
    }
    m.outputs = stage.digests()?;
    m.wall_time_seconds = start.elapsed().as_secs_f64();
    stage.write("manifest.json", m.to_json()?)?;
    stage.commit()?;
    eprintln!(
        "simulated {} days x {} stocks (seed {}) in {:.1} s -> {}",
        params.t_out,
        params.n_stocks,
        a.seed,
        out.manifest.wall_time_seconds,
        dir.display()
    );
    Ok(())
}

/// Writes `report.json` and, for CSV output, the plot tables.
fn write_report(stage: &mut Staging, prefix: &str, report: &SpectralReport, format: Format) -> Result<()> {
    stage.write(&format!("{prefix}report.json"), report.to_json()?)?;
    if format == Format::Csv {
        let mut buf = Vec::new();
        report.write_autocorrelation_csv(&mut buf)?;
        stage.write(&format!("{prefix}A.csv"), buf)?;
        for k in 0..report.top_vectors.len() {
            let mut buf = Vec::new();
            report.write_eigenvector_csv(k, &mut buf)?;
            stage.write(&format!("{prefix}eigvec_{k}.csv"), buf)?;
        }
        let mut buf = Vec::new();
        report.write_histogram_csv(&mut buf)?;
        stage.write(&format!("{prefix}eighist.csv"), buf)?;
    }
    Ok(())
}

fn report_summary(report: &SpectralReport) -> String {
    let mut s = String::new();
    let top: Vec<String> = report.eigenvalues.iter().take(3).map(|x| format!("{x:.3}")).collect();
    let _ = writeln!(s, "{} stocks, {} days; largest eigenvalues {}", report.tickers.len(), report.n_days, top.join(", "));
    for d in &report.sector_scores {
        let ratio = d.ratio.map(|r| format!("{r:.2}")).unwrap_or_else(|| "inf".into());
        let _ = writeln!(
            s,
            "  u{}: top sector {} (ratio {ratio})",
            d.eigen_index, report.sectors[d.top_sector]
        );
    }
    if let Some(a1) = report.autocorrelation.get(1) {
        let _ = writeln!(s, "  A(1) = {a1:.4}, A({}) = {:.4}", report.autocorrelation.len() - 1, report.autocorrelation.last().unwrap_or(&0.0));
    }
    s
}

fn cmd_analyze(a: &AnalyzeArgs, format: Format) -> Result<()> {
    let start = Instant::now();
    let panel = match (&a.returns, &a.prices) {
        (Some(r), _) => {
            require_file(r)?;
            require_file(&a.sectors)?;
            data::normalize(&data::read_returns_csv(r, &a.sectors, None)?)?
        }
        (None, Some(p)) => load_normalized(p, &a.sectors, a.intersect_dates)?.0,
        (None, None) => return Err(Error::Argument("either --returns or --prices is required".into())),
    };
    let report = spectral::analyze(&panel, &a.analysis.config())?;

    let dir = a.out.clone().unwrap_or_else(|| default_out("analyze"));
    let mut stage = Staging::new(&dir)?;
    write_report(&mut stage, "", &report, format)?;
    let mut m = RunManifest::new("analyze", json!({ "args": a, "format": format }));
    for p in a.returns.iter().chain(&a.prices) {
        m.add_input(p)?;
    }
    m.add_input(&a.sectors)?;
    m.outputs = stage.digests()?;
    m.wall_time_seconds = start.elapsed().as_secs_f64();
    stage.write("manifest.json", m.to_json()?)?;
    stage.commit()?;
    print!("{}", report_summary(&report));
    Ok(())
}

/// Scalar statistics compared between runs.
fn statistics(report: &SpectralReport, panel: &NormalizedPanel) -> Result<BTreeMap<String, f64>> {
    let mut s = BTreeMap::new();
    for (k, v) in report.eigenvalues.iter().take(3).enumerate() {
        s.insert(format!("lambda_{k}"), *v);
    }
    for lag in [1usize, 10, 50, 100] {
        if let Some(v) = report.autocorrelation.get(lag) {
            s.insert(format!("A_{lag}"), *v);
        }
    }
    if let Some(d) = report.sector_scores.get(1) {
        if let Some(r) = d.ratio {
            s.insert("dominance_ratio_1".into(), r);
        }
    }
    s.insert("H_M".into(), calibration::co_movement_degree(panel, Scope::Market)?);
    Ok(s)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cmd_pipeline(a: &PipelineArgs, format: Format) -> std::result::Result<(), Failure> {
    let start = Instant::now();
    let dir = a.out.clone().unwrap_or_else(|| default_out("pipeline"));
    let mut out = Staging::new(&dir)?;
    let mut manifest = RunManifest::new("pipeline", json!({ "args": a, "format": format }));

    // 1: load
    let (panel, rows) = match (&a.prices, a.fixture) {
        (Some(prices), _) => {
            let sectors = a.sectors.as_deref().unwrap_or(Path::new(""));
            let r = stage(1, "load", load_normalized(prices, sectors, a.intersect_dates))?;
            stage(1, "load", manifest.add_input(prices))?;
            stage(1, "load", manifest.add_input(sectors))?;
            r
        }
        (None, Some(kind)) => {
            let f = stage(1, "load", fixtures::generate(&FixtureSpec::new(kind, a.fixture_seed)))?;
            let rows = f.prices.n_days();
            let mut buf = Vec::new();
            stage(1, "load", data::write_prices_csv(&f.prices, &mut buf))?;
            manifest.inputs.insert(format!("fixture:{kind}:{}", a.fixture_seed), digest_bytes(&buf));
            (stage(1, "load", data::log_returns(&f.prices).and_then(|r| data::normalize(&r)))?, rows)
        }
        (None, None) => {
            return Err(Failure {
                stage: Some((1, "load")),
                error: Error::Argument("either --prices or --fixture is required".into()),
            })
        }
    };

    // 2: calibrate
    let config = calibration_config(&a.probability, a.agents, a.max_horizon, a.burn_in);
    let calibrated = stage(2, "calibrate", calibrate(&panel, &config))?;
    let labels = panel.sectors().labels().to_vec();
    stage(2, "calibrate", out.write("params.json", calibrated.to_json()?))?;
    stage(2, "calibrate", out.write("calibration.txt", calibration::summary(&calibrated, &labels)))?;
    // Agents, horizon, burn-in and p already went into calibration.
    let overrides = ModelOverrides { days: a.days, population_mode: a.population_mode, ..Default::default() };
    let tmp_params = out.path("params.json");
    let (params, sources) = stage(2, "calibrate", resolve_params(Preset::Nyse, Some(&tmp_params), &overrides))?;
    manifest.sources = sources;

    // 3 and 4: simulate and analyze each seed, analyze the input panel
    let analysis = a.analysis.config();
    let empirical = stage(4, "analyze", spectral::analyze(&panel, &analysis))?;
    stage(4, "analyze", write_report(&mut out, "empirical/", &empirical, format))?;
    let empirical_stats = stage(4, "analyze", statistics(&empirical, &panel))?;

    let mode: PopulationMode = a.population_mode.into();
    let mut per_seed: Vec<BTreeMap<String, f64>> = Vec::new();
    for &seed in &a.seeds.0 {
        let t0 = Instant::now();
        let sim = stage(3, "simulate", engine::run_simulation_with(&params, seed, mode))?;
        let prefix = format!("seed-{seed}/");
        stage(3, "simulate", write_simulation(&mut out, &prefix, &sim, &params, format))?;
        let normalized = stage(4, "analyze", data::normalize(&sim.returns))?;
        let report = stage(4, "analyze", spectral::analyze(&normalized, &analysis))?;
        stage(4, "analyze", write_report(&mut out, &prefix, &report, format))?;
        per_seed.push(stage(4, "analyze", statistics(&report, &normalized))?);

        let mut m = RunManifest::new(
            "simulate",
            json!({ "params": params, "simulation": sim.manifest, "format": format }),
        );
        m.seed = Some(seed);
        let prefix_len = prefix.len();
        m.outputs = stage(3, "simulate", out.digests())?
            .into_iter()
            .filter(|(k, _)| k.starts_with(&prefix))
            .map(|(k, v)| (k[prefix_len..].to_string(), v))
            .collect();
        m.wall_time_seconds = t0.elapsed().as_secs_f64();
        stage(3, "simulate", out.write(&format!("{prefix}manifest.json"), m.to_json()?))?;
        eprintln!("seed {seed}: {}", report_summary(&report).lines().next().unwrap_or(""));
    }

    // 5: aggregate
    let names: Vec<String> = per_seed.first().map(|s| s.keys().cloned().collect()).unwrap_or_default();
    let mut stats = serde_json::Map::new();
    for name in names {
        let values: Vec<f64> = per_seed.iter().filter_map(|s| s.get(&name).copied()).collect();
        let (mean, std) = mean_std(&values);
        stats.insert(name.clone(), json!({ "values": values, "mean": mean, "std": std, "input": empirical_stats.get(&name) }));
    }
    let aggregate = json!({ "seeds": a.seeds.0, "price_rows": rows, "statistics": stats });
    stage(5, "aggregate", out.write("aggregate.json", serde_json::to_string_pretty(&aggregate).map_err(Error::from)? + "\n"))?;

    manifest.outputs = stage(5, "aggregate", out.digests())?;
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    stage(5, "aggregate", out.write("manifest.json", manifest.to_json()?))?;
    stage(5, "aggregate", out.commit())?;
    println!("{}", serde_json::to_string_pretty(&aggregate["statistics"]).unwrap_or_default());
    Ok(())
}

fn cmd_fixtures(a: &FixturesArgs) -> Result<()> {
    let start = Instant::now();
    let mut spec = FixtureSpec::new(a.kind, a.seed);
    spec.n_stocks = a.stocks;
    spec.n_sectors = a.sector_count;
    if let Some(r) = a.rows {
        spec.rows = r;
    }
    let f = fixtures::generate(&spec)?;

    let dir = a.out.clone().unwrap_or_else(|| default_out("fixtures"));
    let mut stage = Staging::new(&dir)?;
    let mut buf = Vec::new();
    data::write_prices_csv(&f.prices, &mut buf)?;
    stage.write("prices.csv", buf)?;
    let mut buf = Vec::new();
    data::write_sectors_csv(f.prices.tickers(), f.prices.sectors(), &mut buf)?;
    stage.write("sectors.csv", buf)?;
    let info = json!({
        "kind": a.kind,
        "seed": a.seed,
        "rows": spec.rows,
        "loadings": f.loadings,
        "measured": f.measured,
        "targets": a.kind.targets(),
    });
    stage.write("fixture.json", serde_json::to_string_pretty(&info)? + "\n")?;
    let mut m = RunManifest::new("fixtures", json!({ "args": a }));
    m.seed = Some(a.seed);
    m.outputs = stage.digests()?;
    m.wall_time_seconds = start.elapsed().as_secs_f64();
    stage.write("manifest.json", m.to_json()?)?;
    stage.commit()?;
    println!(
        "{} fixture: H_M = {:.4}, H = [{}] -> {}",
        a.kind,
        f.measured.market,
        f.measured.sectors.iter().map(|h| format!("{h:.4}")).collect::<Vec<_>>().join(", "),
        dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn seed_lists() {
        assert_eq!("1..5".parse::<SeedList>().unwrap().0, vec![1, 2, 3, 4, 5]);
        assert_eq!("7".parse::<SeedList>().unwrap().0, vec![7]);
        assert_eq!("3, 1,9".parse::<SeedList>().unwrap().0, vec![3, 1, 9]);
        assert!("5..1".parse::<SeedList>().is_err());
        assert!("a".parse::<SeedList>().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Argument("x".into())), 2);
        assert_eq!(exit_code(&Error::load("f", "row 1", "bad")), 3);
        assert_eq!(exit_code(&Error::Calibration("x".into())), 4);
        assert_eq!(exit_code(&Error::Numeric("x".into())), 5);
        assert_eq!(run_code(["herdlab", "simulate", "--days", "0"]), 2);
        assert_eq!(run_code(["herdlab", "bogus"]), 2);
    }

    #[test]
    fn mean_and_std() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn layered_params() {
        let o = ModelOverrides { days: Some(7), p: Some(0.01), ..Default::default() };
        let (p, src) = resolve_params(Preset::Hkse, None, &o).unwrap();
        assert_eq!(p.t_out, 7);
        assert_eq!(src["T_out"], "cli");
        assert_eq!(src["H_M"], "default");
        assert!((p.p_group - calibration::group_probability(0.01, 150, 0.306).unwrap()).abs() < 1e-15);
    }
}
