//! Command-line front end.
//!
//! Every command validates its inputs up front and reports failures through
//! [`CliError`], whose exit codes are stable: 0 on success, 2 for invalid
//! input, 3 for I/O failures. Randomised commands always record the seed they
//! used; given the same inputs they write byte-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bounds::{self, ExposureChances, MarginalChances, RiskRatio, UncertaintyInterval};
use crate::posterior::{self, DrawSet, ModelSpec};
use crate::simulate::{self, PopulationSpec};
use crate::studies;
use crate::summaries::{self, HistogramSpec};
use crate::VERSION;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PCBOUNDS_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

#[derive(Debug, Parser)]
#[command(name = "pcbounds", version, about = "Bounds on the probability of causation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bounds on PC from the two potential-response chances or a risk ratio
    Bounds(BoundsArgs),
    /// Bounds on PC* when the exposure itself is uncertain
    Pcstar(PcStarArgs),
    /// Association measures for 2x2 study records
    Study(StudyArgs),
    /// Draw the random uncertainty interval and write its summaries
    Posterior(PosteriorArgs),
    /// Coverage curve of a saved draw set
    Coverage(CoverageArgs),
    /// Simulate a potential-outcome population and check the bounds
    Simulate(SimulateArgs),
    /// Summaries, histograms and ordered subsample of a saved draw set
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Chance of response under exposure
    #[arg(long, requires = "p0", conflicts_with = "rr")]
    pub p1: Option<f64>,
    /// Chance of response without exposure
    #[arg(long, requires = "p1")]
    pub p0: Option<f64>,
    /// Causal risk ratio (lower bound only; upper bound taken as 1)
    #[arg(long, required_unless_present = "p1")]
    pub rr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PcStarArgs {
    /// P(E = 1 | R = 1)
    #[arg(long)]
    pub phi: f64,
    /// Prior chance of exposure P(E = 1)
    #[arg(long, required_unless_present = "pc_lower")]
    pub theta: Option<f64>,
    /// Scale a known PC interval by phi instead
    #[arg(long, requires = "pc_upper", conflicts_with = "theta")]
    pub pc_lower: Option<f64>,
    #[arg(long, requires = "pc_lower")]
    pub pc_upper: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Study records in JSON
    pub path: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Add 0.5 to every cell before computing the odds ratio
    #[arg(long)]
    pub correction: bool,
}

#[derive(Debug, Args)]
pub struct PosteriorArgs {
    /// Model spec in JSON
    pub spec: PathBuf,
    #[arg(long, env = OUT_DIR_ENV, default_value = "pcbounds-out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[command(flatten)]
    pub display: DisplayArgs,
}

#[derive(Debug, Args)]
pub struct DisplayArgs {
    /// Number of evenly spaced coverage points on [0, 1]
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Intervals in the ordered subsample
    #[arg(long, default_value_t = 100)]
    pub subsample: usize,
    /// Spacing of the subsample; defaults to n / subsample
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Draw set CSV written by `posterior`
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long, default_value_t = 101, conflicts_with = "grid")]
    pub points: usize,
    /// Explicit comma-separated grid
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Write here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Population spec in JSON
    pub spec: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace the exposure mechanism by its population-average rate
    #[arg(long)]
    pub exogenize: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long, env = OUT_DIR_ENV, default_value = "pcbounds-out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub display: DisplayArgs,
}

/// Result of a command: what goes to standard output, and any note for
/// standard error.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub stderr: String,
}

pub fn run(cli: Cli) -> Result<Output, CliError> {
    match cli.command {
        Command::Bounds(a) => cmd_bounds(&a),
        Command::Pcstar(a) => cmd_pcstar(&a),
        Command::Study(a) => cmd_study(&a),
        Command::Posterior(a) => cmd_posterior(&a),
        Command::Coverage(a) => cmd_coverage(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

pub const EXCEEDS_HALF: &str = "lower bound exceeds 0.5: PC exceeds 50%";
pub const CANNOT_CONCLUDE: &str = "cannot be sure that PC exceeds 50%; this does not show that PC is below 50%";

#[derive(Debug, Serialize)]
struct BoundsOutput {
    version: &'static str,
    lower: f64,
    upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper_sharp: Option<f64>,
    rr: Value,
    exceeds_half: bool,
    note: &'static str,
}

fn rr_value(rr: RiskRatio) -> Value {
    if rr.is_infinite() {
        Value::String("inf".into())
    } else {
        json!(rr.value())
    }
}

pub fn cmd_bounds(a: &BoundsArgs) -> Result<Output, CliError> {
    let (rr, interval, sharp) = match (a.p1, a.p0, a.rr) {
        (Some(p1), Some(p0), _) => {
            let m = MarginalChances::new(p1, p0).map_err(validation)?;
            let sharp = bounds::pc_bounds(m).map_err(validation)?;
            let simple = bounds::pc_bounds_simple(m).map_err(validation)?;
            (bounds::risk_ratio(m).map_err(validation)?, simple, Some(sharp.upper()))
        }
        (_, _, Some(rr)) => {
            let rr = RiskRatio::new(rr).map_err(validation)?;
            let interval = UncertaintyInterval::new(bounds::pc_lower(rr), 1.0).map_err(validation)?;
            (rr, interval, None)
        }
        _ => return Err(validation("give --p1 and --p0, or --rr")),
    };
    let exceeds_half = interval.lower() > 0.5;
    let out = BoundsOutput {
        version: VERSION,
        lower: interval.lower(),
        upper: interval.upper(),
        upper_sharp: sharp,
        rr: rr_value(rr),
        exceeds_half,
        note: if exceeds_half { EXCEEDS_HALF } else { CANNOT_CONCLUDE },
    };
    Ok(Output {
        stdout: to_json(&out),
        ..Default::default()
    })
}

pub fn cmd_pcstar(a: &PcStarArgs) -> Result<Output, CliError> {
    let out = match (a.theta, a.pc_lower, a.pc_upper) {
        (_, Some(lo), Some(hi)) => {
            let pc = UncertaintyInterval::new(lo, hi).map_err(validation)?;
            let i = bounds::pc_star_from_pc(pc, a.phi).map_err(validation)?;
            json!({"version": VERSION, "lower": i.lower(), "upper": i.upper(), "phi": a.phi})
        }
        (Some(theta), _, _) => {
            let e = ExposureChances::new(a.phi, theta).map_err(validation)?;
            let r = bounds::pc_star_assess(e).map_err(validation)?;
            json!({
                "version": VERSION,
                "lower": r.interval.lower(),
                "upper": r.interval.upper(),
                "phi": a.phi,
                "theta": theta,
                "warning": r.warning.map(|w| json!({"code": w.code(), "kind": w})),
            })
        }
        _ => return Err(validation("give --theta, or --pc-lower and --pc-upper")),
    };
    Ok(Output {
        stdout: to_json(&out),
        ..Default::default()
    })
}

fn study_error(e: studies::StudyError) -> CliError {
    match e {
        studies::StudyError::Io(source) => CliError::Io {
            path: PathBuf::new(),
            source,
        },
        other => validation(other),
    }
}

pub fn cmd_study(a: &StudyArgs) -> Result<Output, CliError> {
    let text = read(&a.path)?;
    if text.trim().is_empty() {
        return Err(validation(format!(
            "{}: no study records (empty file)",
            a.path.display()
        )));
    }
    let records = studies::ingest(text.as_bytes()).map_err(study_error)?;
    let reports = records
        .iter()
        .enumerate()
        .map(|(i, r)| studies::measure_report(r, a.correction).map_err(|e| validation(format!("record {i}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let stdout = match a.format {
        Format::Json => to_json(&json!({
            "version": VERSION,
            "correction": a.correction,
            "records": reports,
        })),
        Format::Csv => format!(
            "# pcbounds v{VERSION}\n{}",
            studies::reports_to_csv(&reports).map_err(study_error)?
        ),
    };
    Ok(Output {
        stdout,
        ..Default::default()
    })
}

fn resolve_seed(explicit: Option<u64>, from_spec: Option<u64>, stderr: &mut String) -> u64 {
    explicit.or(from_spec).unwrap_or_else(|| {
        let seed = rand::random::<u64>();
        stderr.push_str(&format!("no seed given; generated seed {seed}\n"));
        seed
    })
}

fn metadata_line(seed: u64, spec_hash: &str) -> String {
    format!("# pcbounds v{VERSION} seed={seed} spec_hash={spec_hash}\n")
}

/// Writes the summary, coverage, histogram and subsample artifacts for a
/// draw set and returns the summary document.
fn write_report(
    draws: &DrawSet,
    out_dir: &Path,
    display: &DisplayArgs,
    individual: Option<(f64, f64)>,
    extra: Value,
) -> Result<Value, CliError> {
    let summary = summaries::summarize(draws).map_err(validation)?;
    let meta = metadata_line(draws.seed, &draws.spec_hash);

    let grid = summaries::uniform_grid(display.grid_points);
    let curve = summaries::coverage(draws, &grid).map_err(validation)?;
    write(&out_dir.join("coverage.csv"), &format!("{meta}{}", curve.to_csv()))?;

    let spec = HistogramSpec::new(display.bins).map_err(validation)?;
    let hist = |name: &str, samples: Vec<f64>| -> Result<(), CliError> {
        if samples.is_empty() {
            return Ok(());
        }
        let masses = summaries::density(&samples, spec).map_err(validation)?;
        write(
            &out_dir.join(name),
            &format!("{meta}{}", summaries::histogram_csv(&masses, spec)),
        )
    };
    hist("upper_hist.csv", draws.uppers().to_vec())?;
    hist(
        "upper_given_zero_hist.csv",
        draws
            .lowers()
            .iter()
            .zip(draws.uppers())
            .filter(|(&l, _)| l == 0.0)
            .map(|(_, &u)| u)
            .collect(),
    )?;
    hist(
        "lower_given_pos_hist.csv",
        draws.lowers().iter().copied().filter(|&l| l > 0.0).collect(),
    )?;
    hist("length_hist.csv", draws.lengths().collect())?;

    let k = display.subsample.min(draws.n());
    let stride = display.stride.unwrap_or((draws.n() / k.max(1)).max(1));
    let picked = summaries::ordered_subsample(draws, k, stride).map_err(validation)?;
    write(
        &out_dir.join("subsample.csv"),
        &format!("{meta}{}", summaries::subsample_csv(&picked)),
    )?;

    let individual = match individual {
        Some((phi_bar, theta_bar)) => {
            let i = summaries::individual_focused_interval(phi_bar, theta_bar).map_err(validation)?;
            json!({"phi_bar": phi_bar, "theta_bar": theta_bar, "lower": i.lower(), "upper": i.upper()})
        }
        None => Value::Null,
    };
    let mut doc = json!({
        "version": VERSION,
        "seed": draws.seed,
        "spec_hash": draws.spec_hash,
        "mode": draws.mode.as_str(),
        "summary": summary,
        "individual_focused": individual,
    });
    if let (Value::Object(doc), Value::Object(extra)) = (&mut doc, extra) {
        doc.extend(extra);
    }
    write(&out_dir.join("summary.json"), &to_json(&doc))?;
    Ok(doc)
}

/// Posterior expectations of `phi` and `theta` for the plug-in interval.
/// In generative mode `phi` is a nonlinear function of the chances, so its
/// expectation is the Monte-Carlo mean of the upper bounds.
fn expected_exposure(spec: &ModelSpec, draws: &DrawSet) -> (f64, f64) {
    let theta_bar = spec.theta_prior().mean();
    match spec {
        ModelSpec::Direct { phi, .. } => (phi.posterior().mean(), theta_bar),
        ModelSpec::Generative { .. } => {
            let mean = draws.uppers().iter().sum::<f64>() / draws.n() as f64;
            (mean, theta_bar)
        }
    }
}

pub fn cmd_posterior(a: &PosteriorArgs) -> Result<Output, CliError> {
    let text = read(&a.spec)?;
    let (spec, settings) = posterior::parse_config(&text).map_err(validation)?;
    let n = a.n.unwrap_or(settings.n);
    let burn_in = a.burn_in.unwrap_or(settings.burn_in);
    let thin = a.thin.unwrap_or(settings.thin);
    let mut stderr = String::new();
    let seed = resolve_seed(a.seed, settings.seed, &mut stderr);
    let draws = posterior::sample_draws(&spec, n, seed, burn_in, thin).map_err(validation)?;
    write(&a.out_dir.join("draws.csv"), &draws.to_csv())?;
    let doc = write_report(
        &draws,
        &a.out_dir,
        &a.display,
        Some(expected_exposure(&spec, &draws)),
        json!({"n": n, "burn_in": burn_in, "thin": thin}),
    )?;
    let s = &doc["summary"];
    let headline = json!({
        "version": VERSION,
        "seed": seed,
        "spec_hash": draws.spec_hash,
        "n": n,
        "prob_lower_zero": s["prob_lower_zero"],
        "upper_mean": s["upper_mean"],
        "lower_mean_given_pos": s["lower_mean_given_pos"],
        "length_mean": s["length_mean"],
        "out_dir": a.out_dir.display().to_string(),
    });
    Ok(Output {
        stdout: to_json(&headline),
        stderr,
    })
}

fn load_draws(path: &Path) -> Result<DrawSet, CliError> {
    DrawSet::from_csv(&read(path)?).map_err(|e| validation(format!("{}: {e}", path.display())))
}

pub fn cmd_coverage(a: &CoverageArgs) -> Result<Output, CliError> {
    let draws = load_draws(&a.draws)?;
    let grid = a.grid.clone().unwrap_or_else(|| summaries::uniform_grid(a.points));
    let curve = summaries::coverage(&draws, &grid).map_err(validation)?;
    let body = format!("{}{}", metadata_line(draws.seed, &draws.spec_hash), curve.to_csv());
    match &a.out {
        Some(path) => {
            write(path, &body)?;
            Ok(Output::default())
        }
        None => Ok(Output {
            stdout: body,
            ..Default::default()
        }),
    }
}

pub fn cmd_report(a: &ReportArgs) -> Result<Output, CliError> {
    let draws = load_draws(&a.draws)?;
    let doc = write_report(&draws, &a.out_dir, &a.display, None, json!({"n": draws.n()}))?;
    Ok(Output {
        stdout: to_json(&doc),
        ..Default::default()
    })
}

fn population_hash(spec: &PopulationSpec) -> String {
    let canonical = serde_json::to_string(&(spec.joint, spec.exposure, spec.n)).expect("spec serializes");
    format!("{:x}", Sha256::digest(canonical.as_bytes()))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<Output, CliError> {
    let text = read(&a.spec)?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", a.spec.display())))?;
    let mut stderr = String::new();
    let from_file = value.get("seed").and_then(Value::as_u64);
    let seed = resolve_seed(a.seed, from_file, &mut stderr);
    if let Value::Object(obj) = &mut value {
        obj.insert("seed".into(), seed.into());
    }
    let mut spec = PopulationSpec::from_json(&value.to_string()).map_err(validation)?;
    if a.exogenize {
        spec = spec.exogenized();
    }
    let report = simulate::sufficiency_violation_demo(&spec).map_err(validation)?;
    let hash = population_hash(&spec);
    let stdout = match a.format {
        Format::Csv => format!("{}{}", metadata_line(seed, &hash), report.tally.to_csv()),
        Format::Json => {
            let marginals = simulate::empirical_marginals(&report.tally).map_err(validation)?;
            to_json(&json!({
                "version": VERSION,
                "seed": seed,
                "spec_hash": hash,
                "n": spec.n,
                "exposure": spec.exposure,
                "empirical_pc": report.empirical_pc,
                "marginals": {"p1": marginals.p1(), "p0": marginals.p0()},
                "bounds_from_arms": report.bounds_from_arms,
                "contained": report.contained,
                "tally": report.tally,
            }))
        }
    };
    Ok(Output { stdout, stderr })
}
