//! Batch command-line front end.
//!
//! Exit codes: 0 ok, 1 usage or input error, 2 insufficient data,
//! 3 non-convergence (result still written), 4 failed check.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::gb2::{fit_mle, FitError, FitOptions, FitResult, Observation, MIN_OBSERVATIONS};
use crate::ingest::{
    build_samples, load_csv, ranksize_samples, slice, write_ranksize_tsv, BuildReport,
    ExclusionLedger, ExclusionReason, FilterConfig, IngestError, ProductivitySample, TopValue,
    SCHEMA_VERSION,
};
use crate::simulate::{verify_tail_relation, Scenario, SimError};
use crate::superstat::{
    kappa_from_mus, DemandIndexPoint, ParetoIndices, Regime, SectorClass, SuperstatError,
};
use crate::thermo::{
    deficit_exponent, log_grid, ExpansionBranch, FirmPdf, MonotonicityReport, ThermoError,
    ThermoModel,
};

pub const SEED_ENV: &str = "PRODSTAT_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("insufficient data: {got} samples, need at least {min}")]
    InsufficientData { got: usize, min: usize },
    #[error("fit did not converge")]
    NonConvergence,
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Sim(SimError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Superstat(#[from] SuperstatError),
    #[error(transparent)]
    Fit(FitError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::InsufficientData { got, min } => CliError::InsufficientData { got, min },
            other => CliError::Fit(other),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Fit(f) => f.into(),
            other => CliError::Sim(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::InsufficientData { .. } => 2,
            CliError::NonConvergence => 3,
            CliError::CheckFailed(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "prodstat",
    version,
    about = "Superstatistics of labour productivity"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a GB2 to one year and sector class.
    Fit(FitArgs),
    /// Per-year Pareto indices and demand index κ.
    Index(IndexArgs),
    /// Run a superstatistics simulation and verify the tail relation.
    Simulate(SimulateArgs),
    /// Thermodynamic checks of the partition function.
    Thermo(ThermoArgs),
    /// Rank-size plot data, optionally with the fitted GB2 curve.
    Ranksize(RanksizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Firms,
    Workers,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Minimum averaged head count.
    #[arg(long, default_value_t = 1.0)]
    pub min_workers: f64,
    /// Drop samples with productivity above this.
    #[arg(long)]
    pub max_productivity: Option<f64>,
    /// Write the full exclusion ledger as JSON.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitControl {
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub year: i32,
    #[arg(long, value_parser = parse_any_class)]
    pub class: SectorClass,
    #[arg(long, value_enum, default_value_t = Target::Firms)]
    pub target: Target,
    #[command(flatten)]
    pub control: FitControl,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Inclusive range `Y1..Y2` or a single year.
    #[arg(long, value_parser = parse_years)]
    pub years: (i32, i32),
    #[arg(long, value_parser = parse_split_class)]
    pub class: SectorClass,
    #[command(flatten)]
    pub control: FitControl,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub tsv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ThermoArgs {
    /// `exp:MEAN`, `gb2:MU,NU,Q,C1` or `tail:MU,C0`.
    #[arg(long, value_parser = parse_model)]
    pub model: FirmPdf,
    /// `LO:HI:N`, log-spaced.
    #[arg(long, value_parser = parse_grid, default_value = "1e-3:1e3:50")]
    pub beta_grid: BetaGrid,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RanksizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub year: i32,
    #[arg(long, value_parser = parse_split_class)]
    pub class: SectorClass,
    #[arg(long, value_enum, default_value_t = Target::Firms)]
    pub target: Target,
    /// Also fit a GB2 and write its ccdf on a log grid.
    #[arg(long)]
    pub fit: bool,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Defaults to the output path with `.fit.tsv` appended.
    #[arg(long)]
    pub fit_output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl BetaGrid {
    pub fn points(&self) -> Vec<f64> {
        log_grid(self.lo, self.hi, self.n)
    }
}

fn parse_any_class(s: &str) -> Result<SectorClass, String> {
    s.parse()
        .map_err(|e: crate::superstat::ParseSectorClassError| e.to_string())
}

fn parse_split_class(s: &str) -> Result<SectorClass, String> {
    match parse_any_class(s)? {
        SectorClass::All => Err("expected M or N".into()),
        c => Ok(c),
    }
}

fn parse_years(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once("..").unwrap_or((s, s));
    let parse = |v: &str| {
        v.trim()
            .parse::<i32>()
            .map_err(|_| format!("bad year {v:?}"))
    };
    let (a, b) = (parse(a)?, parse(b)?);
    if a > b {
        return Err(format!("empty year range {a}..{b}"));
    }
    Ok((a, b))
}

fn parse_model(s: &str) -> Result<FirmPdf, String> {
    s.parse().map_err(|e: ThermoError| e.to_string())
}

fn parse_grid(s: &str) -> Result<BetaGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("expected LO:HI:N, got {s:?}"));
    };
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number {v:?}"));
    let (lo, hi) = (num(lo)?, num(hi)?);
    let n: usize = n.parse().map_err(|_| format!("bad count {n:?}"))?;
    if !(lo > 0.0 && hi > lo && hi.is_finite() && n >= 2) {
        return Err(format!("need 0 < LO < HI and N ≥ 2, got {s:?}"));
    }
    Ok(BetaGrid { lo, hi, n })
}

/// Provenance block embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub filters: Option<FilterConfig>,
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub tool_version: String,
    /// Seconds since the Unix epoch: `SOURCE_DATE_EPOCH` when set, else the
    /// newest input modification time.
    pub timestamp: u64,
}

impl RunManifest {
    fn new(
        command: &str,
        inputs: &[&Path],
        filters: Option<FilterConfig>,
        seed: Option<u64>,
        parameters: serde_json::Value,
    ) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or_else(|| {
                inputs
                    .iter()
                    .filter_map(|p| std::fs::metadata(p).ok()?.modified().ok())
                    .filter_map(|t| t.duration_since(UNIX_EPOCH).ok())
                    .map(|d| d.as_secs())
                    .max()
                    .unwrap_or(0)
            });
        Self {
            command: command.into(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            filters,
            seed,
            parameters,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            timestamp,
        }
    }

    fn tsv_header(&self) -> Result<String, CliError> {
        Ok(format!("# manifest {}\n", serde_json::to_string(self)?))
    }
}

/// Short form of the exclusion ledger carried in fit outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExclusionSummary {
    pub malformed_rows: usize,
    pub zero_worker_rows: usize,
    pub counts: BTreeMap<ExclusionReason, usize>,
    pub top_values: Vec<TopValue>,
    pub ledger_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOutput {
    pub manifest: RunManifest,
    pub year: i32,
    pub sector_class: SectorClass,
    pub target: Target,
    pub fit: FitResult,
    pub exclusions: ExclusionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexRow {
    pub year: i32,
    pub firms: Option<FitResult>,
    pub workers: Option<FitResult>,
    pub point: Option<DemandIndexPoint>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexOutput {
    pub manifest: RunManifest,
    pub sector_class: SectorClass,
    pub rows: Vec<IndexRow>,
    pub exclusions: ExclusionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermoOutput {
    pub manifest: RunManifest,
    pub model: ThermoModel,
    pub branch: ExpansionBranch,
    pub checks: Vec<Check>,
    pub monotonicity: MonotonicityReport,
    pub pass: bool,
}

struct Panel {
    build: BuildReport,
    malformed: usize,
    zero_workers: usize,
    filters: FilterConfig,
}

impl Panel {
    fn load(args: &InputArgs) -> Result<Self, CliError> {
        let loaded = load_csv(&args.input, SCHEMA_VERSION)?;
        for e in &loaded.malformed {
            eprintln!("warning: line {}: {}", e.line, e.reason);
        }
        let filters = FilterConfig {
            min_workers: args.min_workers,
            max_productivity: args.max_productivity,
            years: None,
        };
        let build = build_samples(&loaded.records, &filters);
        if let Some(path) = &args.ledger {
            write_json(Some(path), &build.ledger, &mut io::sink())?;
        }
        Ok(Self {
            build,
            malformed: loaded.malformed.len(),
            zero_workers: loaded.excluded.len(),
            filters,
        })
    }

    fn summary(&self, args: &InputArgs) -> ExclusionSummary {
        let ExclusionLedger {
            counts, top_values, ..
        } = &self.build.ledger;
        ExclusionSummary {
            malformed_rows: self.malformed,
            zero_worker_rows: self.zero_workers,
            counts: counts.clone(),
            top_values: top_values.clone(),
            ledger_path: args.ledger.as_ref().map(|p| p.display().to_string()),
        }
    }

    fn slice(&self, year: i32, class: SectorClass) -> Vec<&ProductivitySample> {
        slice(&self.build.samples, year, class)
    }
}

fn observations(samples: &[&ProductivitySample], target: Target) -> Vec<Observation> {
    samples
        .iter()
        .map(|s| Observation {
            c: s.c,
            w: match target {
                Target::Firms => 1.0,
                Target::Workers => s.weight_workers,
            },
        })
        .collect()
}

fn fit_options(control: &FitControl) -> FitOptions {
    FitOptions {
        bootstrap_replicates: control.bootstrap,
        seed: control.seed,
        ..FitOptions::default()
    }
}

fn write_text(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn write_json<T: Serialize>(
    path: Option<&Path>,
    value: &T,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text, stdout)
}

pub fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> Result<FitOutput, CliError> {
    let panel = Panel::load(&args.input)?;
    let data = observations(&panel.slice(args.year, args.class), args.target);
    let fit = fit_mle(&data, &fit_options(&args.control))?;
    let manifest = RunManifest::new(
        "fit",
        &[&args.input.input],
        Some(panel.filters.clone()),
        Some(args.control.seed),
        json!({
            "year": args.year,
            "class": args.class,
            "target": args.target,
            "bootstrap": args.control.bootstrap,
        }),
    );
    let out = FitOutput {
        manifest,
        year: args.year,
        sector_class: args.class,
        target: args.target,
        fit,
        exclusions: panel.summary(&args.input),
    };
    write_json(args.output.as_deref(), &out, stdout)?;
    if !out.fit.converged {
        return Err(CliError::NonConvergence);
    }
    Ok(out)
}

fn index_row(panel: &Panel, year: i32, class: SectorClass, opts: &FitOptions) -> IndexRow {
    let samples = panel.slice(year, class);
    let mut row = IndexRow {
        year,
        firms: None,
        workers: None,
        point: None,
        warnings: Vec::new(),
        error: None,
    };
    let fits = (
        fit_mle(&observations(&samples, Target::Firms), opts),
        fit_mle(&observations(&samples, Target::Workers), opts),
    );
    let (f, w) = match fits {
        (Ok(f), Ok(w)) => (f, w),
        (Err(e), _) | (_, Err(e)) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    for (name, fit) in [("firm", &f), ("worker", &w)] {
        if !fit.converged {
            row.warnings.push(format!("{name} fit did not converge"));
        }
    }
    let indices = ParetoIndices {
        mu_f: f.params.mu(),
        mu_w: w.params.mu(),
        mu_f_stderr: f.mu_stderr,
        mu_w_stderr: w.mu_stderr,
        year,
        sector_class: class,
    };
    match kappa_from_mus(&indices) {
        Ok(p) => {
            match p.regime {
                Regime::NegativeTemperature => row.warnings.push(format!(
                    "μ_W = {:.4} ≤ μ_F = {:.4}: negative temperature, κ undefined",
                    indices.mu_w, indices.mu_f
                )),
                Regime::FixedPointDegenerate => row.warnings.push("μ_F ≈ 1: κ undefined".into()),
                Regime::Superstatistical => {}
            }
            row.point = Some(p);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.firms = Some(f);
    row.workers = Some(w);
    row
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x}"))
}

fn index_tsv(out: &IndexOutput) -> Result<String, CliError> {
    let mut s = out.manifest.tsv_header()?;
    s.push_str(
        "year\tmu_f\tmu_f_stderr\tmu_w\tmu_w_stderr\tgamma\tdelta\tkappa\tkappa_stderr\tregime\n",
    );
    for r in &out.rows {
        let mu = |f: &Option<FitResult>| f.as_ref().map(|f| f.params.mu());
        let se = |f: &Option<FitResult>| f.as_ref().map(|f| f.mu_stderr);
        let p = r.point.as_ref();
        let regime = match (p, &r.error) {
            (Some(p), _) => format!("{:?}", p.regime),
            (None, _) => "Error".into(),
        };
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.year,
            fmt_opt(mu(&r.firms)),
            fmt_opt(se(&r.firms)),
            fmt_opt(mu(&r.workers)),
            fmt_opt(se(&r.workers)),
            fmt_opt(p.map(|p| p.gamma)),
            fmt_opt(p.and_then(|p| p.delta)),
            fmt_opt(p.and_then(|p| p.kappa)),
            fmt_opt(p.and_then(|p| p.kappa_stderr)),
            regime
        )
        .expect("write to String");
    }
    Ok(s)
}

pub fn cmd_index(args: &IndexArgs, stdout: &mut dyn Write) -> Result<IndexOutput, CliError> {
    let panel = Panel::load(&args.input)?;
    let opts = fit_options(&args.control);
    let (y0, y1) = args.years;
    let rows: Vec<IndexRow> = (y0..=y1)
        .into_par_iter()
        .map(|year| index_row(&panel, year, args.class, &opts))
        .collect();
    for r in &rows {
        for w in &r.warnings {
            eprintln!("warning: {}: {w}", r.year);
        }
        if let Some(e) = &r.error {
            eprintln!("error: {}: {e}", r.year);
        }
    }
    let manifest = RunManifest::new(
        "index",
        &[&args.input.input],
        Some(panel.filters.clone()),
        Some(args.control.seed),
        json!({
            "years": [y0, y1],
            "class": args.class,
            "bootstrap": args.control.bootstrap,
        }),
    );
    let out = IndexOutput {
        manifest,
        sector_class: args.class,
        rows,
        exclusions: panel.summary(&args.input),
    };
    write_json(args.output.as_deref(), &out, stdout)?;
    if let Some(path) = &args.tsv {
        write_text(Some(path), &index_tsv(&out)?, stdout)?;
    }
    if out.rows.iter().all(|r| r.point.is_none()) {
        let got = out
            .rows
            .iter()
            .map(|r| panel.slice(r.year, args.class).len())
            .max()
            .unwrap_or(0);
        if got < MIN_OBSERVATIONS {
            return Err(CliError::InsufficientData {
                got,
                min: MIN_OBSERVATIONS,
            });
        }
        return Err(CliError::CheckFailed(
            "no year produced a demand index".into(),
        ));
    }
    Ok(out)
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<bool, CliError> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.sim.seed = seed;
    }
    let (report, sim) = verify_tail_relation(&scenario)?;
    let manifest = RunManifest::new(
        "simulate",
        &[&args.scenario],
        None,
        Some(scenario.sim.seed),
        serde_json::to_value(&scenario)?,
    );
    std::fs::create_dir_all(&args.out_dir)?;
    let mut tsv = manifest.tsv_header()?.into_bytes();
    sim.write_tsv(&mut tsv)?;
    std::fs::write(args.out_dir.join("simulation.tsv"), tsv)?;
    write_json(
        Some(&args.out_dir.join("tail_report.json")),
        &json!({ "manifest": manifest, "report": report }),
        stdout,
    )?;
    writeln!(
        stdout,
        "mu_f = {:.4} ± {:.4}  mu_w = {:.4} ± {:.4}  nominal mu_w = {:.4}  pass = {}",
        report.mu_f_measured,
        report.mu_f_fit.mu_stderr,
        report.mu_w_measured,
        report.mu_w_fit.mu_stderr,
        report.mu_w_nominal,
        report.pass
    )?;
    if !report.pass {
        return Err(CliError::CheckFailed("tail relation".into()));
    }
    Ok(report.pass)
}

fn check(name: &str, pass: bool, detail: serde_json::Value) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

/// Expansion, limit and closed-form checks for one model.
pub fn thermo_checks(model: &ThermoModel, grid: &[f64]) -> Result<Vec<Check>, ThermoError> {
    let mut checks = Vec::new();
    let m = model.mean0;
    let scale = model.c0;

    if let FirmPdf::Exponential { mean } = model.firm_pdf {
        let mut worst: f64 = 0.0;
        for &b in grid {
            let z = 1.0 / (1.0 + mean * b);
            let d = mean / (1.0 + mean * b);
            worst = worst
                .max((model.partition(b)? / z - 1.0).abs())
                .max((model.demand(b)? / d - 1.0).abs());
        }
        checks.push(check(
            "closed_form",
            worst <= 1e-9,
            json!({ "max_relative_error": worst, "tolerance": 1e-9 }),
        ));
    }

    let small: Vec<f64> = (1..=12).map(|k| 10f64.powi(-k) / scale).collect();
    let deficits = small
        .iter()
        .map(|&b| Ok(model.demand_deficit(b)? / m))
        .collect::<Result<Vec<f64>, ThermoError>>()?;
    let decreasing = deficits.windows(2).all(|w| w[1] < w[0]);
    let last = *deficits.last().expect("nonempty");
    checks.push(check(
        "zero_beta_limit",
        decreasing && last < 0.1,
        json!({ "beta": small.last(), "relative_deficit": last, "decreasing": decreasing }),
    ));

    let big = 1e4 / m;
    let d_big = model.demand(big)?;
    checks.push(check(
        "large_beta_limit",
        d_big < 1e-3 * m,
        json!({ "beta": big, "demand": d_big, "bound": 1e-3 * m }),
    ));

    let branch = model.expansion_branch();
    let expected = match branch {
        ExpansionBranch::Analytic => Some(1.0),
        ExpansionBranch::Anomalous => Some(model.mu_f - 1.0),
        ExpansionBranch::Logarithmic => None,
    };
    let betas = log_grid(1e-8 / scale, 1e-6 / scale, 9);
    let slope = deficit_exponent(model, &betas)?;
    checks.push(match expected {
        Some(e) => check(
            "deficit_exponent",
            (slope - e).abs() <= 0.02,
            json!({ "measured": slope, "expected": e, "tolerance": 0.02, "scaled_beta_range": [1e-8, 1e-6] }),
        ),
        None => check(
            "deficit_exponent",
            true,
            json!({ "measured": slope, "expected": null, "note": "logarithmic branch, no pure power law" }),
        ),
    });

    if branch == ExpansionBranch::Anomalous {
        if let Some(a) = model.anomalous_coefficient() {
            let b = betas[0];
            let measured = model.demand_deficit(b)? / b.powf(model.mu_f - 1.0);
            let predicted = model.mu_f * a;
            let rel = (measured / predicted - 1.0).abs();
            checks.push(check(
                "anomalous_prefactor",
                rel <= 0.05,
                json!({ "beta": b, "measured": measured, "predicted": predicted, "relative_error": rel, "tolerance": 0.05 }),
            ));
        }
    }
    Ok(checks)
}

pub fn cmd_thermo(args: &ThermoArgs, stdout: &mut dyn Write) -> Result<ThermoOutput, CliError> {
    let model = ThermoModel::new(args.model)?;
    let grid = args.beta_grid.points();
    let monotonicity = model.check_monotonicity(&grid)?;
    let mut checks = thermo_checks(&model, &grid)?;
    checks.insert(
        0,
        check(
            "monotonicity",
            monotonicity.pass,
            json!({ "points": grid.len() }),
        ),
    );
    let pass = checks.iter().all(|c| c.pass);
    let manifest = RunManifest::new(
        "thermo",
        &[],
        None,
        None,
        json!({ "model": args.model.to_string(), "beta_grid": args.beta_grid }),
    );
    let out = ThermoOutput {
        manifest,
        model,
        branch: model.expansion_branch(),
        checks,
        monotonicity,
        pass,
    };
    write_json(args.output.as_deref(), &out, stdout)?;
    if !pass {
        let failed: Vec<&str> = out
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        return Err(CliError::CheckFailed(failed.join(", ")));
    }
    Ok(out)
}

pub fn cmd_ranksize(
    args: &RanksizeArgs,
    stdout: &mut dyn Write,
) -> Result<Option<FitResult>, CliError> {
    if args.fit && args.output.is_none() && args.fit_output.is_none() {
        return Err(CliError::Usage(
            "--fit with stdout output needs --fit-output".into(),
        ));
    }
    let panel = Panel::load(&args.input)?;
    let samples = panel.slice(args.year, args.class);
    if samples.is_empty() {
        return Err(CliError::InsufficientData { got: 0, min: 1 });
    }
    let manifest = RunManifest::new(
        "ranksize",
        &[&args.input.input],
        Some(panel.filters.clone()),
        Some(args.seed),
        json!({ "year": args.year, "class": args.class, "target": args.target, "fit": args.fit }),
    );
    let points = ranksize_samples(&samples, args.target == Target::Workers);
    let mut buf = manifest.tsv_header()?.into_bytes();
    write_ranksize_tsv(&points, &mut buf)?;
    write_text(
        args.output.as_deref(),
        std::str::from_utf8(&buf).expect("utf8"),
        stdout,
    )?;

    if !args.fit {
        return Ok(None);
    }
    if samples.len() < MIN_OBSERVATIONS {
        eprintln!(
            "warning: {} samples, no fit attempted (need {MIN_OBSERVATIONS})",
            samples.len()
        );
        return Ok(None);
    }
    let opts = FitOptions {
        bootstrap_replicates: 0,
        seed: args.seed,
        ..FitOptions::default()
    };
    let fit = fit_mle(&observations(&samples, args.target), &opts)?;
    let lo = points.last().expect("nonempty").c;
    let hi = points[0].c;
    let grid = if hi > lo {
        log_grid(lo, hi, 200)
    } else {
        vec![lo]
    };
    let mut s = manifest.tsv_header()?;
    writeln!(s, "# params {}", serde_json::to_string(&fit.params)?).expect("write to String");
    s.push_str("c\tccdf\n");
    for c in grid {
        writeln!(s, "{c:e}\t{:e}", fit.params.ccdf(c)).expect("write to String");
    }
    let path = match (&args.fit_output, &args.output) {
        (Some(p), _) => p.clone(),
        (None, Some(o)) => {
            let mut name = o.clone().into_os_string();
            name.push(".fit.tsv");
            PathBuf::from(name)
        }
        (None, None) => unreachable!("checked above"),
    };
    write_text(Some(&path), &s, stdout)?;
    if !fit.converged {
        return Err(CliError::NonConvergence);
    }
    Ok(Some(fit))
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, stdout).map(drop),
        Command::Index(a) => cmd_index(a, stdout).map(drop),
        Command::Simulate(a) => cmd_simulate(a, stdout).map(drop),
        Command::Thermo(a) => cmd_thermo(a, stdout).map(drop),
        Command::Ranksize(a) => cmd_ranksize(a, stdout).map(drop),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
