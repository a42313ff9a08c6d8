//! `fa`: build the attractors, run the flows and the active scalar solvers,
//! and check them. Every run writes its outputs and a `manifest.json` into
//! the output directory.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::config::{GridFormat, RunConfig, Scenario};
use crate::manifest::{Run, RunManifest, Versions};

/// Errors in the configuration or the input files; exit code 2.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Input(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "invalid configuration: {m}"),
            Self::Input(m) => write!(f, "bad input: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK: u8 = 3;
const EXIT_RESOURCE: u8 = 4;

#[derive(Parser)]
#[command(name = "fa", version, about = "Fractal-forming flows and collapsing active scalars")]
struct Cli {
    /// JSON configuration, or the manifest of an earlier run; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for outputs and the manifest.
    #[arg(long, global = true, default_value = "fa-out")]
    out: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true, env = "FA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segments of the attractor approximation, samples, and the separation check.
    Attractor(AttractorArgs),
    /// Flow checks.
    #[command(subcommand)]
    Flow(FlowCommand),
    /// The slit active scalar system.
    Slit(ActiveArgs),
    /// The ribbon active scalar system.
    Ribbon(ActiveArgs),
    /// Weak-form residuals under refinement.
    Residual(ResidualArgs),
    /// Box-counting dimension of a point file.
    Dimension(DimensionArgs),
    /// Velocity field on a grid.
    FieldSample(FieldSampleArgs),
}

#[derive(Subcommand)]
enum FlowCommand {
    /// Endpoints of the segments under U land on the contracted segments.
    VerifyContraction(ContractionArgs),
    /// Samples stay in the shrinking rectangles under W.
    Collapse(CollapseArgs),
    /// The combined flow contracts every block by 7/8.
    FullDim(FullDimArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Attractor(_) => "attractor",
            Self::Flow(FlowCommand::VerifyContraction(_)) => "flow verify-contraction",
            Self::Flow(FlowCommand::Collapse(_)) => "flow collapse",
            Self::Flow(FlowCommand::FullDim(_)) => "flow full-dim",
            Self::Slit(_) => "slit",
            Self::Ribbon(_) => "ribbon",
            Self::Residual(_) => "residual",
            Self::Dimension(_) => "dimension",
            Self::FieldSample(_) => "field-sample",
        }
    }
}

#[derive(Args, Serialize)]
struct AttractorArgs {
    #[arg(long)]
    alpha: Option<f64>,
    /// Target dimension instead of alpha.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    separation_depth: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    sample_depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct ContractionArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    records: Option<usize>,
}

#[derive(Args, Serialize)]
struct CollapseArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sample_depth: Option<usize>,
    #[arg(long)]
    slack: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Serialize)]
struct FullDimArgs {
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    sample_depth: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Serialize)]
struct ActiveArgs {
    /// Number of markers (even).
    #[arg(long = "N", visible_alias = "n")]
    n: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// End time.
    #[arg(long = "T", visible_alias = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long)]
    adaptive_tol: Option<f64>,
    /// Write the velocity on a grid with this spacing.
    #[arg(long)]
    grid_spacing: Option<f64>,
    #[arg(long)]
    grid_time: Option<f64>,
    #[arg(long)]
    m_nodes: Option<usize>,
}

#[derive(Args, Serialize)]
struct ResidualArgs {
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    #[arg(long)]
    refine: Option<usize>,
    /// Base resolution.
    #[arg(long = "N", visible_alias = "n")]
    n: Option<usize>,
    /// Saved `history.json` of a slit or ribbon run; repeat for each level.
    #[arg(long = "input")]
    inputs: Option<Vec<PathBuf>>,
    #[arg(long)]
    test_functions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_order: Option<f64>,
}

#[derive(Args, Serialize)]
struct DimensionArgs {
    /// CSV of points.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long)]
    expect: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Serialize)]
struct FieldArgs {
    /// fundamental_u, series_u, collapse_w, aux_nu, combined_v or full_vtilde.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    kmax: Option<usize>,
}

#[derive(Args, Serialize)]
struct FieldSampleArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Lower corner `x,y`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lo: Option<Vec<f64>>,
    /// Upper corner `x,y`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    hi: Option<Vec<f64>>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<GridFormat>,
}

struct Session<'a> {
    cli: &'a Cli,
    config: Value,
    run: Run,
}

impl Session<'_> {
    fn go<C: RunConfig + Default>(
        &mut self,
        flags: impl Serialize,
        body: impl FnOnce(&C, &mut Run) -> anyhow::Result<()>,
    ) -> anyhow::Result<()> {
        let cfg: C = config::resolve(self.cli.command.name(), self.cli.config.as_deref(), flags)?;
        self.config = serde_json::to_value(&cfg)?;
        body(&cfg, &mut self.run)
    }
}

fn dispatch(s: &mut Session) -> anyhow::Result<()> {
    match &s.cli.command {
        Command::Attractor(a) => s.go(a, commands::attractor),
        Command::Flow(FlowCommand::VerifyContraction(a)) => s.go(a, commands::verify),
        Command::Flow(FlowCommand::Collapse(a)) => s.go(a, commands::collapse),
        Command::Flow(FlowCommand::FullDim(a)) => s.go(a, commands::full_dim),
        Command::Slit(a) => s.go(a, commands::slit),
        Command::Ribbon(a) => s.go(a, commands::ribbon),
        Command::Residual(a) => s.go(a, commands::residual),
        Command::Dimension(a) => s.go(a, commands::dimension),
        Command::FieldSample(a) => s.go(a, commands::field_sample),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Failure>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_CONFIG;
        }
        if let Some(err) = cause.downcast_ref::<fa_core::Error>() {
            use fa_core::Error::*;
            return match err {
                Resource(_) | StepOverflow { .. } => EXIT_RESOURCE,
                Invariant { .. } | Quadrature { .. } => EXIT_CHECK,
                _ => EXIT_CONFIG,
            };
        }
    }
    EXIT_CONFIG
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RESOURCE);
        }
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    let start = Instant::now();
    let mut s = Session {
        cli: &cli,
        config: Value::Null,
        run: Run::new(&cli.out),
    };
    let result = dispatch(&mut s);
    for c in &s.run.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let (code, error) = match &result {
        Err(e) => {
            eprintln!("error: {e:#}");
            (exit_code(e), Some(format!("{e:#}")))
        }
        Ok(()) if !s.run.all_passed() => (EXIT_CHECK, None),
        Ok(()) => (0, None),
    };
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config: s.config,
        versions: Versions {
            fa_core: fa_core::VERSION.to_string(),
            fa_cli: env!("CARGO_PKG_VERSION").to_string(),
        },
        threads: rayon::current_num_threads(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        checks: s.run.checks,
        outputs: s.run.outputs,
        exit_code: code as i32,
        error,
    };
    let path = cli.out.join("manifest.json");
    let written = serde_json::to_string_pretty(&manifest).map(|t| std::fs::write(&path, t + "\n"));
    if !matches!(written, Ok(Ok(()))) {
        eprintln!("error: cannot write {}", path.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    println!("manifest: {}", path.display());
    ExitCode::from(code)
}
