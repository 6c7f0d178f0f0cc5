//! Command-line surface: `solve`, `verify`, `oracle` and `ana`.
//!
//! Every command writes one JSON document (to `--out` or stdout) and returns
//! an exit status: 0 on success, 1 when the run completes without the
//! requested result, 2 on input errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{AnaIntegrator, Integrator};
use crate::error::Error;
use crate::io::{self as gio, CertificateDoc, IoError, SolveDoc};
use crate::oracle::{self, DEFAULT_TOL_FEAS, DEFAULT_TOL_REGRET};
use crate::swarm::{run_acna, PsoAnchor};
use crate::{AnaSettings, SwarmSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_FOUND: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "acna",
    version,
    about = "Mixed-strategy Nash equilibria of normal-form games"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for an equilibrium with the particle swarm of penalty flows.
    Solve(SolveArgs),
    /// Certify a candidate profile.
    Verify(VerifyArgs),
    /// Run an exact or exhaustive reference solver.
    Oracle(OracleArgs),
    /// Run a single penalty flow to a critical point.
    Ana(AnaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnchorArg {
    Critical,
    Start,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntegratorArg {
    ForwardBackward,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleMode {
    Pure,
    Support2,
    Grid,
}

/// Flow parameters shared by `solve` and `ana`.
#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub step_size: f64,
    #[arg(long, default_value_t = 2_000_000)]
    pub max_steps: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub stationarity_tol: f64,
    #[arg(long, default_value_t = 10)]
    pub stationarity_window: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub feasibility_tol: f64,
    #[arg(long, default_value_t = 0.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 100)]
    pub trace_stride: usize,
    #[arg(long, default_value_t = 0.1)]
    pub max_step_norm: f64,
    #[arg(long, value_enum, default_value_t = IntegratorArg::ForwardBackward)]
    pub integrator: IntegratorArg,
}

impl FlowArgs {
    pub fn settings(&self) -> AnaSettings {
        AnaSettings {
            step_size: self.step_size,
            max_steps: self.max_steps,
            stationarity_tol: self.stationarity_tol,
            stationarity_window: self.stationarity_window,
            feasibility_tol: self.feasibility_tol,
            nu: self.nu,
            trace_stride: self.trace_stride,
            max_step_norm: self.max_step_norm,
            integrator: match self.integrator {
                IntegratorArg::ForwardBackward => Integrator::ForwardBackward,
                IntegratorArg::Euler => Integrator::ForwardEuler,
            },
        }
    }
}

/// Full run configuration of `solve`.
#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub game: PathBuf,
    /// Master seed; particle `i` draws from stream `i` of this seed.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub swarm_size: usize,
    #[arg(long, default_value_t = 0.9)]
    pub inertia_start: f64,
    #[arg(long, default_value_t = 0.4)]
    pub inertia_end: f64,
    #[arg(long, default_value_t = 2.0)]
    pub c1: f64,
    #[arg(long, default_value_t = 2.0)]
    pub c2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub stall_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub stall_limit: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub global_tol: f64,
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    pub init_low: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub init_high: f64,
    #[arg(long, value_enum, default_value_t = AnchorArg::Critical)]
    pub anchor: AnchorArg,
    #[arg(long, default_value_t = DEFAULT_TOL_REGRET)]
    pub tol_regret: f64,
    #[arg(long, default_value_t = DEFAULT_TOL_FEAS)]
    pub tol_feas: f64,
    #[command(flatten)]
    pub flow: FlowArgs,
    /// Directory receiving one trace table per particle and iteration.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
    /// Result document path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SolveArgs {
    pub fn swarm_settings(&self) -> SwarmSettings {
        SwarmSettings {
            swarm_size: self.swarm_size,
            inertia_start: self.inertia_start,
            inertia_end: self.inertia_end,
            c1: self.c1,
            c2: self.c2,
            stall_tol: self.stall_tol,
            stall_limit: self.stall_limit,
            max_iterations: self.max_iterations,
            global_tol: self.global_tol,
            init_low: self.init_low,
            init_high: self.init_high,
            seed: self.seed,
            anchor: match self.anchor {
                AnchorArg::Critical => PsoAnchor::CriticalPoint,
                AnchorArg::Start => PsoAnchor::StartPoint,
            },
            tol_regret: self.tol_regret,
            tol_feas: self.tol_feas,
            record_traces: self.trace_dir.is_some(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL_REGRET)]
    pub tol_regret: f64,
    #[arg(long, default_value_t = DEFAULT_TOL_FEAS)]
    pub tol_feas: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long, value_enum)]
    pub mode: OracleMode,
    /// Grid denominator for `--mode grid`.
    #[arg(long, default_value_t = 4)]
    pub resolution: usize,
    #[arg(long, default_value_t = DEFAULT_TOL_REGRET)]
    pub tol_regret: f64,
    #[arg(long, default_value_t = DEFAULT_TOL_FEAS)]
    pub tol_feas: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnaArgs {
    #[arg(long)]
    pub game: PathBuf,
    /// Start profile file; drawn uniformly from the init range otherwise.
    #[arg(long)]
    pub x0: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    pub init_low: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub init_high: f64,
    #[command(flatten)]
    pub flow: FlowArgs,
    #[arg(long, default_value_t = DEFAULT_TOL_REGRET)]
    pub tol_regret: f64,
    #[arg(long, default_value_t = DEFAULT_TOL_FEAS)]
    pub tol_feas: f64,
    /// Trace table path.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(_) => EXIT_NOT_FOUND,
            _ => EXIT_INPUT,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::IntegrationFault { .. } => CliError::Run(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn write_err(path: &Path, e: io::Error) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| write_err(path, e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("cannot write output: {e}"))),
    }
}

/// Runs a parsed command line; errors are reported on `stderr`.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Solve(a) => solve_command(a, stdout),
        Command::Verify(a) => verify_command(a, stdout),
        Command::Oracle(a) => oracle_command(a, stdout),
        Command::Ana(a) => ana_command(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Trace file name of `particle` in outer iteration `iteration`.
pub fn trace_file_name(particle: usize, iteration: usize) -> String {
    format!("trace_p{particle:03}_k{iteration:04}.csv")
}

pub fn solve_command(args: &SolveArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let game = gio::load_game(&args.game)?;
    let settings = args.swarm_settings();
    let outcome = run_acna(&game, &settings, &args.flow.settings())?;

    if let Some(dir) = &args.trace_dir {
        fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
        for t in &outcome.traces {
            let path = dir.join(trace_file_name(t.particle, t.iteration));
            let mut buf = Vec::new();
            gio::write_trace_csv(&mut buf, &t.trace).expect("in-memory write");
            fs::write(&path, buf).map_err(|e| write_err(&path, e))?;
        }
    }

    let verdict = outcome.best.as_ref().is_some_and(|c| c.verdict);
    let doc = SolveDoc {
        format_version: gio::FORMAT_VERSION,
        command: "solve",
        seed: args.seed,
        verdict,
        termination: outcome.termination.as_str(),
        iterations: outcome.iterations,
        faults: outcome.faults,
        unconverged_runs: outcome.unconverged_runs,
        certificate: outcome.best.as_ref().map(|c| CertificateDoc::new(&game, c)),
        history: outcome
            .history
            .iter()
            .map(|&q| q.is_finite().then_some(q))
            .collect(),
    };
    emit(args.out.as_deref(), stdout, &gio::to_json(&doc))?;
    Ok(if verdict { EXIT_OK } else { EXIT_NOT_FOUND })
}

#[derive(Serialize)]
struct VerifyDoc {
    format_version: i64,
    command: &'static str,
    verdict: bool,
    certificate: CertificateDoc,
}

pub fn verify_command(args: &VerifyArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let game = gio::load_game(&args.game)?;
    let x = gio::load_profile(&args.profile, &game)?;
    let cert = oracle::certify(&game, &x, args.tol_regret, args.tol_feas)?;
    let doc = VerifyDoc {
        format_version: gio::FORMAT_VERSION,
        command: "verify",
        verdict: cert.verdict,
        certificate: CertificateDoc::new(&game, &cert),
    };
    emit(args.out.as_deref(), stdout, &gio::to_json(&doc))?;
    Ok(if cert.verdict {
        EXIT_OK
    } else {
        EXIT_NOT_FOUND
    })
}

#[derive(Serialize)]
struct OracleDoc {
    format_version: i64,
    command: &'static str,
    mode: &'static str,
    verdict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<&'static str>,
    equilibria: Vec<CertificateDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    degenerate_supports: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    points_visited: Option<u128>,
}

pub fn oracle_command(args: &OracleArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let game = gio::load_game(&args.game)?;
    let certify = |x: &[f64]| -> Result<CertificateDoc, CliError> {
        let c = oracle::certify(&game, x, args.tol_regret, args.tol_feas)?;
        Ok(CertificateDoc::new(&game, &c))
    };
    let mut doc = OracleDoc {
        format_version: gio::FORMAT_VERSION,
        command: "oracle",
        mode: "",
        verdict: false,
        message: None,
        equilibria: Vec::new(),
        degenerate_supports: None,
        resolution: None,
        points_visited: None,
    };
    match args.mode {
        OracleMode::Pure => {
            doc.mode = "pure";
            for p in oracle::enumerate_pure_ne(&game)? {
                doc.equilibria.push(certify(&game.pure_profile(&p)?)?);
            }
            if doc.equilibria.is_empty() {
                doc.message = Some("no pure NE");
            }
            doc.verdict = !doc.equilibria.is_empty();
        }
        OracleMode::Support2 => {
            doc.mode = "support2";
            let found = oracle::two_player_support_enumeration(&game)?;
            for x in found.profiles() {
                doc.equilibria.push(certify(&x)?);
            }
            doc.degenerate_supports = Some(found.degenerate_supports);
            if doc.equilibria.is_empty() {
                doc.message = Some("no NE with equal-size supports");
            }
            doc.verdict = doc.equilibria.iter().any(|c| c.verdict);
        }
        OracleMode::Grid => {
            doc.mode = "grid";
            let scan = oracle::grid_regret_scan(&game, args.resolution)?;
            let best = certify(&scan.argmin)?;
            doc.verdict = best.verdict;
            if !best.verdict {
                doc.message = Some("grid minimum does not certify");
            }
            doc.equilibria.push(best);
            doc.resolution = Some(args.resolution);
            doc.points_visited = Some(scan.points_visited);
        }
    }
    emit(args.out.as_deref(), stdout, &gio::to_json(&doc))?;
    Ok(if doc.verdict { EXIT_OK } else { EXIT_NOT_FOUND })
}

#[derive(Serialize)]
struct AnaDoc {
    format_version: i64,
    command: &'static str,
    seed: u64,
    converged: bool,
    steps: u64,
    entry_time: Option<f64>,
    theta: f64,
    stationarity_residual: f64,
    start: Vec<Vec<f64>>,
    certificate: CertificateDoc,
}

pub fn ana_command(args: &AnaArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let game = gio::load_game(&args.game)?;
    let x0 = match &args.x0 {
        Some(path) => gio::load_profile(path, &game)?,
        None => {
            if args.init_low >= args.init_high || args.init_low.is_nan() || args.init_high.is_nan()
            {
                return Err(CliError::Input(format!(
                    "init range [{}, {}] is empty",
                    args.init_low, args.init_high
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            (0..game.total_strategies())
                .map(|_| rng.gen_range(args.init_low..=args.init_high))
                .collect()
        }
    };
    let mut integrator = AnaIntegrator::new(&game, args.flow.settings())?;
    let outcome = integrator.run(&x0)?;
    if let Some(path) = &args.trace {
        let mut buf = Vec::new();
        gio::write_trace_csv(&mut buf, &outcome.trace).expect("in-memory write");
        fs::write(path, buf).map_err(|e| write_err(path, e))?;
    }
    let cert = oracle::certify(
        &game,
        &outcome.critical_point,
        args.tol_regret,
        args.tol_feas,
    )?;
    let doc = AnaDoc {
        format_version: gio::FORMAT_VERSION,
        command: "ana",
        seed: args.seed,
        converged: outcome.converged,
        steps: outcome.steps,
        entry_time: outcome.trace.entry_time,
        theta: outcome.theta,
        stationarity_residual: outcome.stationarity_residual(&game)?,
        start: gio::split_blocks(&game, &x0),
        certificate: CertificateDoc::new(&game, &cert),
    };
    emit(args.out.as_deref(), stdout, &gio::to_json(&doc))?;
    Ok(if outcome.converged {
        EXIT_OK
    } else {
        EXIT_NOT_FOUND
    })
}
