//! Command-line surface: `solve`, `sweep`, `refine`, `slice`, `audit`.
//!
//! Exit codes: 0 success, 1 solver failure, 2 configuration or I/O error.
//! Flags override values loaded from `--config`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config_document, Mode, PotentialKind, RunConfig};
use crate::effective::{compute_sample, EffectiveSample};
use crate::error::{ConfigError, SweepError};
use crate::grid::TorusGrid;
use crate::report;
use crate::sweep::{
    asymptotic_slice, property_audit, refinement_study, run_sweep, SweepOrdering, SweepReport,
};
use crate::system::CellProblem;

#[derive(Parser, Debug)]
#[command(
    name = "mfgcell",
    about = "Ergodic mean field games cell problems on the 1-D torus",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one cell problem and print the effective sample
    Solve(RunArgs),
    /// Sweep the (P, alpha) grid and write a samples table
    Sweep(RunArgs),
    /// Grid-refinement study of a structure quantity at one point
    Refine(RunArgs),
    /// Asymptotic slice in P at fixed alpha
    Slice(RunArgs),
    /// Re-read a samples table and print audit verdicts
    Audit(RunArgs),
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Solve(_) => Mode::Solve,
            Command::Sweep(_) => Mode::Sweep,
            Command::Refine(_) => Mode::Refine,
            Command::Slice(_) => Mode::Slice,
            Command::Audit(_) => Mode::Audit,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Solve(a)
            | Command::Sweep(a)
            | Command::Refine(a)
            | Command::Slice(a)
            | Command::Audit(a) => a,
        }
    }
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Configuration file (flat dotted-key = value text, '#' comments)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path; for `audit`, the samples table to read
    #[arg(long)]
    out: Option<PathBuf>,
    /// Momentum parameter P
    #[arg(long = "P", allow_hyphen_values = true)]
    p: Option<f64>,
    /// Density scale alpha
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Grid nodes
    #[arg(long = "N")]
    n: Option<usize>,
    /// Power-coupling exponent
    #[arg(long)]
    q: Option<f64>,
    /// Amplitude of the periodic potential
    #[arg(long = "A")]
    amplitude: Option<f64>,
    /// Coupling kind: power | log
    #[arg(long)]
    kind: Option<String>,
    /// Finite-difference step
    #[arg(long)]
    delta: Option<f64>,
    /// Refinement grid sizes, comma separated
    #[arg(long = "N-list", value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Sweep ordering: warm | cold
    #[arg(long)]
    ordering: Option<String>,
    /// Sweep thread cap (0 = all cores)
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn apply(&self, config: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(kind) = &self.kind {
            config.kind = match kind.as_str() {
                "power" => PotentialKind::Power,
                "log" => PotentialKind::Log,
                other => {
                    return Err(ConfigError::BadValue {
                        key: "--kind".into(),
                        message: format!("`{other}` is not one of power|log"),
                    })
                }
            };
        }
        if let Some(ordering) = &self.ordering {
            config.ordering = match ordering.as_str() {
                "warm" => SweepOrdering::RowMajorWarm,
                "cold" => SweepOrdering::IndependentCold,
                other => {
                    return Err(ConfigError::BadValue {
                        key: "--ordering".into(),
                        message: format!("`{other}` is not one of warm|cold"),
                    })
                }
            };
        }
        if let Some(p) = self.p {
            config.point_p = p;
        }
        if let Some(alpha) = self.alpha {
            config.point_alpha = alpha;
            config.slice_alpha = alpha;
        }
        if let Some(n) = self.n {
            config.grid_n = n;
        }
        if let Some(q) = self.q {
            config.q = q;
        }
        if let Some(a) = self.amplitude {
            config.amplitude = a;
        }
        if let Some(delta) = self.delta {
            config.delta = delta;
        }
        if let Some(n_list) = &self.n_list {
            config.n_list = n_list.clone();
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
        if let Some(out) = &self.out {
            config.out_path = Some(out.clone());
        }
        Ok(())
    }
}

/// Entry point used by the binary; parses `args` and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            // --help/--version are successful exits
            return if e.exit_code() == 0 { 0 } else { 2 };
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

enum CliError {
    Config(ConfigError),
    Solver(crate::error::SolverError),
    Sweep(SweepError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 1,
            CliError::Sweep(SweepError::Invalid(_)) => 2,
            CliError::Sweep(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Solver(e) => write!(f, "{e}"),
            CliError::Sweep(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<crate::error::SolverError> for CliError {
    fn from(e: crate::error::SolverError) -> Self {
        CliError::Solver(e)
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Solver(s) => CliError::Solver(s),
            other => CliError::Sweep(other),
        }
    }
}

fn load_config(command: &Command) -> Result<RunConfig, ConfigError> {
    let args = command.args();
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            parse_config_document(&text)?
        }
        None => RunConfig::default(),
    };
    config.mode = command.mode();
    args.apply(&mut config)?;
    config.validate()?;
    Ok(config)
}

fn point_problem(config: &RunConfig) -> Result<CellProblem, CliError> {
    let grid = TorusGrid::new(config.grid_n)
        .map_err(|e| CliError::Config(ConfigError::Constraint(e.to_string())))?;
    CellProblem::new(
        grid,
        config.potential(),
        config.point_p,
        config.point_alpha,
        config.options.clone(),
    )
    .map_err(|e| CliError::Config(ConfigError::Constraint(e.to_string())))
}

fn print_sample(out: &mut dyn Write, sample: &EffectiveSample) {
    let _ = writeln!(out, "P = {}", sample.p);
    let _ = writeln!(out, "alpha = {}", sample.alpha);
    let _ = writeln!(out, "Hbar = {}", sample.hbar);
    let _ = writeln!(out, "bbar = {}", sample.bbar);
    let _ = writeln!(out, "dH_dP = {}", sample.dh_dp);
    let _ = writeln!(out, "R = {}", sample.r);
    let _ = writeln!(out, "E = {}", sample.e);
    let _ = writeln!(out, "relation_error = {}", sample.relation_error);
    let _ = writeln!(out, "converged = {}", sample.diagnostics.converged);
    let _ = writeln!(out, "iterations = {}", sample.diagnostics.iterations);
    let _ = writeln!(
        out,
        "residual_norm = {}",
        sample.diagnostics.final_residual_norm
    );
}

fn with_thread_cap<R>(threads: usize, f: impl FnOnce() -> R + Send) -> R
where
    R: Send,
{
    if threads == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(f)
    }
}

fn write_table(path: &Path, text: &str) -> Result<(), ConfigError> {
    std::fs::write(path, text).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let config = load_config(&cli.command)?;
    match config.mode {
        Mode::Solve => {
            let prob = point_problem(&config)?;
            let (sample, _) = compute_sample(&prob, None)?;
            print_sample(out, &sample);
            Ok(if sample.diagnostics.converged { 0 } else { 1 })
        }
        Mode::Sweep => {
            let spec = config.sweep_spec();
            let result = with_thread_cap(config.threads, || run_sweep(&spec));
            let (mut report, degraded) = match result {
                Ok(report) => (report, false),
                Err(SweepError::TooManyFailures { report, .. }) => (*report, true),
                Err(e) => return Err(e.into()),
            };
            report.audits = property_audit(&report, &spec.potential);
            let path = config
                .out_path
                .clone()
                .unwrap_or_else(|| PathBuf::from("samples.csv"));
            report::write_samples(&report, &path)?;
            let _ = writeln!(
                out,
                "sweep: {} points, {} failed, samples written to {}",
                report.samples.len(),
                report.failed_count(),
                path.display()
            );
            for audit in &report.audits {
                let _ = writeln!(
                    out,
                    "audit {}: {} (worst excess {:e} at {})",
                    audit.name,
                    if audit.passed { "PASS" } else { "FAIL" },
                    audit.worst_violation,
                    audit.location
                );
            }
            Ok(if degraded { 1 } else { 0 })
        }
        Mode::Refine => {
            let fit = refinement_study(
                (config.point_p, config.point_alpha),
                &config.potential(),
                &config.n_list,
                config.refine_quantity(),
                &config.options,
            )?;
            let _ = write!(out, "{}", report::refinement_to_string(&fit));
            match fit.fitted_order {
                Some(order) => {
                    let _ = writeln!(out, "fitted_order = {order:.4}");
                }
                None => {
                    let _ = writeln!(out, "fitted_order = -");
                }
            }
            if let Some(change) = fit.last_rel_change {
                let _ = writeln!(out, "last_rel_change = {change:.4e}");
            }
            if let Some(path) = &config.out_path {
                write_table(path, &report::refinement_to_string(&fit))?;
            }
            Ok(0)
        }
        Mode::Slice => {
            let rows = with_thread_cap(config.threads, || {
                asymptotic_slice(
                    config.slice_alpha,
                    &config.slice_p_list,
                    &config.potential(),
                    config.grid_n,
                    &config.options,
                )
            })?;
            let text = report::slice_to_string(&rows);
            let _ = write!(out, "{text}");
            if let Some(path) = &config.out_path {
                write_table(path, &text)?;
            }
            let failed = rows.iter().filter(|r| r.hbar_over_p2.is_nan()).count();
            Ok(if failed > 0 { 1 } else { 0 })
        }
        Mode::Audit => {
            let path = config.out_path.clone().ok_or_else(|| {
                CliError::Config(ConfigError::Constraint(
                    "audit requires --out pointing at a samples table".into(),
                ))
            })?;
            let samples = report::read_samples(&path)?;
            let report = reconstruct_report(samples, config.grid_n)?;
            let audits = property_audit(&report, &config.potential());
            let mut failures = 0;
            for audit in &audits {
                if !audit.passed {
                    failures += 1;
                }
                let _ = writeln!(
                    out,
                    "audit {}: {} (worst excess {:e} at {})",
                    audit.name,
                    if audit.passed { "PASS" } else { "FAIL" },
                    audit.worst_violation,
                    audit.location
                );
            }
            let _ = writeln!(out, "verdicts: {} checked, {} failed", audits.len(), failures);
            Ok(0)
        }
    }
}

/// Rebuild a report shell from a samples table so it can be audited.
fn reconstruct_report(
    samples: Vec<EffectiveSample>,
    grid_n: usize,
) -> Result<SweepReport, CliError> {
    let mut p_values: Vec<f64> = Vec::new();
    let mut alpha_values: Vec<f64> = Vec::new();
    for s in &samples {
        if !p_values.contains(&s.p) {
            p_values.push(s.p);
        }
        if !alpha_values.contains(&s.alpha) {
            alpha_values.push(s.alpha);
        }
    }
    if samples.len() != p_values.len() * alpha_values.len() {
        return Err(CliError::Config(ConfigError::BadSamples(format!(
            "table is not a complete grid: {} rows vs {} P x {} alpha",
            samples.len(),
            p_values.len(),
            alpha_values.len()
        ))));
    }
    Ok(SweepReport {
        grid_n,
        p_values,
        alpha_values,
        samples,
        audits: Vec::new(),
        refinement_fits: Vec::new(),
    })
}
