//! Command-line front end of `hetindex`: configs in, JSON reports and CSV
//! traces out.

pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::commands::{Outcome, Trace};
use crate::config::Config;
use crate::error::CliError;

/// Bundled demos: name, command, config.
pub const DEMOS: &[(&str, Command0, &str)] = &[
    ("poschl-teller", Command0::VerifyTheorem, include_str!("../demos/poschl-teller.json")),
    ("negative-control", Command0::VerifyTheorem, include_str!("../demos/negative-control.json")),
    ("constant-hyperbolic", Command0::VerifyTheorem, include_str!("../demos/constant-hyperbolic.json")),
    ("cubic-schrodinger", Command0::Bifurcate, include_str!("../demos/cubic-schrodinger.json")),
    ("cubic-truncated", Command0::Bifurcate, include_str!("../demos/cubic-truncated.json")),
    ("rotating-line", Command0::Index, include_str!("../demos/rotating-line.json")),
    ("mobius", Command0::Index, include_str!("../demos/mobius.json")),
    ("maslov-shear", Command0::Maslov, include_str!("../demos/maslov-shear.json")),
];

/// Config-driven commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command0 {
    Index,
    GeometricParity,
    VerifyTheorem,
    Bifurcate,
    Maslov,
}

impl Command0 {
    pub fn name(self) -> &'static str {
        match self {
            Command0::Index => "index",
            Command0::GeometricParity => "geometric-parity",
            Command0::VerifyTheorem => "verify-theorem",
            Command0::Bifurcate => "bifurcate",
            Command0::Maslov => "maslov",
        }
    }

    pub fn run(self, config: &Config) -> Result<Outcome, CliError> {
        match self {
            Command0::Index => commands::index(config),
            Command0::GeometricParity => commands::geometric(config),
            Command0::VerifyTheorem => commands::verify_theorem(config),
            Command0::Bifurcate => commands::bifurcate(config),
            Command0::Maslov => commands::maslov(config),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hetindex",
    version,
    about = "Z2-index, geometric parity and Fredholm parity of heteroclinic orbits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
    /// Output directory for the report and traces.
    #[arg(long, global = true, default_value = "hetindex-out")]
    pub out: PathBuf,
    /// Seed of the randomized suites.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads of parallel sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Z2-index of a pair of subspace (or Lagrangian) paths.
    Index {
        #[arg(long)]
        config: PathBuf,
    },
    /// Geometric parity of the heteroclinic orbit of a linear family.
    GeometricParity {
        #[arg(long)]
        config: PathBuf,
    },
    /// Both sides of the index theorem: parity(A_lambda) = iota(E^s(0), E^u(0)).
    VerifyTheorem {
        #[arg(long)]
        config: PathBuf,
    },
    /// Bifurcation verdict for a nonlinear family along a branch.
    Bifurcate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Maslov index of a Lagrangian pair and its mod-2 comparison.
    Maslov {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a bundled demo (omit the name to list them).
    Demo { name: Option<String> },
    /// Run the property suites.
    Selftest,
    /// Print the JSON schema of the config format.
    Schema,
}

/// Result of a run: exit code plus what was printed.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub code: i32,
    pub stdout: Vec<String>,
    pub stderr: Vec<String>,
}

fn demo_list() -> String {
    DEMOS
        .iter()
        .map(|(name, cmd, _)| format!("  {name} ({})", cmd.name()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn write_csv(path: &Path, trace: &Trace) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::internal(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&trace.header).map_err(io)?;
    for row in &trace.rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

fn trace_path(out: &Path, file: &str, suffix: &str) -> PathBuf {
    let p = Path::new(file);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = p.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.join(format!("{stem}{suffix}.{ext}"))
}

struct Job<'a> {
    command: &'static str,
    config: Option<&'a Config>,
    seed: Option<u64>,
}

fn write_outputs(out: &Path, job: &Job<'_>, body: Value, traces: &[Trace]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", out.display())))?;
    let output = job.config.map(|c| c.output.clone()).unwrap_or_default();
    let mut report = json!({
        "command": job.command,
        "version": env!("CARGO_PKG_VERSION"),
    });
    if let Some(c) = job.config {
        report["config"] = serde_json::to_value(c.resolved())
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    if let Some(s) = job.seed {
        report["seed"] = json!(s);
    }
    for (k, v) in body.as_object().into_iter().flatten() {
        report[k] = v.clone();
    }
    let path = out.join(&output.report);
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::internal(e.to_string()))?;
    std::fs::write(&path, text + "\n")
        .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))?;
    let mut written = vec![path];
    for t in traces {
        let p = trace_path(out, &output.trace, &t.suffix);
        write_csv(&p, t)?;
        written.push(p);
    }
    Ok(written)
}

fn execute(job: Job<'_>, out: &Path, run: impl FnOnce() -> Result<Outcome, CliError>) -> RunResult {
    let mut res = RunResult {
        code: 0,
        stdout: Vec::new(),
        stderr: Vec::new(),
    };
    let outcome = run();
    let (body, traces, code) = match &outcome {
        Ok(o) => {
            res.stdout.extend(o.summary.iter().cloned());
            let code = if o.success { 0 } else { 1 };
            if !o.success {
                res.stderr.push(format!("error: {} check failed", job.command));
            }
            (
                json!({ "status": if o.success { "ok" } else { "failed" }, "result": o.result }),
                o.traces.clone(),
                code,
            )
        }
        Err(e) => {
            res.stderr.push(format!("error: {e}"));
            (
                json!({ "status": "error", "exit_code": e.exit_code(), "error": e.message }),
                Vec::new(),
                e.exit_code(),
            )
        }
    };
    res.code = code;
    match write_outputs(out, &job, body, &traces) {
        Ok(paths) => {
            for p in paths {
                res.stdout.push(format!("wrote {}", p.display()));
            }
        }
        Err(e) => {
            res.stderr.push(format!("error: {e}"));
            if res.code == 0 {
                res.code = e.exit_code();
            }
        }
    }
    res
}

fn run_config_command(cmd: Command0, path: &Path, out: &Path) -> RunResult {
    match Config::load(path) {
        Ok(config) => execute(
            Job {
                command: cmd.name(),
                config: Some(&config),
                seed: None,
            },
            out,
            || cmd.run(&config),
        ),
        Err(e) => RunResult {
            code: e.exit_code(),
            stdout: Vec::new(),
            stderr: vec![format!("error: {e}")],
        },
    }
}

/// Runs a parsed command line (without touching the process: no exit, no
/// printing), so that it can be tested in-process.
pub fn run(cli: &Cli) -> RunResult {
    if cli.threads > 0 {
        // Fails only if the global pool already exists (e.g. repeated runs in
        // one test process); the existing pool is then kept.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let out = cli.out.as_path();
    match &cli.command {
        Commands::Index { config } => run_config_command(Command0::Index, config, out),
        Commands::GeometricParity { config } => {
            run_config_command(Command0::GeometricParity, config, out)
        }
        Commands::VerifyTheorem { config } => run_config_command(Command0::VerifyTheorem, config, out),
        Commands::Bifurcate { config } => run_config_command(Command0::Bifurcate, config, out),
        Commands::Maslov { config } => run_config_command(Command0::Maslov, config, out),
        Commands::Demo { name } => {
            let Some(name) = name else {
                return RunResult {
                    code: 0,
                    stdout: vec![format!("available demos:\n{}", demo_list())],
                    stderr: Vec::new(),
                };
            };
            let Some((_, cmd, text)) = DEMOS.iter().find(|(n, _, _)| n == name) else {
                return RunResult {
                    code: 2,
                    stdout: Vec::new(),
                    stderr: vec![format!("error: unknown demo '{name}'; available demos:\n{}", demo_list())],
                };
            };
            let config = match Config::from_json(text) {
                Ok(c) => c,
                Err(e) => {
                    return RunResult {
                        code: 1,
                        stdout: Vec::new(),
                        stderr: vec![format!("error: bundled demo '{name}' is invalid: {e}")],
                    }
                }
            };
            execute(
                Job {
                    command: cmd.name(),
                    config: Some(&config),
                    seed: None,
                },
                out,
                || cmd.run(&config),
            )
        }
        Commands::Selftest => execute(
            Job {
                command: "selftest",
                config: None,
                seed: Some(cli.seed),
            },
            out,
            || commands::selftest(cli.seed),
        ),
        Commands::Schema => RunResult {
            code: 0,
            stdout: vec![config::schema_json().trim_end().to_string()],
            stderr: Vec::new(),
        },
    }
}
