mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anisolab::gauge::DualMode;
use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::{Check, Context, Outcome};
use config::{ConfigError, Overrides, RunConfig};

const AFTER_HELP: &str = "\
Configuration:
  --config takes a TOML file (sections params, gauge, grid, samples, tolerances,
  supersolution, variational, liouville, compare, inequalities). Flags override
  the file. Without a subcommand the file's `command` key is used.

Output:
  Files go to --out, else the config's output_dir, else $ANISOLAB_OUT, else
  ./anisolab-out. Every file name carries the 12-digit config hash, e.g.
  exponents-<hash>.json. Each JSON report embeds the resolved config and a
  single `timestamp` line.

Exit codes:
  0  every check passed
  1  a check failed or a solver gave up (summary on stderr)
  2  configuration error; nothing is written";

#[derive(Parser)]
#[command(name = "anisolab", version, about = "Batch runner for the anisotropic Hardy-Sobolev laboratory", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for `sweep`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Debug)]
struct Flags {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dimension N.
    #[arg(long = "n", global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Comma-separated γ grid.
    #[arg(long, global = true, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Gauge variant: euclidean, ell_q or quadratic (the matrix comes from the config).
    #[arg(long, global = true)]
    gauge: Option<String>,
    /// Exponent of the ell_q gauge.
    #[arg(long, global = true)]
    q: Option<f64>,
    /// Gauge dimension.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// analytic or numerical.
    #[arg(long, global = true, value_parser = parse_dual_mode)]
    dual_mode: Option<DualMode>,
    #[arg(long, global = true)]
    t_min: Option<f64>,
    #[arg(long, global = true)]
    t_max: Option<f64>,
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Samples per inequality.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Measure of the unit H°-ball used by the quotient.
    #[arg(long, global = true)]
    kappa: Option<f64>,
}

fn parse_dual_mode(s: &str) -> Result<DualMode, String> {
    match s {
        "analytic" => Ok(DualMode::Analytic),
        "numerical" => Ok(DualMode::Numerical),
        _ => Err(format!("expected analytic or numerical, got {s}")),
    }
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Decay exponents μ1, μ2 for each γ.
    ///
    /// CSV exponents-<hash>.csv, columns:
    ///   N, p, gamma, C_H, mu1, mu2, res1, res2
    /// (res = |characteristic| at the root).
    Exponents,
    /// Dual-norm identities, divergence identity and Wulff volume of the configured gauge.
    GaugeCheck,
    /// Residuals of the exact power solutions t^-μ1 and t^-μ2.
    Residual,
    /// Supersolution parameters (δ, ε, R) for both branches and the g-bound check.
    Supersolution,
    /// Property tests of the vector inequalities, the power split and the Hardy quotient.
    ///
    /// Writes inequalities-<hash>.json and the constants manifest
    /// constants-<hash>.json (inequality, p, gauge, constant, oracle_grid, date).
    Inequalities,
    /// Minimize the Hardy-Sobolev quotient at one γ.
    ///
    /// CSV minimize-<hash>-profile.csv, columns: t, v (minimizer normalized
    /// so that the critical norm is 1).
    Minimize,
    /// Minimize over the γ grid.
    ///
    /// CSV sweep-<hash>.csv, columns:
    ///   gamma, S, iterations, grad_norm, inner_fit, outer_fit
    /// (fits are the negated log-log slopes near 0 and ∞, empty when the
    /// run did not converge).
    Sweep,
    /// Pure-power boundary data reproduce the pure power.
    Liouville,
    /// Seeded comparison pairs and the exterior growth sequence.
    Compare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Exponents => "exponents",
            Command::GaugeCheck => "gauge-check",
            Command::Residual => "residual",
            Command::Supersolution => "supersolution",
            Command::Inequalities => "inequalities",
            Command::Minimize => "minimize",
            Command::Sweep => "sweep",
            Command::Liouville => "liouville",
            Command::Compare => "compare",
        }
    }

    const ALL: [Command; 9] = [
        Command::Exponents,
        Command::GaugeCheck,
        Command::Residual,
        Command::Supersolution,
        Command::Inequalities,
        Command::Minimize,
        Command::Sweep,
        Command::Liouville,
        Command::Compare,
    ];

    fn from_name(s: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config_hash: &'a str,
    timestamp: &'a str,
    passed: bool,
    checks: &'a [Check],
    config: &'a RunConfig,
    results: &'a serde_json::Value,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, cfg) = match load(&cli) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let out_dir = output_dir(&cli, &cfg);
    let now = Utc::now();
    let ctx = Context { jobs: cli.jobs, date: now.format("%Y-%m-%d").to_string() };
    let outcome = match command {
        Command::Exponents => commands::exponents(&cfg),
        Command::GaugeCheck => commands::gauge_check(&cfg),
        Command::Residual => commands::residual(&cfg),
        Command::Supersolution => commands::supersolution(&cfg),
        Command::Inequalities => commands::inequalities(&cfg, &ctx),
        Command::Minimize => commands::minimize(&cfg),
        Command::Sweep => commands::sweep(&cfg, &ctx),
        Command::Liouville => commands::liouville(&cfg),
        Command::Compare => commands::compare(&cfg),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: FAIL: {e}", command.name());
            return ExitCode::from(1);
        }
    };
    let timestamp = now.to_rfc3339_opts(SecondsFormat::Secs, true);
    if let Err(e) = write_outputs(&out_dir, command.name(), &cfg, &outcome, &timestamp) {
        eprintln!("cannot write outputs to {}: {e}", out_dir.display());
        return ExitCode::from(1);
    }
    summarize(command.name(), &outcome.checks)
}

fn load(cli: &Cli) -> Result<(Command, RunConfig), ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    let command = match (cli.command, &cfg.command) {
        (Some(c), _) => c,
        (None, Some(name)) => {
            Command::from_name(name).ok_or_else(|| ConfigError(format!("unknown command `{name}`")))?
        }
        (None, None) => return Err(ConfigError("no subcommand given and the config has no `command`".into())),
    };
    if cli.jobs == 0 {
        return Err(ConfigError("--jobs must be at least 1".into()));
    }
    let f = &cli.flags;
    cfg.apply(&Overrides {
        seed: f.seed,
        n: f.n,
        p: f.p,
        gamma: f.gamma,
        gammas: f.gammas.clone(),
        gauge: f.gauge.clone(),
        q: f.q,
        dimension: f.dim,
        dual_mode: f.dual_mode,
        t_min: f.t_min,
        t_max: f.t_max,
        points: f.points,
        samples: f.samples,
        kappa: f.kappa,
    });
    Ok((command, cfg.resolve(command.name())?))
}

fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os("ANISOLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("anisolab-out"))
}

fn write_outputs(dir: &Path, name: &str, cfg: &RunConfig, o: &Outcome, timestamp: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let hash = cfg.hash();
    let report = Report {
        command: name,
        config_hash: &hash,
        timestamp,
        passed: o.checks.iter().all(|c| c.passed),
        checks: &o.checks,
        config: cfg,
        results: &o.results,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(dir.join(format!("{name}-{hash}.json")), text)?;
    for (stem, value) in &o.extra_json {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(dir.join(format!("{stem}-{hash}.json")), text)?;
    }
    for (suffix, bytes) in &o.csv {
        fs::write(dir.join(format!("{name}-{hash}{suffix}.csv")), bytes)?;
    }
    Ok(())
}

fn summarize(name: &str, checks: &[Check]) -> ExitCode {
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.passed).collect();
    for c in checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        let tol = c.tolerance.map(|t| format!(" (tol {t:e})")).unwrap_or_default();
        println!("{name}: {verdict} {}: {:e}{tol}", c.name, c.value);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{name}: {} of {} checks failed:", failed.len(), checks.len());
        for c in failed {
            eprintln!("  {}: {:e}", c.name, c.value);
        }
        ExitCode::from(1)
    }
}
