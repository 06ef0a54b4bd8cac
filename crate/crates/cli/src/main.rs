use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tbqkd_cli::config::{load_config, Engine, ExperimentConfig, Format};
use tbqkd_cli::experiment::{optimize_mu, run_experiment, sweep, MuGrid};
use tbqkd_cli::peer::{run_peer, session_row, Endpoint};
use tbqkd_cli::report::{append_rows, render, ReportRow};
use tbqkd_cli::{selftest, CliError};
use tbqkd_net::Role;

#[derive(Parser)]
#[command(name = "tbqkd", version, about = "Three-state time-bin QKD simulator with one-decoy finite-key analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit one report row.
    Run(RunArgs),
    /// Run the cross product of the listed values.
    Sweep(SweepArgs),
    /// Grid-search the signal intensity for the highest analytic key rate.
    Optimize(OptimizeArgs),
    /// Run Alice's side of a session over TCP.
    Alice(PeerArgs),
    /// Run Bob's side of a session over TCP.
    Bob(PeerArgs),
    /// Run built-in sanity checks.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset, used when no configuration file is given.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    engine: Option<Engine>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    rounds: Option<u64>,
    /// Report file; rows are appended.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Presets to sweep; overrides --preset.
    #[arg(long, value_delimiter = ',')]
    presets: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    rounds: Vec<u64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Fiber lengths; the attenuation per km is kept.
    #[arg(long, value_delimiter = ',')]
    length_km: Vec<f64>,
    /// Signal intensities, with the decoy at half the signal.
    #[arg(long, value_delimiter = ',')]
    mu1: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long, default_value_t = 0.05)]
    mu1_min: f64,
    #[arg(long, default_value_t = 1.0)]
    mu1_max: f64,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Decoy-to-signal ratios.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    ratio: Vec<f64>,
}

#[derive(Args)]
struct PeerArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long, conflicts_with = "connect", required_unless_present = "connect")]
    listen: Option<SocketAddr>,
    #[arg(long)]
    connect: Option<SocketAddr>,
    /// Key file, written only when the session completes.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(c: &Common, rounds: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => ExperimentConfig::from_preset(name)?,
        (None, None) => return Err(CliError::Validation("give --config or --preset".into())),
    };
    if let Some(p) = &c.preset {
        if c.config.is_some() && *p != cfg.name {
            return Err(CliError::Validation(format!("--preset {p} conflicts with the configuration file")));
        }
    }
    if let Some(r) = rounds {
        cfg.n_rounds = r;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(e) = c.engine {
        cfg.engine = e;
    }
    if let Some(f) = c.format {
        cfg.format = f;
    }
    cfg.validate()
}

fn emit(rows: &[ReportRow], format: Format, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => append_rows(path, rows, format),
        None => {
            let bytes = render(rows, format, true)?;
            std::io::stdout().write_all(&bytes).map_err(|e| CliError::Io { path: "<stdout>".into(), source: e })
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => {
            let cfg = resolve(&a.common, a.rounds)?;
            let row = run_experiment(&cfg)?;
            emit(&[row], cfg.format, a.out.as_ref().or(cfg.out.as_ref()))
        }
        Command::Sweep(a) => {
            let mut bases = Vec::new();
            if a.presets.is_empty() {
                bases.push(resolve(&a.common, None)?);
            }
            for p in &a.presets {
                let common = Common { preset: Some(p.clone()), config: None, ..a.common };
                bases.push(resolve(&common, None)?);
            }
            let mut cfgs = Vec::new();
            for base in &bases {
                let rounds = if a.rounds.is_empty() { vec![base.n_rounds] } else { a.rounds.clone() };
                let lengths = if a.length_km.is_empty() { vec![base.models.channel.length_km] } else { a.length_km.clone() };
                let mus = if a.mu1.is_empty() { vec![base.params.mu1] } else { a.mu1.clone() };
                for &n in &rounds {
                    for &len in &lengths {
                        for &mu1 in &mus {
                            for s in 0..a.seeds {
                                let mut c = base.clone();
                                c.n_rounds = n;
                                c.models.channel.length_km = len;
                                if !a.mu1.is_empty() {
                                    c.params.mu1 = mu1;
                                    c.params.mu2 = mu1 / 2.0;
                                }
                                c.seed = base.seed + s;
                                cfgs.push(c.validate()?);
                            }
                        }
                    }
                }
            }
            let rows = sweep(&cfgs)?;
            emit(&rows, bases[0].format, a.out.as_ref())
        }
        Command::Optimize(a) => {
            let cfg = resolve(&a.common, a.rounds)?;
            let grid = MuGrid { ratios: a.ratio.clone(), ..MuGrid::linear(a.mu1_min, a.mu1_max, a.steps) };
            let best = optimize_mu(&cfg, &grid)?;
            println!("mu1,mu2,SKR_bps,key_bits");
            println!("{:.8e},{:.8e},{:.8e},{}", best.mu1, best.mu2, best.skr_bps, best.key_bits);
            Ok(())
        }
        Command::Alice(a) => peer(Role::Alice, a),
        Command::Bob(a) => peer(Role::Bob, a),
        Command::Selftest => {
            let checks = selftest::run();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(CliError::Report("self test failed".into()))
            }
        }
    }
}

fn peer(role: Role, a: PeerArgs) -> Result<(), CliError> {
    let cfg = resolve(&a.common, a.rounds)?;
    let endpoint = match (a.listen, a.connect) {
        (Some(l), _) => Endpoint::Listen(l),
        (None, Some(c)) => Endpoint::Connect(c),
        (None, None) => return Err(CliError::Validation("give --listen or --connect".into())),
    };
    let rec = run_peer(role, &cfg, endpoint, a.out.clone())?;
    emit(&[session_row(&cfg, &rec)], cfg.format, None)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tbqkd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
