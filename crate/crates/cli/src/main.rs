use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rankfeedback::dynamics::{simulate, simulate_personalized};
use rankfeedback::io::{write_limit_surface_csv, write_report_csv, write_trajectory_csv, ParamFile};
use rankfeedback::metrics::efficiency_report;
use rankfeedback::{
    fix_realization, FeedbackMode, GroupConfig, ModelParams, PersistenceSchedule, Ranking, RankingRegime,
    Recording, SimConfig,
};
use rankfeedback_cli::figures::{self, Overrides};
use rankfeedback_cli::sweep::{run_sweep, ConfigErrors, ExperimentConfig};
use rankfeedback_cli::verify::{self, Suite, VerifyOptions};

#[derive(Parser)]
#[command(name = "rankfeedback", version, about = "Popularity ranking feedback: simulations, limits and figures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Clone)]
struct Global {
    /// Random seed for stochastic runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Replication count for Monte Carlo work.
    #[arg(long, global = true)]
    reps: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Prob,
    Realized,
    Frozen,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Popularity,
    Random,
    Personalized,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory of sequential agents.
    Simulate {
        /// Parameter file (TOML, or JSON by extension).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Number of correct websites.
        #[arg(long)]
        l: usize,
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
        #[arg(long, value_enum, default_value_t = Mode::Prob)]
        mode: Mode,
        /// Use kappa_t = kappa + t instead of a constant kappa.
        #[arg(long)]
        growing: bool,
        /// Keep every n-th step.
        #[arg(long)]
        every: Option<usize>,
    },
    /// All rest points of the limit equations for every L.
    Limits {
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Interim and ex-ante efficiency.
    Metrics {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = RegimeArg::Popularity)]
        regime: RegimeArg,
    },
    /// Reproduce a figure (or `all`).
    Figure { id: String },
    /// Run a parameter sweep from a config file.
    Sweep { config: PathBuf },
    /// Run a verification suite (or `all`).
    Verify { suite: String },
}

/// Config problems exit with 2, everything else with 1.
fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<ConfigErrors>()
            || matches!(
                c.downcast_ref::<rankfeedback::Error>(),
                Some(rankfeedback::Error::Config(_) | rankfeedback::Error::InvalidParams(_))
            )
    })
}

fn load_params(path: Option<&Path>) -> Result<(ModelParams, Option<GroupConfig>)> {
    let file = match path {
        Some(p) => ParamFile::from_path(p).with_context(|| format!("reading {}", p.display()))?,
        None => ParamFile::default(),
    };
    Ok(file.resolve()?)
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<bool> {
    let g = cli.global;
    if let Some(jobs) = g.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("starting worker pool")?;
    }
    let out = g.out.as_deref();
    match cli.command {
        Command::Simulate { params, l, horizon, mode, growing, every } => {
            let (params, group) = load_params(params.as_deref())?;
            let real = fix_realization(true, l, params.m)?;
            let schedule = if growing {
                PersistenceSchedule::Growing { kappa0: params.kappa as f64, c: 1.0 }
            } else {
                PersistenceSchedule::Constant(params.kappa as f64)
            };
            let mode = match mode {
                Mode::Prob => FeedbackMode::ProbFeedback,
                Mode::Realized => FeedbackMode::RealizedClick,
                Mode::Frozen => FeedbackMode::Frozen,
            };
            let recording = every.map(Recording::Every).unwrap_or(Recording::All);
            let cfg = SimConfig::new(horizon, schedule).with_mode(mode).with_recording(recording);
            let r1 = Ranking::uniform(params.m);
            let seed = g.seed.unwrap_or(0);
            let records = match group {
                Some(group) => {
                    let (a, b) = simulate_personalized(&params, &group, &real, &r1, &r1, &cfg, seed)?;
                    vec![a, b]
                }
                None => vec![simulate(&params, &real, &r1, &cfg, seed)?],
            };
            let mut w = sink(out)?;
            match g.format {
                Format::Csv => write_trajectory_csv(&records.iter().collect::<Vec<_>>(), &mut w)?,
                Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(&records)?)?,
            }
        }
        Command::Limits { params } => {
            let (params, _) = load_params(params.as_deref())?;
            if g.format == Format::Json {
                bail!(rankfeedback::Error::Config("limits writes CSV only".into()));
            }
            write_limit_surface_csv(&params, sink(out)?)?;
        }
        Command::Metrics { params, regime } => {
            let (params, group) = load_params(params.as_deref())?;
            let regime = match regime {
                RegimeArg::Popularity => RankingRegime::Popularity,
                RegimeArg::Random => RankingRegime::Random,
                RegimeArg::Personalized => match group {
                    Some(g) => RankingRegime::personalized(g),
                    None => bail!(rankfeedback::Error::Config("personalized regime needs gamma_a and gamma_b".into())),
                },
            };
            let report = efficiency_report(&params, &regime)?;
            let mut w = sink(out)?;
            match g.format {
                Format::Csv => write_report_csv(&report, &mut w)?,
                Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(&report)?)?,
            }
        }
        Command::Figure { id } => {
            let ids = if id == "all" { figures::figure_ids() } else { vec![id] };
            let dir = out.unwrap_or(Path::new("figures"));
            let ov = Overrides { seed: g.seed, reps: g.reps };
            for id in ids {
                let spec = figures::spec(&id).map_err(|e| rankfeedback::Error::Config(e.to_string()))?;
                let fig = figures::write_figure(&id, dir, ov)?;
                println!("{id}: {}", spec.title);
                println!("{}", fig.params_json);
                for p in &fig.paths {
                    println!("wrote {}", p.display());
                }
            }
        }
        Command::Sweep { config } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(seed) = g.seed {
                cfg.seed = seed;
            }
            if let Some(reps) = g.reps {
                cfg.reps = reps;
            }
            let table = run_sweep(&cfg)?;
            let target = out.map(Path::to_path_buf).or(cfg.out.clone());
            let mut w = sink(target.as_deref())?;
            match g.format {
                Format::Csv => table.write_csv(&mut w)?,
                Format::Json => writeln!(w, "{}", table.to_json_string())?,
            }
        }
        Command::Verify { suite } => {
            let suites = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![suite.parse::<Suite>().map_err(rankfeedback::Error::Config)?]
            };
            let opts = VerifyOptions { reps: g.reps, seed: g.seed, ..VerifyOptions::default() };
            let text = g.format == Format::Csv;
            let mut checks = Vec::new();
            for s in suites {
                if text {
                    println!("== {}", s.name());
                }
                for c in verify::run_suite(s, &opts) {
                    if text {
                        println!("{c}");
                    }
                    checks.push(c);
                }
            }
            let failed = checks.iter().filter(|c| c.failed()).count();
            if text {
                println!("{} checks, {failed} failed", checks.len());
            } else {
                writeln!(sink(out)?, "{}", serde_json::to_string_pretty(&checks)?)?;
            }
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
