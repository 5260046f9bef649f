//! `catmap`: experiment runner for quantized cat maps.

mod config;
mod error;
mod experiments;
mod output;
mod report;

use clap::{Args, Parser, Subcommand};
use config::{parse_floats, BasisName, Experiment, ExperimentConfig, SideName, TieBreakName};
use error::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "catmap", version, about = "Numerical experiments on quantized hyperbolic toral automorphisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every experiment.
#[derive(Args)]
struct Common {
    /// TOML or JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for results.csv, summary.json and config.json.
    #[arg(long, default_value = "catmap-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// DE, a,b,c,d or {"matrix": [[a,b],[c,d]]}.
    #[arg(long)]
    map: Option<String>,
    /// N values: start:end:step, a comma list, or one value.
    #[arg(long)]
    n: Option<String>,
    /// Position window a1,a2.
    #[arg(long)]
    window: Option<String>,
    /// Worker threads (default: CATMAP_THREADS, then all logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenphases and window masses of M_N.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        tie_break: Option<TieBreakName>,
    },
    /// Minimum eigenvector window mass over an N sweep.
    Deloc {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        basis: Option<BasisName>,
        #[arg(long)]
        rotations: Option<usize>,
        /// C₁-proxy bump cx,cy,r0,r1, or "none".
        #[arg(long)]
        probe: Option<String>,
    },
    /// Fourier–Wigner table (and optional Husimi PGM) of one state.
    Wigner {
        #[command(flatten)]
        common: Common,
        /// eigen:J, position:J or uniform.
        #[arg(long)]
        state: Option<String>,
        #[arg(long)]
        l_max: Option<i64>,
        /// Husimi grid resolution.
        #[arg(long)]
        husimi: Option<usize>,
        #[arg(long, value_enum)]
        tie_break: Option<TieBreakName>,
    },
    /// Exact Egorov defects for all modes up to a cutoff.
    Egorov {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode_max: Option<i64>,
        #[arg(long)]
        max_power: Option<u32>,
    },
    /// Word-operator norms and the decay fit of the all-2 word.
    Words {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        random_x: Option<usize>,
    },
    /// Discrete fractal uncertainty norms for a Cantor family.
    Fup {
        #[command(flatten)]
        common: Common,
        /// cantor:BASE:DIGITS or cantor:BASE:DIGITS:LEVEL.
        #[arg(long)]
        family: Option<String>,
        /// Level range a:b.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        smooth: Option<f64>,
    },
    /// Porosity of an interval union, a Cantor iterate or a propagated support.
    Porosity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        set_file: Option<String>,
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        word: Option<String>,
        #[arg(long, value_enum)]
        side: Option<SideName>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        tau0: Option<f64>,
        #[arg(long)]
        tau1: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Quantum variance of a symbol over an N sweep.
    Qe {
        #[command(flatten)]
        common: Common,
        /// cos-y, cos-eta, or a symbol JSON file.
        #[arg(long)]
        symbol: Option<String>,
    },
    /// Merge run directories into report.md and report.json.
    Report {
        results: PathBuf,
        /// Where to write the report (default: the results directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn base_config(c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.seed, c.seed);
    set(&mut cfg.map, c.map.clone());
    if c.n.is_some() {
        cfg.n = c.n.clone();
    }
    if let Some(w) = &c.window {
        cfg.window = parse_floats::<2>(w, "window")?;
    }
    Ok(cfg)
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let env = std::env::var("CATMAP_THREADS").ok();
    let n = match (flag, env) {
        (Some(n), _) => Some(n),
        (None, Some(s)) => Some(s.trim().parse::<usize>().map_err(|_| error::config_err(format!("CATMAP_THREADS = '{s}' is not a number")))?),
        (None, None) => None,
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| error::config_err(e.to_string()))?;
    }
    Ok(())
}

fn run_experiment(common: &Common, experiment: Experiment, cfg: ExperimentConfig) -> Result<(), CliError> {
    init_threads(common.threads)?;
    let cfg = cfg.resolve(experiment)?;
    let res = experiments::run(&cfg)?;
    output::write_run(&common.out, &cfg, &res)?;
    println!("{}", res.headline);
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Spectrum { common, tie_break } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.tie_break, tie_break);
            run_experiment(&common, Experiment::Spectrum, cfg)
        }
        Command::Deloc { common, basis, rotations, probe } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.basis, basis);
            set(&mut cfg.rotations, rotations);
            if let Some(p) = probe {
                cfg.probe = if p == "none" { None } else { Some(parse_floats::<4>(&p, "probe")?) };
            }
            run_experiment(&common, Experiment::Deloc, cfg)
        }
        Command::Wigner { common, state, l_max, husimi, tie_break } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.state, state);
            set(&mut cfg.l_max, l_max);
            set(&mut cfg.tie_break, tie_break);
            if husimi.is_some() {
                cfg.husimi = husimi;
            }
            run_experiment(&common, Experiment::Wigner, cfg)
        }
        Command::Egorov { common, mode_max, max_power } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.mode_max, mode_max);
            set(&mut cfg.max_power, max_power);
            run_experiment(&common, Experiment::Egorov, cfg)
        }
        Command::Words { common, t, rho, delta, random_x } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.t, t);
            set(&mut cfg.rho, rho);
            set(&mut cfg.delta, delta);
            set(&mut cfg.random_x, random_x);
            run_experiment(&common, Experiment::Words, cfg)
        }
        Command::Fup { common, family, levels, smooth } => {
            let mut cfg = base_config(&common)?;
            if family.is_some() {
                cfg.family = family;
            }
            set(&mut cfg.levels, levels);
            if smooth.is_some() {
                cfg.smooth = smooth;
            }
            run_experiment(&common, Experiment::Fup, cfg)
        }
        Command::Porosity { common, set_file, family, word, side, nu, tau0, tau1, kappa, resolution, threshold } => {
            let mut cfg = base_config(&common)?;
            // a source given on the command line replaces the file's source
            if set_file.is_some() || family.is_some() || word.is_some() {
                cfg.set_file = set_file;
                cfg.family = family;
                cfg.word = word;
            }
            set(&mut cfg.side, side);
            set(&mut cfg.nu, nu);
            set(&mut cfg.tau0, tau0);
            set(&mut cfg.tau1, tau1);
            set(&mut cfg.kappa, kappa);
            set(&mut cfg.resolution, resolution);
            set(&mut cfg.threshold, threshold);
            run_experiment(&common, Experiment::Porosity, cfg)
        }
        Command::Qe { common, symbol } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.symbol, symbol);
            run_experiment(&common, Experiment::Qe, cfg)
        }
        Command::Report { results, out } => {
            let out = out.unwrap_or_else(|| results.clone());
            let json = report::report(&results, &out)?;
            println!("report: {} runs merged into {}", json["runs"].as_array().map_or(0, |a| a.len()), out.display());
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
