use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mca_pricing::{
    classify_2x2_region, classify_regime, compare_schemes_with, competitive_scheme, emit_results, find_qce,
    multi_operator_pce, quantity_outcome, run_experiment, sample_scenario, single_operator_pce, solve_ft, solve_ntp,
    solve_ropm, solve_swm, solve_upm, write_comparison_csv, CompareOptions, ExperimentConfig, HybridPriceMatrix64,
    MarketRegime, OutputFormat, ProbeOptions, QceOptions, Scenario64, ScenarioConfig, Scheme,
};

#[derive(Parser)]
#[command(name = "mca", version, about = "Traffic and pricing equilibria for tethering markets")]
struct Cli {
    /// Proceed when a revenue curve is not concave, flagging the result as a
    /// possibly local optimum.
    #[arg(long, global = true)]
    allow_nonconvex: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Users' traffic at given hybrid prices.
    SolveUpm {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Hybrid price JSON: {"h": [[...]]} or {"access": [...], "tethering": [[...]]}.
        #[arg(long)]
        prices: PathBuf,
    },
    /// Cooperative pricing.
    Coop(ScenarioArg),
    /// Welfare-maximizing traffic.
    Swm(ScenarioArg),
    /// Free tethering.
    Ft(ScenarioArg),
    /// No tethering.
    Ntp(ScenarioArg),
    /// Price competition: regime, clearing prices and deviation probe.
    CompetePrice(ScenarioArg),
    /// Price competition regions of a two-user, two-operator market over a
    /// grid of capacities, as CSV.
    #[command(name = "regions-2x2")]
    Regions2x2(RegionArgs),
    /// Quantity competition equilibrium.
    CompeteQuantity {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Include the total output at every iteration.
        #[arg(long)]
        trace: bool,
        /// Starting total output.
        #[arg(long)]
        b0: Option<f64>,
    },
    /// Competitive outcome: price equilibrium when one operator leads alone,
    /// quantity equilibrium otherwise.
    Compete(ScenarioArg),
    /// All schemes side by side, as CSV.
    Compare(ScenarioArg),
    /// Draw a random scenario.
    Sample {
        /// Scenario distribution JSON; defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo comparison over random scenarios.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RegionArgs {
    /// Utility weights `theta1,theta2`.
    #[arg(long, value_delimiter = ',', default_values_t = [4.0, 4.0])]
    theta: Vec<f64>,
    /// Operator costs `e1,e2` with `e1 < e2`.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0])]
    e: Vec<f64>,
    /// Cellular energy cost shared by both users.
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    /// Capacity range `lo,hi` for both downlinks.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 3.0])]
    range: Vec<f64>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 60)]
    steps: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_scenario(arg: &ScenarioArg) -> Result<Scenario64> {
    Scenario64::from_json(&read(&arg.scenario)?).with_context(|| format!("loading {}", arg.scenario.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let nonconvex = cli.allow_nonconvex;
    let qce_opts = QceOptions { allow_nonconvex: nonconvex, ..Default::default() };
    match cli.command {
        Command::SolveUpm { scenario, prices } => {
            let s = load_scenario(&scenario)?;
            let h: HybridPriceMatrix64 =
                serde_json::from_str(&read(&prices)?).with_context(|| format!("loading {}", prices.display()))?;
            if h.len() != s.n_users() {
                bail!("price matrix is {0}x{0} but the scenario has {1} users", h.len(), s.n_users());
            }
            print_json(&solve_upm(&s, &h)?)
        }
        Command::Coop(a) => {
            let s = load_scenario(&a)?;
            print_json(&solve_ropm(&s, nonconvex)?.into_outcome(&s, Scheme::Coop)?)
        }
        Command::Swm(a) => print_json(&solve_swm(&load_scenario(&a)?)?),
        Command::Ft(a) => {
            let s = load_scenario(&a)?;
            print_json(&solve_ft(&s)?.into_outcome(&s, Scheme::Ft)?)
        }
        Command::Ntp(a) => print_json(&solve_ntp(&load_scenario(&a)?)?),
        Command::CompetePrice(a) => {
            let s = load_scenario(&a)?;
            let out = match classify_regime(&s)? {
                MarketRegime::SingleOperator => single_operator_pce(&s, nonconvex)?,
                MarketRegime::MultiOperator => multi_operator_pce(&s, &ProbeOptions::default())?,
            };
            print_json(&out)
        }
        Command::Regions2x2(r) => regions(&r),
        Command::CompeteQuantity { scenario, trace, b0 } => {
            let s = load_scenario(&scenario)?;
            let opts = QceOptions { trace, b0, ..qce_opts };
            let profile = find_qce(&s, &opts)?;
            let outcome = quantity_outcome(&s, &profile, Scheme::Qcg)?;
            print_json(&serde_json::json!({ "profile": profile, "outcome": outcome }))
        }
        Command::Compete(a) => print_json(&competitive_scheme(&load_scenario(&a)?, &qce_opts)?),
        Command::Compare(a) => {
            let s = load_scenario(&a)?;
            let opts = CompareOptions { allow_nonconvex: nonconvex, ..Default::default() };
            let rows = compare_schemes_with(&s, &opts);
            write_comparison_csv(&rows, io::stdout().lock())?;
            Ok(())
        }
        Command::Sample { config, seed } => {
            let cfg: ScenarioConfig = match config {
                Some(p) => serde_json::from_str(&read(&p)?).with_context(|| format!("loading {}", p.display()))?,
                None => ScenarioConfig::default(),
            };
            let s: Scenario64 = sample_scenario(&cfg, seed)?;
            println!("{}", s.to_json()?);
            Ok(())
        }
        Command::Experiment { config, out, replications, seed, format } => {
            let mut cfg = ExperimentConfig::from_json(&read(&config)?)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(r) = replications {
                cfg.replications = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.allow_nonconvex |= nonconvex;
            let results = run_experiment(&cfg)?;
            let format = match format {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            };
            for path in emit_results(&results, &out, format)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn regions(r: &RegionArgs) -> Result<()> {
    for (name, v) in [("theta", &r.theta), ("e", &r.e), ("range", &r.range)] {
        if v.len() != 2 {
            bail!("--{name} takes two comma-separated values");
        }
    }
    if r.steps < 2 || !(r.range[0] > 0.0 && r.range[0] < r.range[1]) {
        bail!("need at least two steps and a positive increasing capacity range");
    }
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(["c1", "c2", "region"])?;
    let at = |k: usize| r.range[0] + (r.range[1] - r.range[0]) * k as f64 / (r.steps - 1) as f64;
    for a in 0..r.steps {
        for b in 0..r.steps {
            let (c1, c2) = (at(a), at(b));
            let region = match classify_2x2_region((r.theta[0], r.theta[1]), (r.e[0], r.e[1]), r.c, (c1, c2)) {
                Ok(reg) => serde_json::to_value(reg)?.as_str().unwrap_or_default().to_string(),
                Err(_) => "outside_model".to_string(),
            };
            w.write_record([c1.to_string(), c2.to_string(), region])?;
        }
    }
    w.flush()?;
    Ok(())
}
