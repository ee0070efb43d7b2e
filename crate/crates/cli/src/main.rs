//! `dsm`: day-ahead scheduling, reserve bidding and reporting for a foundry.
//!
//! Exit codes: 0 success, 1 bad input or failed validation, 2 solver failure,
//! 3 infeasible instance.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use dsm_core::eas::EasError;
use dsm_core::grid::GridError;
use dsm_core::milp::MilpError;
use dsm_core::reserve::ReserveError;

mod commands;
mod config;

use commands::Ctx;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "dsm", version, about = "Energy-aware scheduling and reserve bidding for a foundry")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "run.toml")]
    config: PathBuf,
    /// Concurrent solver processes; defaults to the available parallelism.
    #[arg(short, long, global = true)]
    jobs: Option<usize>,
    /// Seed for tie-breaking randomness (currently unused).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum-cost day-ahead schedule per casting line.
    Eas {
        /// Minimum-completion-time schedule instead of minimum cost.
        #[arg(long)]
        mct: bool,
        /// Warm-start each line from its per-power-unit decomposition.
        #[arg(long)]
        decompose: bool,
    },
    /// Reserve capacity and bid price per interval and bid block.
    Reserve {
        /// Day-ahead schedule; `<output>/schedule.json` by default.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Aggregate line bids into plant bids.
    Aggregate {
        /// Bid files; `<output>/bids.json` by default.
        #[arg(long = "bids")]
        bids: Vec<PathBuf>,
        /// Daily activations N_a.
        #[arg(long)]
        activations: Option<usize>,
    },
    /// Check a schedule against every plant constraint.
    Validate {
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Write CSV series for plotting.
    Plotdata {
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        bids: Option<PathBuf>,
    },
    /// Schedule, reserve, aggregate, validate and plot data in one go.
    Run {
        #[arg(long)]
        decompose: bool,
    },
    /// Write the bundled demo plant, prices and run configuration.
    Demo {
        #[arg(default_value = "demo")]
        dir: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<EasError>() {
            return eas_code(e);
        }
        if let Some(e) = cause.downcast_ref::<ReserveError>() {
            return match e {
                ReserveError::Eas(e) => eas_code(e),
                ReserveError::Milp(e) => milp_code(e),
                ReserveError::NoSolution { .. } => 2,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<MilpError>() {
            return milp_code(e);
        }
        if let Some(GridError::InfeasibleHorizon { .. }) = cause.downcast_ref::<GridError>() {
            return 3;
        }
    }
    1
}

fn eas_code(e: &EasError) -> u8 {
    match e {
        EasError::Infeasible(_) | EasError::SubproblemInfeasible(_) => 3,
        EasError::Grid(GridError::InfeasibleHorizon { .. }) => 3,
        EasError::Milp(e) => milp_code(e),
        EasError::NoSolution { .. } => 2,
        _ => 1,
    }
}

fn milp_code(e: &MilpError) -> u8 {
    match e {
        MilpError::SolverNotFound(_)
        | MilpError::SolverCrashed { .. }
        | MilpError::UnparsableSolution(_)
        | MilpError::MissingVariable(_)
        | MilpError::Io(_) => 2,
        _ => 1,
    }
}

fn load(cli: &Cli) -> Result<Ctx> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(out) = &cli.output {
        cfg.output_dir = out.clone();
    }
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    Ctx::new(cfg, jobs)
}

fn or_default(given: &Option<PathBuf>, ctx: &Ctx, name: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| ctx.out(name))
}

fn print_summary(s: &commands::EasSummary) {
    for l in &s.lines {
        println!(
            "{} line {}: {} cost {:.2} EUR, {:.1} kWh, {} vars ({} binary), {:.1} s",
            s.label, l.line, l.status, l.cost_eur, l.energy_kwh, l.num_vars, l.num_binaries, l.solve_seconds
        );
    }
    let efr = s.efr_eur_per_mwh.map_or("n/a".to_string(), |e| format!("{e:.3}"));
    println!(
        "{} total cost {:.2} EUR, EFR {efr} EUR/MWh, mean price {:.3} EUR/MWh",
        s.label, s.total_cost_eur, s.mean_price_eur_per_mwh
    );
}

fn print_bids(bids: &commands::BidFile) {
    for l in &bids.lines {
        for b in &l.blocks {
            let price = b.price_eur_per_mw.map_or("-".to_string(), |p| format!("{p:.4}"));
            let flag = if b.eligible { "" } else { " (ineligible)" };
            println!("line {} block {}: {:.1} kW at {price} EUR/MW{flag}", l.line, b.block, b.capacity_kw);
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(seed) = cli.seed {
        log::debug!("seed {seed}");
    }
    match &cli.command {
        Command::Demo { dir } => {
            let cfg = commands::cmd_demo(dir)?;
            println!("wrote {}", cfg.display());
        }
        Command::Eas { mct, decompose } => {
            let ctx = load(cli)?;
            print_summary(&commands::cmd_eas(&ctx, *mct, *decompose)?);
        }
        Command::Reserve { schedule } => {
            let ctx = load(cli)?;
            let r = commands::cmd_reserve(&ctx, &or_default(schedule, &ctx, "schedule.json"))?;
            print_bids(&r.bids);
            commands::check_clean(&r.contingency_report, "reserve contingencies")?;
        }
        Command::Aggregate { bids, activations } => {
            let ctx = load(cli)?;
            let bids = if bids.is_empty() { vec![ctx.out("bids.json")] } else { bids.clone() };
            let na = activations.unwrap_or(ctx.cfg.aggregate.activations);
            let agg = commands::cmd_aggregate(&ctx, &bids, na)?;
            for b in &agg.blocks {
                let price = b.price_eur_per_mw.map_or("-".to_string(), |p| format!("{p:.4}"));
                println!("block {}: {:.1} kW at {price} EUR/MW [{}]", b.block, b.capacity_kw, b.selected_lines.join(" "));
            }
        }
        Command::Validate { schedule } => {
            let ctx = load(cli)?;
            let path = or_default(schedule, &ctx, "schedule.json");
            let report = commands::cmd_validate(&ctx, &path)?;
            for v in &report.violations {
                println!("{v}");
            }
            commands::check_clean(&report, &path.display().to_string())?;
            println!("{}: no violations", path.display());
        }
        Command::Plotdata { schedule, bids } => {
            let ctx = load(cli)?;
            let bids = bids.clone().or_else(|| Some(ctx.out("bids.json")).filter(|p| p.is_file()));
            for p in commands::cmd_plotdata(&ctx, &or_default(schedule, &ctx, "schedule.json"), bids.as_deref())? {
                println!("wrote {}", p.display());
            }
        }
        Command::Run { decompose } => {
            let ctx = load(cli)?;
            print_summary(&commands::cmd_eas(&ctx, false, *decompose)?);
            let schedule = ctx.out("schedule.json");
            let report = commands::cmd_validate(&ctx, &schedule)?;
            commands::check_clean(&report, "schedule")?;
            let r = commands::cmd_reserve(&ctx, &schedule)?;
            print_bids(&r.bids);
            commands::check_clean(&r.contingency_report, "reserve contingencies")?;
            commands::cmd_aggregate(&ctx, &[ctx.out("bids.json")], ctx.cfg.aggregate.activations)?;
            commands::cmd_plotdata(&ctx, &schedule, Some(&ctx.out("bids.json")))?;
            println!("outputs in {}", Path::new(&ctx.cfg.output_dir).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
