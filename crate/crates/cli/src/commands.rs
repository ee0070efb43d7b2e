use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dsm_core::eas::{self, EasConfig, LineOutcome};
use dsm_core::grid::TimeGrid;
use dsm_core::milp::fmt_num;
use dsm_core::plant::{validate_schedule, LineSchedule, PlantInstance, Schedule, ValidationOptions, ValidationReport};
use dsm_core::reserve::{self, Aggregation, BidBlock, LineBids};

use crate::config::RunConfig;

/// A schedule or bid file that fails validation.
#[derive(Debug, thiserror::Error)]
#[error("{count} violation(s) in {what}")]
pub struct ValidationFailed {
    pub what: String,
    pub count: usize,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub grid: TimeGrid,
    pub instance: PlantInstance,
    pub jobs: usize,
}

impl Ctx {
    pub fn new(cfg: RunConfig, jobs: usize) -> Result<Ctx> {
        let grid = cfg.grid()?;
        let instance = PlantInstance::load(&cfg.instance)?;
        Ok(Ctx { cfg, grid, instance, jobs })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.cfg.output_dir)
            .with_context(|| format!("creating {}", self.cfg.output_dir.display()))?;
        let path = self.out(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|_| crate::config::MissingFile(path.to_path_buf()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineSummary {
    pub line: String,
    pub status: String,
    pub cost_eur: f64,
    pub energy_kwh: f64,
    pub efr_eur_per_mwh: Option<f64>,
    pub model_objective: f64,
    pub gap: Option<f64>,
    pub solve_seconds: f64,
    pub num_vars: usize,
    pub num_binaries: usize,
    pub num_constraints: usize,
    pub baseline_kw: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EasSummary {
    pub label: String,
    pub total_cost_eur: f64,
    pub energy_kwh: f64,
    pub efr_eur_per_mwh: Option<f64>,
    pub mean_price_eur_per_mwh: f64,
    pub lines: Vec<LineSummary>,
}

pub fn schedule_name(mct: bool) -> &'static str {
    if mct {
        "schedule_mct.json"
    } else {
        "schedule.json"
    }
}

pub fn cmd_eas(ctx: &Ctx, mct: bool, decompose: bool) -> Result<EasSummary> {
    let prices = ctx.cfg.day_ahead(&ctx.grid)?;
    let config = EasConfig { mct_mode: mct || ctx.cfg.eas.mct_mode, ..ctx.cfg.eas.clone() };
    let profile = ctx.cfg.profile();
    let options = ctx.cfg.eas_options();
    let (schedule, outcomes) = if decompose || ctx.cfg.solver.decompose {
        let (s, d) = eas::solve_plant_decomposed(&ctx.instance, &ctx.grid, &prices, &config, &profile, &options, ctx.jobs)?;
        (s, d.into_iter().map(|d| d.outcome).collect::<Vec<LineOutcome>>())
    } else {
        eas::solve_plant(&ctx.instance, &ctx.grid, &prices, &config, &profile, &options, ctx.jobs)?
    };
    let mut lines = Vec::new();
    for o in &outcomes {
        let energy = o.schedule.energy_kwh(&ctx.grid);
        lines.push(LineSummary {
            line: o.schedule.line.clone(),
            status: o.status.as_str().into(),
            cost_eur: o.schedule.objective_eur,
            energy_kwh: energy,
            efr_eur_per_mwh: eas::efr(o.schedule.objective_eur, energy).ok(),
            model_objective: o.model_objective,
            gap: o.gap,
            solve_seconds: o.solve_seconds,
            num_vars: o.num_vars,
            num_binaries: o.num_binaries,
            num_constraints: o.num_constraints,
            baseline_kw: o.schedule.baseline_kw.clone(),
        });
    }
    let total = eas::total_cost(&schedule, &prices, &ctx.grid);
    let energy: f64 = schedule.lines.iter().map(|l| l.energy_kwh(&ctx.grid)).sum();
    let summary = EasSummary {
        label: schedule.label.to_uppercase(),
        total_cost_eur: total,
        energy_kwh: energy,
        efr_eur_per_mwh: eas::efr(total, energy).ok(),
        mean_price_eur_per_mwh: ctx.cfg.day_ahead_series()?.mean(),
        lines,
    };
    ctx.write(schedule_name(mct), &schedule.to_json_pretty())?;
    let name = if mct { "summary_mct.json" } else { "summary.json" };
    ctx.write(name, &to_json(&summary))?;
    Ok(summary)
}

/// Per-interval reserve result as written to the bid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBid {
    pub q: usize,
    pub block: usize,
    pub baseline_kw: f64,
    pub reserve_kw: f64,
    pub price_eur_per_mw: Option<f64>,
    pub eligible: bool,
    pub daf: bool,
    pub shifted_energy_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineBidFile {
    pub line: String,
    pub blocks: Vec<BidBlock>,
    pub intervals: Vec<IntervalBid>,
}

/// Bid file: deterministic content only, no timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidFile {
    pub params: reserve::ReserveParams,
    pub lines: Vec<LineBidFile>,
}

impl BidFile {
    pub fn line_bids(&self) -> Vec<LineBids> {
        self.lines.iter().map(|l| LineBids { line: l.line.clone(), blocks: l.blocks.clone() }).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IntervalLog {
    line: String,
    q: usize,
    status: Option<String>,
    solve_seconds: f64,
    buffer_margin_m3: f64,
}

pub struct ReserveRun {
    pub bids: BidFile,
    pub contingency_report: ValidationReport,
}

pub fn cmd_reserve(ctx: &Ctx, schedule_path: &Path) -> Result<ReserveRun> {
    let schedule: Schedule = read_json(schedule_path)?;
    let prices = ctx.cfg.reserve_prices(&ctx.grid)?;
    let params = &ctx.cfg.reserve;
    let results = reserve::solve_reserve_day(
        &ctx.instance,
        &ctx.grid,
        &schedule.lines,
        &prices,
        params,
        &ctx.cfg.profile(),
        &ctx.cfg.reserve_options(),
        ctx.jobs,
    )?;
    let mut logs = Vec::new();
    let mut report = ValidationReport::default();
    let mut contingencies = Vec::new();
    for lr in &results {
        for r in &lr.intervals {
            logs.push(IntervalLog {
                line: lr.line.clone(),
                q: r.q,
                status: r.status.map(|s| s.as_str().to_string()),
                solve_seconds: r.solve_seconds,
                buffer_margin_m3: r.buffer_margin_m3,
            });
            if let Some(c) = &r.contingency {
                let found = validate_contingency(&ctx.instance, &ctx.grid, c, r.buffer_margin_m3)?;
                for mut v in found.violations {
                    v.at = format!("contingency q{} {}", r.q, v.at);
                    report.violations.push(v);
                }
                contingencies.push((lr.line.clone(), r.q, c.clone()));
            }
        }
    }
    let bids = BidFile {
        params: params.clone(),
        lines: results
            .iter()
            .map(|lr| LineBidFile {
                line: lr.line.clone(),
                blocks: lr.blocks.clone(),
                intervals: lr
                    .intervals
                    .iter()
                    .map(|r| IntervalBid {
                        q: r.q,
                        block: r.block,
                        baseline_kw: r.baseline_kw,
                        reserve_kw: r.reserve_kw,
                        price_eur_per_mw: r.price_eur_per_mw,
                        eligible: r.eligible,
                        daf: r.daf,
                        shifted_energy_kwh: r.shifted_energy_kwh,
                    })
                    .collect(),
            })
            .collect(),
    };
    ctx.write("bids.json", &to_json(&bids))?;
    ctx.write("reserve_log.json", &to_json(&logs))?;
    let contingencies: Vec<serde_json::Value> = contingencies
        .into_iter()
        .map(|(line, q, s)| serde_json::json!({ "line": line, "q": q, "schedule": s }))
        .collect();
    ctx.write("contingencies.json", &to_json(&contingencies))?;
    ctx.write("contingency_validation.json", &to_json(&report))?;
    Ok(ReserveRun { bids, contingency_report: report })
}

/// Check a contingency schedule with the shifted cycles allowed and the raised
/// buffer floor.
pub fn validate_contingency(
    instance: &PlantInstance,
    grid: &TimeGrid,
    contingency: &LineSchedule,
    buffer_margin_m3: f64,
) -> Result<ValidationReport> {
    let mut opts = ValidationOptions { allow_shift: true, ..ValidationOptions::default() };
    opts.buffer_margin.insert(contingency.line.clone(), buffer_margin_m3);
    let sched = Schedule::from_lines("contingency", grid, vec![contingency.clone()]);
    Ok(validate_schedule(instance, grid, &sched, &opts)?)
}

pub fn cmd_aggregate(ctx: &Ctx, bid_paths: &[PathBuf], activations: usize) -> Result<Aggregation> {
    let mut bids = Vec::new();
    for p in bid_paths {
        let file: BidFile = read_json(p)?;
        bids.extend(file.line_bids());
    }
    if bids.is_empty() {
        bail!("no line bids in {:?}", bid_paths);
    }
    let agg = reserve::aggregate_internal(&bids, activations, &ctx.cfg.profile(), &ctx.cfg.reserve_options())?;
    ctx.write("aggregation.json", &to_json(&agg))?;
    Ok(agg)
}

pub fn cmd_validate(ctx: &Ctx, schedule_path: &Path) -> Result<ValidationReport> {
    let schedule: Schedule = read_json(schedule_path)?;
    let report = validate_schedule(&ctx.instance, &ctx.grid, &schedule, &ValidationOptions::default())?;
    ctx.write("validation.json", &to_json(&report))?;
    Ok(report)
}

fn csv_table(header: &[String], rows: impl Iterator<Item = Vec<f64>>, index: &str) -> String {
    let mut s = format!("{index},{}\n", header.join(","));
    for (i, row) in rows.enumerate() {
        let cells: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(s, "{},{}", i + 1, cells.join(","));
    }
    s
}

/// Plot-ready series: power and buffer per step, baseline per settlement
/// interval, and reserve per interval when a bid file is given.
pub fn cmd_plotdata(ctx: &Ctx, schedule_path: &Path, bids_path: Option<&Path>) -> Result<Vec<PathBuf>> {
    let schedule: Schedule = read_json(schedule_path)?;
    let mut header: Vec<String> = schedule.lines.iter().map(|l| l.line.clone()).collect();
    header.push("total".into());
    let with_total = |v: Vec<f64>| {
        let t: f64 = v.iter().sum();
        let mut v = v;
        v.push(t);
        v
    };
    let kk = schedule.horizon_steps;
    let nq = ctx.grid.num_settlements();
    let mut written = Vec::new();
    let power = csv_table(
        &header,
        (1..=kk).map(|k| with_total(schedule.lines.iter().map(|l| l.total_power(k)).collect())),
        "k",
    );
    written.push(ctx.write("power.csv", &power)?);
    let buffer = csv_table(&header[..header.len() - 1], (0..kk).map(|k| schedule.lines.iter().map(|l| l.buffer_m3[k]).collect()), "k");
    written.push(ctx.write("buffer.csv", &buffer)?);
    let baseline = csv_table(&header, (0..nq).map(|q| with_total(schedule.lines.iter().map(|l| l.baseline_kw[q]).collect())), "q");
    written.push(ctx.write("baseline.csv", &baseline)?);
    if let Some(p) = bids_path {
        let bids: BidFile = read_json(p)?;
        let names: Vec<String> = bids.lines.iter().map(|l| l.line.clone()).collect();
        let mut h = names.clone();
        h.push("total".into());
        let reserve = csv_table(&h, (0..nq).map(|q| with_total(bids.lines.iter().map(|l| l.intervals[q].reserve_kw).collect())), "q");
        written.push(ctx.write("reserve.csv", &reserve)?);
        let blocks = csv_table(&h, (0..ctx.grid.num_blocks()).map(|d| with_total(bids.lines.iter().map(|l| l.blocks[d].capacity_kw).collect())), "d");
        written.push(ctx.write("blocks.csv", &blocks)?);
    }
    Ok(written)
}

/// Write the bundled demo plant, its price day and a run configuration.
pub fn cmd_demo(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("demo_plant.json"), dsm_core::demo::DEMO_PLANT_JSON)?;
    std::fs::write(dir.join("prices.csv"), dsm_core::demo::DEMO_PRICES_CSV)?;
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, DEMO_RUN_TOML)?;
    Ok(cfg)
}

pub const DEMO_RUN_TOML: &str = r#"instance = "demo_plant.json"
output_dir = "out"

[prices]
day_ahead = "prices.csv"
resolution_s = 3600

[grid]
step_s = 300
horizon_s = 86400
settlement_s = 900
market_s = 3600
block_s = 14400

[solver]
mip_gap = 1e-4
eas_time_limit_s = 900
reserve_time_limit_s = 120

[reserve]
reward_eur_per_mw = 10.0
activation_probability = 0.020833333333333332
activation_intervals = 2

[aggregate]
activations = 1
"#;

pub fn check_clean(report: &ValidationReport, what: &str) -> Result<()> {
    if report.is_clean() {
        Ok(())
    } else {
        Err(ValidationFailed { what: what.to_string(), count: report.violations.len() }.into())
    }
}
