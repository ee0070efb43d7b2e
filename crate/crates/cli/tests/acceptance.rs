//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain binary
//! (`harness = false`) so the lines reach stdout uncaptured.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use dsm_core::demo;
use dsm_core::eas::{self, EasConfig, LineOutcome};
use dsm_core::grid::{build_time_grid, TimeGrid};
use dsm_core::market::{self, tou_series, DayType, Season, TouTariff};
use dsm_core::milp::{emit_model, solve, ModelFormat, SolveOptions, SolveStatus, SolverProfile};
use dsm_core::plant::testing::{energy_stage, single_furnace, tap_stage, time_stage};
use dsm_core::plant::{validate_schedule, LineSchedule, PlantInstance, Schedule, ValidationOptions};
use dsm_core::reserve::{
    self, aggregate_exhaustive, aggregate_internal, bid_blocks, build_aggregation_model, BidBlock, DafMode, IntervalResult, LineBids,
    LineReserve, ReserveParams, ReservePrices,
};

/// Validator tolerance for schedules and contingencies.
const VALIDATION_TOL: f64 = 1e-6;
/// Per-line wall-clock budget for the demo day-ahead solve.
const EAS_SECONDS: f64 = 60.0;
/// Relative gap for demo solves.
const DEMO_GAP: f64 = 1e-4;
/// Relative gap for the small oracle instances, tight enough to compare at 1e-6.
const ORACLE_GAP: f64 = 1e-9;
/// Greedy-oracle and window-soundness agreement.
const REL_TOL: f64 = 1e-6;
/// Flat-price fixed point: EFR against the price.
const EFR_TOL: f64 = 1e-9;
/// Minimum variable reduction from windows on the demo.
const WINDOW_SHRINK: f64 = 0.20;
/// Slack, in kW, for comparing reserve capacities from separate solves.
const RESERVE_TOL_KW: f64 = 1e-3;
/// Aggregation objective match.
const AGG_TOL: f64 = 1e-9;

fn profile() -> SolverProfile {
    SolverProfile::highs_runner(Path::new(env!("CARGO_BIN_EXE_dsm-highs")))
}

fn options(gap: f64, time_limit_s: f64) -> SolveOptions {
    SolveOptions { mip_gap: gap, time_limit_s, ..SolveOptions::default() }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Demo results shared between criteria.
struct Demo {
    instance: PlantInstance,
    grid: TimeGrid,
    prices: Vec<f64>,
    eas: Schedule,
    outcomes: Vec<LineOutcome>,
    line_seconds: Vec<f64>,
    reserve_prices: ReservePrices,
    params: ReserveParams,
    reserve: Vec<LineReserve>,
}

impl Demo {
    fn solve() -> Result<Demo, String> {
        let instance = demo::demo_instance();
        let grid = demo::demo_grid();
        let prices = market::expand_to_grid(&demo::demo_prices(), &grid).map_err(|e| e.to_string())?;
        let mut outcomes = Vec::new();
        let mut line_seconds = Vec::new();
        for li in 0..instance.lines.len() {
            let t = Instant::now();
            let o = eas::solve_line(&instance, li, &grid, &prices, &EasConfig::default(), &profile(), &options(DEMO_GAP, 900.0))
                .map_err(|e| e.to_string())?;
            line_seconds.push(t.elapsed().as_secs_f64());
            outcomes.push(o);
        }
        let eas = Schedule::from_lines("eas", &grid, outcomes.iter().map(|o| o.schedule.clone()).collect());
        let params = ReserveParams::default();
        let reserve_prices = ReservePrices::from_day_ahead(prices.clone(), &params);
        let reserve = reserve::solve_reserve_day(
            &instance,
            &grid,
            &eas.lines,
            &reserve_prices,
            &params,
            &profile(),
            &options(DEMO_GAP, 120.0),
            jobs(),
        )
        .map_err(|e| e.to_string())?;
        Ok(Demo { instance, grid, prices, eas, outcomes, line_seconds, reserve_prices, params, reserve })
    }

    fn reserve_with(&self, params: &ReserveParams, grid: &TimeGrid) -> Result<Vec<LineReserve>, String> {
        reserve::solve_reserve_day(
            &self.instance,
            grid,
            &self.eas.lines,
            &self.reserve_prices,
            params,
            &profile(),
            &options(DEMO_GAP, 120.0),
            jobs(),
        )
        .map_err(|e| e.to_string())
    }
}

fn contingency_report(instance: &PlantInstance, grid: &TimeGrid, c: &LineSchedule, margin: f64) -> usize {
    let mut opts = ValidationOptions { tol: VALIDATION_TOL, allow_shift: true, ..ValidationOptions::default() };
    opts.buffer_margin.insert(c.line.clone(), margin);
    let s = Schedule::from_lines("contingency", grid, vec![c.clone()]);
    validate_schedule(instance, grid, &s, &opts).map(|r| r.violations.len()).unwrap_or(usize::MAX)
}

fn strict() -> ValidationOptions {
    ValidationOptions { tol: VALIDATION_TOL, ..ValidationOptions::default() }
}

fn c1_feasibility(d: &Demo) -> Outcome {
    for (o, secs) in d.outcomes.iter().zip(&d.line_seconds) {
        ensure(o.status == SolveStatus::Optimal, || format!("line {} ended {:?}", o.schedule.line, o.status))?;
        ensure(*secs < EAS_SECONDS, || format!("line {} took {secs:.1} s", o.schedule.line))?;
    }
    let report = validate_schedule(&d.instance, &d.grid, &d.eas, &strict()).map_err(|e| e.to_string())?;
    ensure(report.is_clean(), || format!("schedule: {}", report.violations[0]))?;
    let mut checked = 0;
    for lr in &d.reserve {
        for r in &lr.intervals {
            if let Some(c) = &r.contingency {
                let n = contingency_report(&d.instance, &d.grid, c, r.buffer_margin_m3);
                ensure(n == 0, || format!("line {} q{}: {n} contingency violations", lr.line, r.q))?;
                checked += 1;
            }
        }
    }
    let secs: Vec<String> = d.line_seconds.iter().map(|s| format!("{s:.1}s")).collect();
    Ok(format!("EAS lines solved in [{}]; schedule and {checked} contingencies clean", secs.join(", ")))
}

fn greedy_cost(prices: &[f64], energy_kwh: f64, p_max_kw: f64, step_h: f64) -> f64 {
    let mut order: Vec<usize> = (0..prices.len()).collect();
    order.sort_by(|&a, &b| prices[a].total_cmp(&prices[b]));
    let mut left = energy_kwh;
    let mut cost = 0.0;
    for k in order {
        if left <= 0.0 {
            break;
        }
        let e = left.min(p_max_kw * step_h);
        cost += prices[k] * e / 1000.0;
        left -= e;
    }
    cost
}

fn c2_greedy_oracle() -> Outcome {
    let grid = TimeGrid::table1();
    let mut rng = StdRng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let p_max = rng.random_range(200.0..1500.0);
        let energy = rng.random_range(0.05..0.9) * p_max * 24.0;
        let prices: Vec<f64> = (0..grid.horizon_steps).map(|_| rng.random_range(5.0..120.0)).collect();
        let inst = single_furnace(vec![vec![energy_stage(energy, p_max)]]);
        let o = eas::solve_line(&inst, 0, &grid, &prices, &EasConfig::default(), &profile(), &options(ORACLE_GAP, 300.0))
            .map_err(|e| format!("instance {i}: {e}"))?;
        let oracle = greedy_cost(&prices, energy, p_max, grid.step_hours());
        let err = (o.schedule.objective_eur - oracle).abs() / oracle;
        worst = worst.max(err);
        ensure(err <= REL_TOL, || format!("instance {i}: MILP {} vs greedy {oracle}", o.schedule.objective_eur))?;
    }
    Ok(format!("20 instances, worst relative error {worst:.2e}"))
}

fn c3_mct_dominance(d: &Demo) -> Outcome {
    let cfg = EasConfig { mct_mode: true, ..EasConfig::default() };
    let (mct, _) = eas::solve_plant(&d.instance, &d.grid, &d.prices, &cfg, &profile(), &options(DEMO_GAP, 900.0), jobs())
        .map_err(|e| e.to_string())?;
    let daea = eas::total_cost(&d.eas, &d.prices, &d.grid);
    let mct_cost = eas::total_cost(&mct, &d.prices, &d.grid);
    let energy: f64 = d.eas.lines.iter().map(|l| l.energy_kwh(&d.grid)).sum();
    let efr = eas::efr(daea, energy).map_err(|e| e.to_string())?;
    let mean = d.prices.iter().sum::<f64>() / d.prices.len() as f64;
    ensure(daea < mct_cost, || format!("DAEA {daea:.2} not below MCT {mct_cost:.2}"))?;
    ensure(efr < mean, || format!("EFR {efr:.3} not below mean price {mean:.3}"))?;
    Ok(format!("DAEA {daea:.2} EUR < MCT {mct_cost:.2} EUR; EFR {efr:.3} < mean {mean:.3} EUR/MWh"))
}

fn with_loss(mut s: dsm_core::plant::StageSpec, alpha: f64) -> dsm_core::plant::StageSpec {
    s.loss_coeff = Some(alpha);
    s
}

fn c4_flat_price() -> Outcome {
    let grid = build_time_grid(300, 43_200, 900, 3600, 14_400).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(4);
    let mut detail = Vec::new();
    for i in 0..5 {
        let lambda: f64 = rng.random_range(10.0..90.0);
        let a_load = rng.random_range(0.0..0.05);
        let a_heat = rng.random_range(0.0..0.05);
        // Heating lasts a whole number of steps at full power.
        let p_max = 600.0;
        let energy = p_max * grid.step_hours() * rng.random_range(6..20) as f64;
        let cycle = vec![with_loss(time_stage(1800.0), a_load), with_loss(energy_stage(energy, p_max), a_heat), tap_stage(600.0)];
        let inst = single_furnace(vec![cycle.clone(), cycle]);
        let prices = vec![lambda; grid.horizon_steps];
        let o = eas::solve_line(&inst, 0, &grid, &prices, &EasConfig::default(), &profile(), &options(ORACLE_GAP, 300.0))
            .map_err(|e| format!("instance {i}: {e}"))?;
        let used = o.schedule.energy_kwh(&grid);
        let efr = eas::efr(o.schedule.objective_eur, used).map_err(|e| e.to_string())?;
        // Heating losses grow with the heating stage's own length: find the
        // fewest full-power steps that cover the elongated requirement.
        let nominal_s = energy / p_max * 3600.0;
        let need = |n: usize| energy * (1.0 + a_load + a_heat * (n as f64 * grid.step_seconds as f64) / nominal_s);
        let n = (1..).find(|&n| p_max * grid.step_hours() * n as f64 >= need(n)).unwrap();
        let minimum = 2.0 * need(n);
        ensure((efr - lambda).abs() <= EFR_TOL, || format!("instance {i}: EFR {efr} vs {lambda}"))?;
        ensure(rel_close(used, minimum, REL_TOL), || format!("instance {i}: energy {used} vs minimum {minimum}"))?;
        detail.push(format!("{used:.1}"));
    }
    Ok(format!("5 instances at minimum energy [{}] kWh, EFR = price", detail.join(", ")))
}

fn small_instance(rng: &mut StdRng) -> PlantInstance {
    let cycle = |rng: &mut StdRng| {
        vec![
            with_loss(time_stage(300.0 * rng.random_range(1..4) as f64), rng.random_range(0.0..0.05)),
            energy_stage(rng.random_range(100.0..400.0), 200.0),
            tap_stage(600.0),
        ]
    };
    let cycles = (0..rng.random_range(1..3)).map(|_| cycle(rng)).collect();
    single_furnace(cycles)
}

fn c5_windows(d: &Demo) -> Outcome {
    let grid = build_time_grid(300, 14_400, 900, 3600, 3600).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(5);
    let off = EasConfig { enable_windows: false, ..EasConfig::default() };
    for i in 0..10 {
        let inst = small_instance(&mut rng);
        let prices: Vec<f64> = (0..grid.horizon_steps).map(|_| rng.random_range(10.0..80.0)).collect();
        let solve = |cfg: &EasConfig| {
            eas::solve_line(&inst, 0, &grid, &prices, cfg, &profile(), &options(ORACLE_GAP, 300.0))
                .map_err(|e| format!("instance {i}: {e}"))
        };
        let a = solve(&EasConfig::default())?.model_objective;
        let b = solve(&off)?.model_objective;
        ensure((a - b).abs() <= REL_TOL * a.abs().max(1.0), || format!("instance {i}: {a} with windows vs {b} without"))?;
    }
    let mut shrink: f64 = 1.0;
    for li in 0..d.instance.lines.len() {
        let on = eas::build_eas_model(&d.instance, li, &d.grid, &d.prices, &EasConfig::default()).map_err(|e| e.to_string())?;
        let full = eas::build_eas_model(&d.instance, li, &d.grid, &d.prices, &off).map_err(|e| e.to_string())?;
        shrink = shrink.min(1.0 - on.milp().num_vars() as f64 / full.milp().num_vars() as f64);
    }
    ensure(shrink >= WINDOW_SHRINK, || format!("demo variables shrink by only {:.1}%", shrink * 100.0))?;
    Ok(format!("10 instances agree; demo variables shrink by {:.1}%", shrink * 100.0))
}

fn c6_warm_start(d: &Demo) -> Outcome {
    let mut detail = Vec::new();
    for li in 0..d.instance.lines.len() {
        let r = eas::decompose_and_warmstart(&d.instance, li, &d.grid, &d.prices, &EasConfig::default(), &profile(), &options(DEMO_GAP, 900.0))
            .map_err(|e| e.to_string())?;
        let line = &d.instance.lines[li].id;
        let inc = r.incumbent.as_ref().ok_or_else(|| format!("line {line}: merged sub-schedules infeasible"))?;
        let inc_obj = r.incumbent_objective.ok_or_else(|| format!("line {line}: no incumbent objective"))?;
        let fin = r.outcome.model_objective;
        ensure(fin <= inc_obj + REL_TOL * inc_obj.abs(), || format!("line {line}: final {fin} above incumbent {inc_obj}"))?;
        let s = Schedule::from_lines("incumbent", &d.grid, vec![inc.clone()]);
        let rep = validate_schedule(&d.instance, &d.grid, &s, &strict()).map_err(|e| e.to_string())?;
        ensure(rep.is_clean(), || format!("line {line}: incumbent {}", rep.violations[0]))?;
        detail.push(format!("{line} {fin:.2} <= {inc_obj:.2} ({} subproblems)", r.subproblems));
    }
    Ok(detail.join("; "))
}

fn caps(lines: &[LineReserve]) -> Vec<Vec<f64>> {
    lines.iter().map(|l| l.blocks.iter().map(|b| b.capacity_kw).collect()).collect()
}

fn c7_reserve(d: &Demo) -> Outcome {
    for lr in &d.reserve {
        for r in &lr.intervals {
            ensure(r.reserve_kw <= r.baseline_kw + RESERVE_TOL_KW, || {
                format!("line {} q{}: R {} above baseline {}", lr.line, r.q, r.reserve_kw, r.baseline_kw)
            })?;
        }
    }
    let doubled = ReserveParams { reward_eur_per_mw: 2.0 * d.params.reward_eur_per_mw, ..d.params.clone() };
    let hi = d.reserve_with(&doubled, &d.grid)?;
    for (a, b) in d.reserve.iter().zip(&hi) {
        for (x, y) in a.intervals.iter().zip(&b.intervals) {
            ensure(y.reserve_kw >= x.reserve_kw - RESERVE_TOL_KW, || {
                format!("line {} q{}: R fell from {} to {} with doubled reward", a.line, x.q, x.reserve_kw, y.reserve_kw)
            })?;
        }
    }
    let hourly = d.grid.with_block_seconds(3600).map_err(|e| e.to_string())?;
    let fine = d.reserve_with(&d.params, &hourly)?;
    let (coarse_caps, fine_caps) = (caps(&d.reserve), caps(&fine));
    let per = d.grid.reserve_block_steps / hourly.reserve_block_steps;
    let (mut sum_coarse, mut sum_fine) = (0.0, 0.0);
    for (l, (c, f)) in coarse_caps.iter().zip(&fine_caps).enumerate() {
        for (h, cap) in f.iter().enumerate() {
            let outer = c[h / per];
            ensure(*cap >= outer - RESERVE_TOL_KW, || format!("line {l}: 1-h block {} has {cap} < {outer}", h + 1))?;
            sum_fine += cap;
        }
        sum_coarse += c.iter().sum::<f64>() * per as f64;
    }
    Ok(format!("R <= baseline; monotone in reward; hourly blocks offer {sum_fine:.0} kWh vs {sum_coarse:.0} kWh at 4 h"))
}

fn c8_daf(d: &Demo) -> Outcome {
    const CAP_KWH: f64 = 3000.0;
    let last = d.grid.num_blocks();
    let qs: Vec<usize> = (1..=d.grid.num_settlements()).filter(|&q| d.grid.block_of(q) == last).collect();
    let with = ReserveParams { max_shift_energy_kwh: Some(CAP_KWH), daf: DafMode::FinalBlock, ..d.params.clone() };
    let without = ReserveParams { daf: DafMode::Never, ..with.clone() };
    let mut detail = Vec::new();
    for (li, ls) in d.eas.lines.iter().enumerate() {
        let run = |p: &ReserveParams| -> Result<Vec<IntervalResult>, String> {
            qs.iter()
                .map(|&q| {
                    reserve::solve_interval(&d.instance, li, &d.grid, ls, &d.reserve_prices, p, q, &profile(), &options(DEMO_GAP, 120.0))
                        .map_err(|e| e.to_string())
                })
                .collect()
        };
        let a = run(&with)?;
        let b = run(&without)?;
        for (x, y) in a.iter().zip(&b) {
            ensure(x.reserve_kw >= y.reserve_kw - RESERVE_TOL_KW, || {
                format!("line {} q{}: DAF {} < {}", ls.line, x.q, x.reserve_kw, y.reserve_kw)
            })?;
            ensure(x.shifted_energy_kwh <= CAP_KWH + 1e-6, || format!("q{} shifts {} kWh", x.q, x.shifted_energy_kwh))?;
            if let Some(c) = &x.contingency {
                let n = contingency_report(&d.instance, &d.grid, c, x.buffer_margin_m3);
                ensure(n == 0, || format!("line {} q{}: {n} violations under the raised buffer bound", ls.line, x.q))?;
            }
        }
        let cap = |v: &[IntervalResult]| bid_blocks(v, &d.grid, &with)[last - 1].capacity_kw;
        let (ca, cb) = (cap(&a), cap(&b));
        ensure(ca >= cb - RESERVE_TOL_KW, || format!("line {}: final block {ca} < {cb}", ls.line))?;
        let shifted = a.iter().map(|x| x.shifted_energy_kwh).fold(0.0, f64::max);
        let sum = |v: &[IntervalResult]| v.iter().map(|x| x.reserve_kw).sum::<f64>();
        detail.push(format!(
            "{} block {ca:.0} >= {cb:.0} kW, interval sum {:.0} >= {:.0} kW, max shift {shifted:.0} kWh",
            ls.line,
            sum(&a),
            sum(&b)
        ));
    }
    Ok(detail.join("; "))
}

fn random_bids(rng: &mut StdRng, nc: usize, nd: usize) -> Vec<LineBids> {
    (0..nc)
        .map(|c| LineBids {
            line: format!("L{}", c + 1),
            blocks: (0..nd)
                .map(|d| {
                    let cap = if rng.random_bool(0.2) { rng.random_range(0.0..300.0) } else { rng.random_range(300.0..5000.0) };
                    BidBlock {
                        block: d + 1,
                        capacity_kw: cap,
                        price_eur_per_mw: Some(rng.random_range(0.0..12.0)),
                        eligible: cap >= 300.0,
                        note: None,
                    }
                })
                .collect(),
        })
        .collect()
}

fn c9_aggregation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let mut count = 0;
    for nc in 1..=3 {
        for nd in 1..=3 {
            for na in 1..=2 {
                for _ in 0..3 {
                    let bids = random_bids(&mut rng, nc, nd);
                    let internal = aggregate_internal(&bids, na, &profile(), &options(ORACLE_GAP, 60.0)).map_err(|e| e.to_string())?;
                    // The multi-activation model, solved directly even for a single
                    // activation where the pipeline takes the closed form.
                    let am = build_aggregation_model(&bids, na).map_err(|e| e.to_string())?;
                    let sol = solve(&am.model, &profile(), &options(ORACLE_GAP, 60.0)).map_err(|e| e.to_string())?;
                    let milp = sol.objective.ok_or("aggregation model unsolved")?;
                    let ex = aggregate_exhaustive(&bids, na).map_err(|e| e.to_string())?;
                    ensure((milp - ex.objective).abs() <= AGG_TOL * ex.objective.abs().max(1.0), || {
                        format!("|C|={nc} |D|={nd} N_a={na}: MILP {milp} vs enumeration {}", ex.objective)
                    })?;
                    if na == 1 {
                        let milp = internal;
                        for (d, blk) in milp.blocks.iter().enumerate() {
                            let el: Vec<&BidBlock> = bids.iter().map(|b| &b.blocks[d]).filter(|b| b.eligible).collect();
                            let total: f64 = el.iter().map(|b| b.capacity_kw).sum();
                            let value: f64 = el.iter().map(|b| b.capacity_kw * b.price_eur_per_mw.unwrap()).sum();
                            ensure((blk.capacity_kw - total).abs() <= 1e-9 * total.max(1.0), || format!("block {}: {} vs sum {total}", d + 1, blk.capacity_kw))?;
                            if total > 0.0 {
                                let p = blk.price_eur_per_mw.unwrap_or(f64::NAN);
                                ensure((p - value / total).abs() <= 1e-9, || format!("block {}: price {p} vs {}", d + 1, value / total))?;
                            }
                        }
                    }
                    count += 1;
                }
            }
        }
    }
    Ok(format!("{count} instances: model matches enumeration; N_a=1 equals the capacity sum at the weighted price"))
}

fn c10_gates(d: &Demo) -> Outcome {
    let grid = build_time_grid(300, 14_400, 900, 3600, 3600).map_err(|e| e.to_string())?;
    let p = ReserveParams::default();
    let cases = [(299.999, false), (300.0, true), (5000.0, true), (5000.001, false)];
    let intervals: Vec<IntervalResult> = (1..=16)
        .map(|q| {
            let r = cases[(q - 1) / 4].0;
            IntervalResult {
                q,
                block: grid.block_of(q),
                baseline_kw: 6000.0,
                reserve_kw: r,
                price_eur_per_mw: Some(1.0),
                eligible: true,
                status: None,
                daf: false,
                shifted_energy_kwh: 0.0,
                buffer_margin_m3: 0.0,
                solve_seconds: 0.0,
                contingency: None,
            }
        })
        .collect();
    for (b, (cap, ok)) in bid_blocks(&intervals, &grid, &p).iter().zip(cases) {
        ensure(b.eligible == ok, || format!("{cap} kW marked eligible={}", b.eligible))?;
    }
    let mut eligible = 0;
    for lr in &d.reserve {
        for b in &lr.blocks {
            let inside = b.capacity_kw >= p.min_bid_kw && b.capacity_kw <= p.max_bid_kw;
            ensure(b.eligible == inside, || format!("line {} block {}: {} kW eligible={}", lr.line, b.block, b.capacity_kw, b.eligible))?;
            eligible += usize::from(b.eligible);
        }
    }
    Ok(format!("gates at 300 and 5000 kW; {eligible} eligible demo blocks"))
}

fn small_run_dir(root: &Path) -> PathBuf {
    let cycle = vec![time_stage(1800.0), energy_stage(250.0, 250.0), tap_stage(600.0)];
    let inst = single_furnace(vec![cycle.clone(), cycle]);
    std::fs::write(root.join("plant.json"), inst.to_json_pretty()).unwrap();
    let prices = "interval_start,price_eur_mwh\n0,40\n3600,25\n7200,55\n10800,30\n";
    std::fs::write(root.join("prices.csv"), prices).unwrap();
    let cfg = "instance = \"plant.json\"\n[prices]\nday_ahead = \"prices.csv\"\n[grid]\nhorizon_s = 14400\nblock_s = 3600\n";
    std::fs::write(root.join("run.toml"), cfg).unwrap();
    root.join("run.toml")
}

fn dsm(cfg: &Path, out: &Path, args: &[&str]) -> Result<(), String> {
    let st = Command::new(env!("CARGO_BIN_EXE_dsm"))
        .arg("-c")
        .arg(cfg)
        .arg("-o")
        .arg(out)
        .args(["-j", "1"])
        .args(args)
        .env_remove("DSM_SOLVER")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(st.status.success(), || format!("dsm {args:?}: {}", String::from_utf8_lossy(&st.stderr)))
}

fn c11_determinism(d: &Demo) -> Outcome {
    for li in 0..d.instance.lines.len() {
        let a = eas::build_eas_model(&d.instance, li, &d.grid, &d.prices, &EasConfig::default()).map_err(|e| e.to_string())?;
        let b = eas::build_eas_model(&d.instance, li, &d.grid, &d.prices, &EasConfig::default()).map_err(|e| e.to_string())?;
        for fmt in [ModelFormat::Mps, ModelFormat::Lp] {
            let (x, y) = (emit_model(a.milp(), fmt).map_err(|e| e.to_string())?, emit_model(b.milp(), fmt).map_err(|e| e.to_string())?);
            ensure(x == y, || format!("line {li}: {fmt:?} output differs between builds"))?;
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = small_run_dir(dir.path());
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        dsm(&cfg, &out, &["eas"])?;
        dsm(&cfg, &out, &["reserve"])?;
        let read = |n: &str| std::fs::read(out.join(n)).map_err(|e| e.to_string());
        files.push((read("schedule.json")?, read("bids.json")?));
    }
    ensure(files[0] == files[1], || "two pipeline runs wrote different schedule or bid files".into())?;
    Ok("model files byte-stable; two pipeline runs wrote identical schedule and bid files".into())
}

fn c12_tou() -> Outcome {
    let (off, shoulder, peak) = (27.04, 33.15, 39.39);
    let summer = |h: usize| match h {
        6..=7 | 12..=20 => shoulder,
        8..=11 => peak,
        _ => off,
    };
    let winter = |h: usize| match h {
        6..=7 | 12..=16 | 19..=20 => shoulder,
        8..=11 | 17..=18 => peak,
        _ => off,
    };
    for (season, expect) in [(Season::Summer, &summer as &dyn Fn(usize) -> f64), (Season::Winter, &winter)] {
        let t = TouTariff::danish(season);
        let week = tou_series(&t, DayType::Weekday);
        let weekend = tou_series(&t, DayType::Weekend);
        for h in 0..24 {
            ensure(week.values[h] == expect(h), || format!("{season:?} weekday hour {h}: {}", week.values[h]))?;
            ensure(weekend.values[h] == off, || format!("{season:?} weekend hour {h}: {}", weekend.values[h]))?;
        }
    }
    Ok("summer and winter weekday/weekend series match the tariff table".into())
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = t.elapsed().as_secs_f64();
    match &r {
        Ok(msg) => println!("criterion {n:>2} {name}: PASS ({msg}) [{secs:.0}s]"),
        Err(msg) => println!("criterion {n:>2} {name}: FAIL ({msg}) [{secs:.0}s]"),
    }
    r.is_ok()
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    // `cargo test -- --list` and filters: this target has a single entry.
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    // Numeric arguments select criteria.
    let only: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let selected = |n: usize| only.is_empty() || only.contains(&n);
    const NEEDS_DEMO: [usize; 8] = [1, 3, 5, 6, 7, 8, 10, 11];
    println!("running acceptance criteria");
    let demo = if NEEDS_DEMO.iter().any(|&n| selected(n)) {
        let t = Instant::now();
        let d = Demo::solve();
        println!("demo schedule and reserve day solved in {:.0}s", t.elapsed().as_secs_f64());
        d
    } else {
        Err("not solved".into())
    };
    let need = |f: fn(&Demo) -> Outcome| {
        let d = &demo;
        move || d.as_ref().map_err(|e| format!("demo solve failed: {e}")).and_then(f)
    };
    let criteria: Vec<(usize, &str, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        (1, "feasibility", Box::new(need(c1_feasibility))),
        (2, "greedy oracle", Box::new(c2_greedy_oracle)),
        (3, "MCT dominance", Box::new(need(c3_mct_dominance))),
        (4, "flat-price fixed point", Box::new(c4_flat_price)),
        (5, "window soundness", Box::new(need(c5_windows))),
        (6, "warm-start dominance", Box::new(need(c6_warm_start))),
        (7, "reserve bounds and monotonicity", Box::new(need(c7_reserve))),
        (8, "DAF dominance", Box::new(need(c8_daf))),
        (9, "aggregation oracle", Box::new(c9_aggregation)),
        (10, "bid gates", Box::new(need(c10_gates))),
        (11, "determinism", Box::new(need(c11_determinism))),
        (12, "TOU reproduction", Box::new(c12_tou)),
    ];
    let mut passed = 0;
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected(n) {
            continue;
        }
        if run(n, name, f) {
            passed += 1;
        } else {
            failed += 1;
        }
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
