//! Reserve capacity bidding: per-interval capacity-reduction models on top of
//! the day-ahead schedule, bid blocks per reserve block, and internal
//! aggregation across casting lines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eas::{build_process, finish_line_schedule, line_cost, Bit, DafSpec, EasError, ProcessModel, ProcessOptions};
use crate::grid::{StageKey, TimeGrid};
use crate::milp::{self, Affine, MilpError, ObjSense, Sense, SolveOptions, SolveStatus, SolverProfile};
use crate::plant::{LineSchedule, PlantInstance};

pub mod aggregate;

pub use aggregate::{aggregate_closed_form, aggregate_exhaustive, aggregate_internal, build_aggregation_model, Aggregation, AggregatedBlock, LineBids};

#[derive(Debug, Error)]
pub enum ReserveError {
    #[error(transparent)]
    Eas(#[from] EasError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("unknown line `{0}`")]
    UnknownLine(String),
    #[error("{what} has {got} values, expected {expected}")]
    Length { what: &'static str, expected: usize, got: usize },
    #[error("line {line} q{q}: solver returned {status} without a usable solution")]
    NoSolution { line: String, q: usize, status: String },
    #[error("aggregation input: {0}")]
    BadBids(String),
}

/// When day-after flexibility (shifting relaxed cycles to the next day) is
/// offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DafMode {
    Never,
    FinalBlock,
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReserveParams {
    /// Standby reward `λ^re` in € per MW of capacity.
    pub reward_eur_per_mw: f64,
    /// Activation likelihood `Π` used to weight contingency costs.
    pub activation_probability: f64,
    /// Activation length in settlement intervals.
    pub activation_intervals: usize,
    pub min_bid_kw: f64,
    pub max_bid_kw: f64,
    pub up_penalty_factor: f64,
    pub down_penalty_factor: f64,
    /// Price `λ̄` (€/MWh) of energy shifted to the next day.
    pub shifted_energy_price: f64,
    pub max_shift_energy_kwh: Option<f64>,
    pub daf: DafMode,
    /// Settle both imbalance directions at the up-regulation price.
    pub one_price: bool,
    /// Add the expected payment for dispatched energy to the standby reward.
    pub pay_dispatched_energy: bool,
    pub enable_windows: bool,
}

impl Default for ReserveParams {
    fn default() -> Self {
        ReserveParams {
            reward_eur_per_mw: 10.0,
            activation_probability: 1.0 / 48.0,
            activation_intervals: 2,
            min_bid_kw: 300.0,
            max_bid_kw: 5000.0,
            up_penalty_factor: crate::market::UP_PENALTY_FACTOR,
            down_penalty_factor: crate::market::DOWN_PENALTY_FACTOR,
            shifted_energy_price: 100.0,
            max_shift_energy_kwh: None,
            daf: DafMode::FinalBlock,
            one_price: false,
            pay_dispatched_energy: false,
            enable_windows: true,
        }
    }
}

/// Per-step price inputs in €/MWh.
#[derive(Debug, Clone)]
pub struct ReservePrices {
    pub day_ahead: Vec<f64>,
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl ReservePrices {
    /// Penalty prices derived from the day-ahead series by fixed factors.
    pub fn from_day_ahead(day_ahead: Vec<f64>, params: &ReserveParams) -> ReservePrices {
        let (up, down) = crate::market::penalty_series(&day_ahead, params.up_penalty_factor, params.down_penalty_factor);
        ReservePrices { day_ahead, up, down }
    }

    fn check(&self, grid: &TimeGrid) -> Result<(), ReserveError> {
        for (what, v) in [("day-ahead prices", &self.day_ahead), ("up prices", &self.up), ("down prices", &self.down)] {
            if v.len() != grid.horizon_steps {
                return Err(ReserveError::Length { what, expected: grid.horizon_steps, got: v.len() });
            }
        }
        Ok(())
    }

    /// Mean of a per-step series over settlement interval `q`.
    fn interval_mean(series: &[f64], grid: &TimeGrid, q: usize) -> f64 {
        let nq = grid.settlement_steps;
        series[(q - 1) * nq..q * nq].iter().sum::<f64>() / nq as f64
    }
}

#[derive(Debug, Clone)]
pub struct ReserveModel {
    pub process: ProcessModel,
    pub q: usize,
    /// Last interval of the capacity reduction.
    pub q_end: usize,
    pub reserve: milp::VarId,
    /// Contingency cost in € (imbalance and shifted energy, unweighted).
    pub cost: Affine,
    pub daf: bool,
}

/// Whether day-after flexibility applies to interval `q`.
pub fn daf_applies(instance: &PlantInstance, grid: &TimeGrid, params: &ReserveParams, q: usize) -> bool {
    if instance.furnaces.iter().all(|f| f.daf_relaxed_cycles.is_empty()) {
        return false;
    }
    match params.daf {
        DafMode::Never => false,
        DafMode::Always => true,
        DafMode::FinalBlock => grid.block_of(q) == grid.num_blocks(),
    }
}

/// Scheduled stage durations in steps; the last stage runs to the horizon.
fn scheduled_steps(ls: &LineSchedule, grid: &TimeGrid) -> BTreeMap<StageKey, usize> {
    let mut out = BTreeMap::new();
    for (i, s) in ls.stages.iter().enumerate() {
        let Some(start) = s.start_step else { continue };
        let next = ls.stages.get(i + 1).filter(|n| n.furnace == s.furnace).and_then(|n| n.start_step);
        let end = next.unwrap_or(grid.horizon_steps + 1);
        out.insert(StageKey::new(s.furnace, s.cycle, s.stage), end - start);
    }
    out
}

/// Build the capacity-reduction model for interval `q` of line `li`, with
/// every decision before `q` fixed to the day-ahead schedule.
pub fn build_reserve_model(
    instance: &PlantInstance,
    li: usize,
    grid: &TimeGrid,
    eas: &LineSchedule,
    prices: &ReservePrices,
    params: &ReserveParams,
    q: usize,
) -> Result<ReserveModel, ReserveError> {
    prices.check(grid)?;
    let nq = grid.settlement_steps;
    let nqs = grid.num_settlements();
    let daf = daf_applies(instance, grid, params, q);
    let opts = ProcessOptions {
        windows: params.enable_windows,
        daf: daf.then(|| DafSpec {
            scheduled_steps: scheduled_steps(eas, grid),
            max_shift_energy_kwh: params.max_shift_energy_kwh,
        }),
        ..ProcessOptions::default()
    };
    let mut process = build_process(instance, li, grid, &opts)?;
    let fixed = process.assignment(instance, &eas.stages);
    fix_prefix(&mut process, &fixed, (q - 1) * nq);

    let pbl = &eas.baseline_kw;
    let include_holding = eas.baseline_includes_holding;
    let block_end = grid.block_of(q) * grid.settlements_per_block();
    let q_end = (q + params.activation_intervals.max(1) - 1).min(block_end);
    let counted = process_power(&process.furnace_power, &process.holding, include_holding);
    let r = process.model.continuous(format!("R_q{q}"), 0.0, pbl[q - 1])?;
    for qq in q..=q_end {
        let mut e = process_baseline(&counted, grid, qq);
        e.add_term(r, 1.0);
        process.model.add_constraint(format!("cut_q{qq}"), &e, Sense::Le, pbl[qq - 1])?;
    }
    let hours = grid.settlement_hours();
    let mut cost = Affine::default();
    for qq in q_end + 1..=nqs {
        let b = pbl[qq - 1];
        let m = &mut process.model;
        let plus = m.continuous(format!("pbl_plus_q{qq}"), 0.0, b)?;
        let minus = m.continuous(format!("pbl_minus_q{qq}"), -b, 0.0)?;
        let mut e = process_baseline(&counted, grid, qq);
        e.add_term(plus, -1.0);
        e.add_term(minus, -1.0);
        m.add_constraint(format!("rebound_q{qq}"), &e, Sense::Eq, b)?;
        if !params.one_price {
            let nu = m.binary(format!("nu_q{qq}"))?;
            m.add_constraint(format!("up_q{qq}"), &Affine { terms: vec![(plus, 1.0), (nu, -b)], constant: 0.0 }, Sense::Le, 0.0)?;
            m.add_constraint(format!("down_q{qq}"), &Affine { terms: vec![(minus, 1.0), (nu, -b)], constant: 0.0 }, Sense::Ge, -b)?;
        }
        let up = ReservePrices::interval_mean(&prices.up, grid, qq);
        let down = if params.one_price { up } else { ReservePrices::interval_mean(&prices.down, grid, qq) };
        cost.add_term(plus, up * hours / 1000.0);
        cost.add_term(minus, -down * hours / 1000.0);
    }
    if let Some(de) = process.shifted_energy {
        cost.add_term(de, params.shifted_energy_price / 1000.0);
    }
    let mut reward = params.reward_eur_per_mw;
    if params.pay_dispatched_energy {
        let up = ReservePrices::interval_mean(&prices.up, grid, q);
        reward += params.activation_probability * up * hours * (q_end - q + 1) as f64;
    }
    let mut obj = Affine::var(r).scaled(reward / 1000.0);
    obj.add_scaled(&cost, -params.activation_probability);
    process.model.set_objective(ObjSense::Maximize, &obj);
    process.model.name = format!("reserve_{}_q{q}", instance.lines[li].id);
    Ok(ReserveModel { process, q, q_end, reserve: r, cost, daf })
}

fn process_power(furnace: &[Affine], holding: &[Affine], include_holding: bool) -> Vec<Affine> {
    furnace
        .iter()
        .zip(holding)
        .map(|(p, h)| {
            let mut e = p.clone();
            if include_holding {
                e.add_scaled(h, 1.0);
            }
            e
        })
        .collect()
}

fn process_baseline(power: &[Affine], grid: &TimeGrid, q: usize) -> Affine {
    let nq = grid.settlement_steps;
    let mut e = Affine::default();
    for k in (q - 1) * nq + 1..=q * nq {
        e.add_scaled(&power[k - 1], 1.0 / nq as f64);
    }
    e
}

fn fix_prefix(process: &mut ProcessModel, values: &BTreeMap<String, f64>, through: usize) {
    let mut ids = Vec::new();
    for s in &process.stages {
        for k in 1..=through {
            if let Bit::Var(v) = s.x[k - 1] {
                ids.push(v);
            }
            ids.extend(s.p[k - 1]);
            ids.extend(s.y[k - 1]);
        }
    }
    for v in ids {
        let name = &process.model.variables[v.0].name;
        let x = values.get(name).copied().unwrap_or(0.0);
        process.model.set_bounds(v, x, x);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub q: usize,
    pub block: usize,
    pub baseline_kw: f64,
    pub reserve_kw: f64,
    /// Contingency cost per MW of capacity, `None` when no capacity is offered.
    pub price_eur_per_mw: Option<f64>,
    pub eligible: bool,
    pub status: Option<SolveStatus>,
    pub daf: bool,
    pub shifted_energy_kwh: f64,
    /// Extra buffer floor implied by shifted stages.
    pub buffer_margin_m3: f64,
    pub solve_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contingency: Option<LineSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidBlock {
    pub block: usize,
    pub capacity_kw: f64,
    pub price_eur_per_mw: Option<f64>,
    pub eligible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineReserve {
    pub line: String,
    pub intervals: Vec<IntervalResult>,
    pub blocks: Vec<BidBlock>,
}

/// Solve the capacity-reduction model for interval `q`. Intervals with a zero
/// baseline are ineligible and skipped.
pub fn solve_interval(
    instance: &PlantInstance,
    li: usize,
    grid: &TimeGrid,
    eas: &LineSchedule,
    prices: &ReservePrices,
    params: &ReserveParams,
    q: usize,
    profile: &SolverProfile,
    options: &SolveOptions,
) -> Result<IntervalResult, ReserveError> {
    let baseline = eas.baseline_kw[q - 1];
    let mut out = IntervalResult {
        q,
        block: grid.block_of(q),
        baseline_kw: baseline,
        reserve_kw: 0.0,
        price_eur_per_mw: None,
        eligible: false,
        status: None,
        daf: false,
        shifted_energy_kwh: 0.0,
        buffer_margin_m3: 0.0,
        solve_seconds: 0.0,
        contingency: None,
    };
    if baseline <= 1e-9 {
        return Ok(out);
    }
    let model = build_reserve_model(instance, li, grid, eas, prices, params, q)?;
    let m = &model.process.model;
    let mut start = model.process.assignment(instance, &eas.stages);
    for v in &m.variables {
        start.entry(v.name.clone()).or_insert(0.0);
    }
    let opts = SolveOptions { warm_start: Some(start), ..options.clone() };
    let sol = milp::solve(m, profile, &opts)?;
    if !sol.has_values() {
        return Err(ReserveError::NoSolution {
            line: instance.lines[li].id.clone(),
            q,
            status: sol.status.as_str().to_string(),
        });
    }
    let dense = m.dense_values(&sol.values);
    let stages = model.process.extract_stages(instance, grid, &dense)?;
    let mut contingency = finish_line_schedule(instance, li, grid, stages, eas.baseline_includes_holding);
    contingency.objective_eur = line_cost(&contingency, &prices.day_ahead, grid);
    let r = dense[model.reserve.0];
    let r = if r < 1e-6 { 0.0 } else { r };
    let cost = model.cost.eval(&dense);
    out.reserve_kw = r;
    out.price_eur_per_mw = (r > 0.0).then(|| params.activation_probability * cost / (r / 1000.0));
    out.eligible = true;
    out.status = Some(sol.status);
    out.daf = model.daf;
    out.shifted_energy_kwh = model.process.shifted_energy.map_or(0.0, |v| dense[v.0]);
    out.buffer_margin_m3 = model.process.buffer_margin.eval(&dense).max(0.0);
    out.solve_seconds = sol.solve_seconds;
    out.contingency = Some(contingency);
    Ok(out)
}

/// Bid blocks: capacity is the smallest interval capacity of the block and the
/// price the largest finite interval price; capacities outside the market
/// gates are ineligible.
pub fn bid_blocks(intervals: &[IntervalResult], grid: &TimeGrid, params: &ReserveParams) -> Vec<BidBlock> {
    (1..=grid.num_blocks())
        .map(|d| {
            let qs: Vec<&IntervalResult> = intervals.iter().filter(|r| r.block == d).collect();
            let capacity = if qs.iter().all(|r| r.eligible) && !qs.is_empty() {
                qs.iter().map(|r| r.reserve_kw).fold(f64::INFINITY, f64::min)
            } else {
                0.0
            };
            let price = qs.iter().filter_map(|r| r.price_eur_per_mw).filter(|p| p.is_finite()).reduce(f64::max);
            let note = if capacity < params.min_bid_kw {
                Some(format!("capacity below the {} kW minimum bid", params.min_bid_kw))
            } else if capacity > params.max_bid_kw {
                Some(format!("capacity above the {} kW maximum bid", params.max_bid_kw))
            } else {
                None
            };
            BidBlock {
                block: d,
                capacity_kw: capacity,
                price_eur_per_mw: if capacity > 0.0 { price.or(Some(0.0)) } else { None },
                eligible: note.is_none(),
                note,
            }
        })
        .collect()
}

/// Solve every interval of every line, up to `jobs` models at a time.
#[allow(clippy::too_many_arguments)]
pub fn solve_reserve_day(
    instance: &PlantInstance,
    grid: &TimeGrid,
    eas: &[LineSchedule],
    prices: &ReservePrices,
    params: &ReserveParams,
    profile: &SolverProfile,
    options: &SolveOptions,
    jobs: usize,
) -> Result<Vec<LineReserve>, ReserveError> {
    prices.check(grid)?;
    let mut work = Vec::new();
    let mut lines = Vec::new();
    for ls in eas {
        let li = instance.line_index(&ls.line).ok_or_else(|| ReserveError::UnknownLine(ls.line.clone()))?;
        if ls.baseline_kw.len() != grid.num_settlements() {
            return Err(ReserveError::Length {
                what: "baseline",
                expected: grid.num_settlements(),
                got: ls.baseline_kw.len(),
            });
        }
        lines.push(li);
        for q in 1..=grid.num_settlements() {
            work.push((li, ls, q));
        }
    }
    let results = crate::par::map(&work, jobs, |&(li, ls, q)| {
        let r = solve_interval(instance, li, grid, ls, prices, params, q, profile, options);
        if let Ok(r) = &r {
            log::info!("line {} q{q}: R = {:.1} kW", ls.line, r.reserve_kw);
        }
        r
    });
    let mut results = results.into_iter();
    let mut out = Vec::new();
    for (ls, _) in eas.iter().zip(&lines) {
        let intervals = results.by_ref().take(grid.num_settlements()).collect::<Result<Vec<_>, _>>()?;
        let blocks = bid_blocks(&intervals, grid, params);
        out.push(LineReserve { line: ls.line.clone(), intervals, blocks });
    }
    Ok(out)
}
