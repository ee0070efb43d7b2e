//! Day-ahead energy-aware scheduling (EAS): minimum-cost schedules per casting
//! line, optional reserve floor, minimum-completion-time mode and a
//! per-power-unit decomposition used as a warm start.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, TimeGrid};
use crate::milp::{self, Affine, MilpError, MilpModel, ObjSense, SolveOptions, SolveStatus, SolverProfile, VarId};
use crate::plant::{LineSchedule, PlantInstance, Schedule, StageSchedule};

pub mod formulation;

pub use formulation::{build_process, finish_line_schedule, Bit, Committed, DafSpec, ProcessModel, ProcessOptions, StageVars};

#[derive(Debug, Error)]
pub enum EasError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("price series has {got} values, the grid needs {expected}")]
    MissingPrice { expected: usize, got: usize },
    #[error("unknown line `{0}`")]
    UnknownLine(String),
    #[error("line {0}: the solver proved the model infeasible")]
    Infeasible(String),
    #[error("line {line}: solver returned {status} without a usable solution")]
    NoSolution { line: String, status: String },
    #[error("decomposition not applicable: {0}")]
    DecompositionInapplicable(String),
    #[error("decomposition subproblem infeasible: {0}")]
    SubproblemInfeasible(String),
    #[error("schedule consumes no energy")]
    ZeroEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EasConfig {
    /// Weight `w` (€/kW) on the per-block reserve floor; 0 disables it.
    pub reserve_floor_weight: f64,
    pub enable_windows: bool,
    /// Minimise completion time instead of cost: every price is 1.
    pub mct_mode: bool,
    pub baseline_includes_holding: bool,
}

impl Default for EasConfig {
    fn default() -> Self {
        EasConfig { reserve_floor_weight: 0.0, enable_windows: true, mct_mode: false, baseline_includes_holding: true }
    }
}

#[derive(Debug, Clone)]
pub struct EasModel {
    pub process: ProcessModel,
    /// Per-block floor variables, empty when the floor is disabled.
    pub floor: Vec<VarId>,
    /// Baseline power per settlement interval, indexed by `q - 1`.
    pub baseline: Vec<Affine>,
}

impl EasModel {
    pub fn milp(&self) -> &MilpModel {
        &self.process.model
    }
}

fn check_prices(prices: &[f64], grid: &TimeGrid) -> Result<(), EasError> {
    if prices.len() != grid.horizon_steps {
        return Err(EasError::MissingPrice { expected: grid.horizon_steps, got: prices.len() });
    }
    Ok(())
}

/// Per-step cost coefficient in €/kW: `λ_k / 1000 · δt_h`.
fn step_cost(prices: &[f64], grid: &TimeGrid, mct: bool) -> Vec<f64> {
    prices.iter().map(|&l| if mct { 1.0 } else { l } / 1000.0 * grid.step_hours()).collect()
}

pub fn build_eas_model(
    instance: &PlantInstance,
    li: usize,
    grid: &TimeGrid,
    prices: &[f64],
    config: &EasConfig,
) -> Result<EasModel, EasError> {
    let opts = ProcessOptions { windows: config.enable_windows, ..ProcessOptions::default() };
    build_with(instance, li, grid, prices, config, &opts)
}

fn build_with(
    instance: &PlantInstance,
    li: usize,
    grid: &TimeGrid,
    prices: &[f64],
    config: &EasConfig,
    opts: &ProcessOptions,
) -> Result<EasModel, EasError> {
    check_prices(prices, grid)?;
    let mut process = build_process(instance, li, grid, opts)?;
    let cost = step_cost(prices, grid, config.mct_mode);
    let mut obj = Affine::default();
    for k in 1..=grid.horizon_steps {
        obj.add_scaled(&process.total_power(k), cost[k - 1]);
    }
    let baseline: Vec<Affine> = (1..=grid.num_settlements())
        .map(|q| process.baseline_expr(grid, q, config.baseline_includes_holding))
        .collect();
    let mut floor = Vec::new();
    if config.reserve_floor_weight > 0.0 {
        let per_block = grid.settlements_per_block();
        for d in 1..=grid.num_blocks() {
            let v = process.model.continuous(format!("prf_d{d}"), 0.0, f64::INFINITY)?;
            for q in (d - 1) * per_block + 1..=d * per_block {
                let mut e = Affine::var(v);
                e.add_scaled(&baseline[q - 1], -1.0);
                process.model.add_constraint(format!("floor_d{d}_q{q}"), &e, milp::Sense::Le, 0.0)?;
            }
            obj.add_term(v, -config.reserve_floor_weight);
            floor.push(v);
        }
    }
    process.model.set_objective(ObjSense::Minimize, &obj);
    Ok(EasModel { process, floor, baseline })
}

/// Baseline `P^bl_q`: mean counted power over each settlement interval.
pub fn compute_baseline(ls: &LineSchedule, grid: &TimeGrid) -> Vec<f64> {
    let nq = grid.settlement_steps;
    (1..=grid.num_settlements())
        .map(|q| ((q - 1) * nq + 1..=q * nq).map(|k| ls.baseline_power(k)).sum::<f64>() / nq as f64)
        .collect()
}

/// Energy cost in € of a line's metered power (furnaces and holding).
pub fn line_cost(ls: &LineSchedule, prices: &[f64], grid: &TimeGrid) -> f64 {
    (1..=ls.horizon()).map(|k| ls.total_power(k) * prices[k - 1] / 1000.0).sum::<f64>() * grid.step_hours()
}

pub fn total_cost(schedule: &Schedule, prices: &[f64], grid: &TimeGrid) -> f64 {
    schedule.lines.iter().map(|l| line_cost(l, prices, grid)).sum()
}

/// Effective realized price in €/MWh.
pub fn efr(cost_eur: f64, energy_kwh: f64) -> Result<f64, EasError> {
    if energy_kwh.abs() < 1e-9 {
        return Err(EasError::ZeroEnergy);
    }
    Ok(cost_eur / (energy_kwh / 1000.0))
}

#[derive(Debug, Clone)]
pub struct LineOutcome {
    pub schedule: LineSchedule,
    pub status: SolveStatus,
    /// Objective of the solved model (equal to the energy cost unless a floor
    /// or completion-time pricing is active).
    pub model_objective: f64,
    pub gap: Option<f64>,
    pub solve_seconds: f64,
    pub num_vars: usize,
    pub num_binaries: usize,
    pub num_constraints: usize,
}

fn require_values(sol: &milp::MilpSolution, line: &str) -> Result<(), EasError> {
    match sol.status {
        SolveStatus::Infeasible => Err(EasError::Infeasible(line.to_string())),
        _ if sol.has_values() => Ok(()),
        s => Err(EasError::NoSolution { line: line.to_string(), status: s.as_str().to_string() }),
    }
}

fn solve_model(
    instance: &PlantInstance,
    grid: &TimeGrid,
    prices: &[f64],
    config: &EasConfig,
    model: &EasModel,
    profile: &SolverProfile,
    options: &SolveOptions,
) -> Result<LineOutcome, EasError> {
    let li = model.process.line;
    let line_id = &instance.lines[li].id;
    let m = model.milp();
    log::info!(
        "line {line_id}: {} vars ({} binary), {} rows",
        m.num_vars(),
        m.num_binaries(),
        m.constraints.len()
    );
    let sol = milp::solve(m, profile, options)?;
    require_values(&sol, line_id)?;
    let dense = m.dense_values(&sol.values);
    let stages = model.process.extract_stages(instance, grid, &dense)?;
    let mut schedule = finish_line_schedule(instance, li, grid, stages, config.baseline_includes_holding);
    schedule.objective_eur = line_cost(&schedule, prices, grid);
    Ok(LineOutcome {
        schedule,
        status: sol.status,
        model_objective: sol.objective.unwrap_or(f64::NAN),
        gap: sol.gap,
        solve_seconds: sol.solve_seconds,
        num_vars: m.num_vars(),
        num_binaries: m.num_binaries(),
        num_constraints: m.constraints.len(),
    })
}

pub fn solve_line(
    instance: &PlantInstance,
    li: usize,
    grid: &TimeGrid,
    prices: &[f64],
    config: &EasConfig,
    profile: &SolverProfile,
    options: &SolveOptions,
) -> Result<LineOutcome, EasError> {
    let model = build_eas_model(instance, li, grid, prices, config)?;
    solve_model(instance, grid, prices, config, &model, profile, options)
}

/// Solve every line independently, up to `jobs` at a time.
pub fn solve_plant(
    instance: &PlantInstance,
    grid: &TimeGrid,
    prices: &[f64],
    config: &EasConfig,
    profile: &SolverProfile,
    options: &SolveOptions,
    jobs: usize,
) -> Result<(Schedule, Vec<LineOutcome>), EasError> {
    let lines: Vec<usize> = (0..instance.lines.len()).collect();
    let results = crate::par::map(&lines, jobs, |&li| solve_line(instance, li, grid, prices, config, profile, options));
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let label = if config.mct_mode { "mct" } else { "eas" };
    let schedule = Schedule::from_lines(label, grid, outcomes.iter().map(|o| o.schedule.clone()).collect());
    Ok((schedule, outcomes))
}

/// As [`solve_plant`], warm-starting each line from its power-unit
/// decomposition.
pub fn solve_plant_decomposed(
    instance: &PlantInstance,
    grid: &TimeGrid,
    prices: &[f64],
    config: &EasConfig,
    profile: &SolverProfile,
    options: &SolveOptions,
    jobs: usize,
) -> Result<(Schedule, Vec<DecompositionOutcome>), EasError> {
    let lines: Vec<usize> = (0..instance.lines.len()).collect();
    let results = crate::par::map(&lines, jobs, |&li| {
        decompose_and_warmstart(instance, li, grid, prices, config, profile, options)
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let label = if config.mct_mode { "mct" } else { "eas" };
    let schedule = Schedule::from_lines(label, grid, outcomes.iter().map(|o| o.outcome.schedule.clone()).collect());
    Ok((schedule, outcomes))
}

/// Warm-start assignment for an EAS model reproducing `stages`.
pub fn warm_start(model: &EasModel, instance: &PlantInstance, stages: &[StageSchedule]) -> BTreeMap<String, f64> {
    let mut start = model.process.assignment(instance, stages);
    if !model.floor.is_empty() {
        let m = model.milp();
        let dense = m.dense_values(&start);
        let per_block = model.baseline.len() / model.floor.len();
        for (d, v) in model.floor.iter().enumerate() {
            let lo = (d * per_block..(d + 1) * per_block)
                .map(|q| model.baseline[q].eval(&dense))
                .fold(f64::INFINITY, f64::min);
            start.insert(m.variables[v.0].name.clone(), lo.max(0.0));
        }
    }
    start
}

#[derive(Debug, Clone)]
pub struct DecompositionOutcome {
    /// Merged sub-schedules, when they are feasible for the full model.
    pub incumbent: Option<LineSchedule>,
    pub incumbent_objective: Option<f64>,
    pub subproblems: usize,
    pub outcome: LineOutcome,
}

/// Solve one sub-model per power unit with proportional shares of the line's
/// buffer, cast demand, caps and ladles, merge the results and warm-start the
/// full line model from the merge.
pub fn decompose_and_warmstart(
    instance: &PlantInstance,
    li: usize,
    grid: &TimeGrid,
    prices: &[f64],
    config: &EasConfig,
    profile: &SolverProfile,
    options: &SolveOptions,
) -> Result<DecompositionOutcome, EasError> {
    check_prices(prices, grid)?;
    let line_furnaces = instance.line_furnaces(li);
    let mut units: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &fi in &line_furnaces {
        units.entry(instance.furnaces[fi].power_unit_id.as_str()).or_default().push(fi);
    }
    for unit in units.keys() {
        if instance.unit_furnaces(unit).iter().any(|f| !line_furnaces.contains(f)) {
            return Err(EasError::DecompositionInapplicable(format!(
                "power unit {unit} feeds furnaces on more than one line"
            )));
        }
    }
    let full = build_eas_model(instance, li, grid, prices, config)?;
    if units.len() == 1 {
        let outcome = solve_model(instance, grid, prices, config, &full, profile, options)?;
        return Ok(DecompositionOutcome {
            incumbent: Some(outcome.schedule.clone()),
            incumbent_objective: Some(outcome.model_objective),
            subproblems: 1,
            outcome,
        });
    }
    let sub_config = EasConfig { reserve_floor_weight: 0.0, ..config.clone() };
    let mut merged: Vec<StageSchedule> = Vec::new();
    let mut done: Vec<usize> = Vec::new();
    for (i, (unit, members)) in units.iter().enumerate() {
        // Units are solved in turn. Later units see the ladle trips of earlier
        // ones; the last also sees the whole buffer with their taps fixed, so
        // the merge satisfies the line constraints by construction.
        let committed = (i > 0).then(|| Committed {
            furnaces: done.clone(),
            stages: merged.clone(),
            full_buffer: i + 1 == units.len(),
        });
        let opts = ProcessOptions {
            windows: config.enable_windows,
            furnaces: Some(members.clone()),
            share: members.len() as f64 / line_furnaces.len() as f64,
            daf: None,
            committed,
        };
        done.extend(members);
        let sub = build_with(instance, li, grid, prices, &sub_config, &opts)?;
        let sol = milp::solve(sub.milp(), profile, options)?;
        if !sol.has_values() {
            return Err(EasError::SubproblemInfeasible(format!("power unit {unit}: {}", sol.status.as_str())));
        }
        let dense = sub.milp().dense_values(&sol.values);
        merged.extend(sub.process.extract_stages(instance, grid, &dense)?);
    }
    let start = warm_start(&full, instance, &merged);
    let dense = full.milp().dense_values(&start);
    let violation = full.milp().max_violation(&dense);
    let (incumbent, incumbent_objective, warm) = if violation <= 1e-6 {
        let mut ls = finish_line_schedule(instance, li, grid, merged, config.baseline_includes_holding);
        ls.objective_eur = line_cost(&ls, prices, grid);
        (Some(ls), Some(full.milp().objective_value(&dense)), Some(start))
    } else {
        log::warn!("merged sub-schedules violate the full model by {violation:.3e}; solving cold");
        (None, None, None)
    };
    let opts = SolveOptions { warm_start: warm, ..options.clone() };
    let outcome = solve_model(instance, grid, prices, config, &full, profile, &opts)?;
    Ok(DecompositionOutcome { incumbent, incumbent_objective, subproblems: units.len(), outcome })
}
