//! Time discretizations and per-stage reachable windows.
//!
//! All step indices exposed here are 1-based: step `k` covers the interval
//! `((k - 1) * dt, k * dt]`. Window bounds are *boundary* indices: boundary
//! `b` is the instant `b * dt`, so a stage with window `(k_min, k_max)` may
//! occupy steps `k_min + 1 ..= k_max`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{PlantInstance, StageKind, StageSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("duration `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: u64 },
    #[error("{divisor_name} = {divisor} s does not divide {dividend_name} = {dividend} s")]
    NonDivisible {
        divisor_name: &'static str,
        divisor: u64,
        dividend_name: &'static str,
        dividend: u64,
    },
    #[error("infeasible horizon: stage (furnace {furnace}, cycle {cycle}, stage {stage}) has k_min {k_min} > k_max {k_max}")]
    InfeasibleHorizon {
        furnace: usize,
        cycle: usize,
        stage: usize,
        k_min: usize,
        k_max: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step_seconds: u64,
    pub horizon_steps: usize,
    pub settlement_steps: usize,
    pub market_step_seconds: u64,
    pub reserve_block_steps: usize,
}

/// Build a grid and check the divisibility chain
/// `step | settlement | block`, `step | market`, and that the horizon is a
/// whole number of settlement intervals, market intervals and blocks.
pub fn build_time_grid(
    step_seconds: u64,
    horizon_seconds: u64,
    settlement_seconds: u64,
    market_seconds: u64,
    block_seconds: u64,
) -> Result<TimeGrid, GridError> {
    for (name, value) in [
        ("step_seconds", step_seconds),
        ("horizon_seconds", horizon_seconds),
        ("settlement_seconds", settlement_seconds),
        ("market_seconds", market_seconds),
        ("block_seconds", block_seconds),
    ] {
        if value == 0 {
            return Err(GridError::NonPositive { name, value });
        }
    }
    let pairs = [
        ("step_seconds", step_seconds, "settlement_seconds", settlement_seconds),
        ("step_seconds", step_seconds, "market_seconds", market_seconds),
        ("settlement_seconds", settlement_seconds, "block_seconds", block_seconds),
        ("settlement_seconds", settlement_seconds, "horizon_seconds", horizon_seconds),
        ("market_seconds", market_seconds, "horizon_seconds", horizon_seconds),
        ("block_seconds", block_seconds, "horizon_seconds", horizon_seconds),
    ];
    for (divisor_name, divisor, dividend_name, dividend) in pairs {
        if dividend % divisor != 0 {
            return Err(GridError::NonDivisible {
                divisor_name,
                divisor,
                dividend_name,
                dividend,
            });
        }
    }
    Ok(TimeGrid {
        step_seconds,
        horizon_steps: (horizon_seconds / step_seconds) as usize,
        settlement_steps: (settlement_seconds / step_seconds) as usize,
        market_step_seconds: market_seconds,
        reserve_block_steps: (block_seconds / step_seconds) as usize,
    })
}

impl TimeGrid {
    /// Table-1 discretization: 5 min steps, 15 min settlement, hourly market,
    /// 4 h reserve blocks over one day.
    pub fn table1() -> TimeGrid {
        build_time_grid(300, 86_400, 900, 3600, 14_400).expect("static grid")
    }

    pub fn step_hours(&self) -> f64 {
        self.step_seconds as f64 / 3600.0
    }

    pub fn settlement_hours(&self) -> f64 {
        (self.settlement_steps as u64 * self.step_seconds) as f64 / 3600.0
    }

    pub fn horizon_seconds(&self) -> u64 {
        self.horizon_steps as u64 * self.step_seconds
    }

    pub fn num_settlements(&self) -> usize {
        self.horizon_steps / self.settlement_steps
    }

    pub fn settlements_per_block(&self) -> usize {
        self.reserve_block_steps / self.settlement_steps
    }

    pub fn num_blocks(&self) -> usize {
        self.horizon_steps / self.reserve_block_steps
    }

    /// 1-based settlement interval containing step `k`.
    pub fn settlement_of(&self, k: usize) -> usize {
        (k - 1) / self.settlement_steps + 1
    }

    /// 1-based block containing settlement interval `q`.
    pub fn block_of(&self, q: usize) -> usize {
        (q - 1) / self.settlements_per_block() + 1
    }

    /// Steps needed to deliver `energy_kwh` at `p_max_kw`.
    pub fn energy_steps(&self, energy_kwh: f64, p_max_kw: f64) -> usize {
        ceil_steps(energy_kwh / (p_max_kw * self.step_hours()))
    }

    /// Steps needed to cover `seconds`.
    pub fn duration_steps(&self, seconds: f64) -> usize {
        ceil_steps(seconds / self.step_seconds as f64)
    }

    /// Same grid with a different block length; used to compare bid granularities.
    pub fn with_block_seconds(&self, block_seconds: u64) -> Result<TimeGrid, GridError> {
        build_time_grid(
            self.step_seconds,
            self.horizon_seconds(),
            self.settlement_steps as u64 * self.step_seconds,
            self.market_step_seconds,
            block_seconds,
        )
    }
}

// Ratios such as 1000 / (2000 * 300 / 3600) are integral in exact arithmetic but
// land a few ulps above the integer in floating point.
fn ceil_steps(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// `𝒦_q` for every settlement interval, 1-based.
pub fn settlement_slots(grid: &TimeGrid) -> Vec<Vec<usize>> {
    let n = grid.settlement_steps;
    (0..grid.num_settlements())
        .map(|q| (q * n + 1..=(q + 1) * n).collect())
        .collect()
}

/// `𝒬_d` for every bid block, 1-based.
pub fn block_slots(grid: &TimeGrid) -> Vec<Vec<usize>> {
    let per = grid.settlements_per_block();
    (0..grid.num_blocks())
        .map(|d| (d * per + 1..=(d + 1) * per).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StageKey {
    pub furnace: usize,
    pub cycle: usize,
    pub stage: usize,
}

impl StageKey {
    pub fn new(furnace: usize, cycle: usize, stage: usize) -> StageKey {
        StageKey { furnace, cycle, stage }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageWindow {
    pub k_min: usize,
    pub k_max: usize,
}

#[derive(Debug, Clone, Default)]
pub struct WindowOptions {
    /// Cycles (per furnace index, 1-based cycle numbers) that may spill into the
    /// next day. They do not reserve room at the end of the horizon.
    pub relaxed: BTreeMap<usize, Vec<usize>>,
}

/// Minimum number of steps a stage occupies.
pub fn min_steps(stage: &StageSpec, grid: &TimeGrid) -> usize {
    match stage.kind {
        StageKind::Energy => grid.energy_steps(stage.min_energy_kwh, stage.p_max_kw),
        StageKind::Time => grid.duration_steps(stage.min_duration_s),
    }
}

/// Earliest start / latest finish boundaries for every stage, keyed by
/// 1-based (furnace, cycle, stage). A stage whose own minimum length does not
/// fit between its bounds makes the horizon infeasible.
pub fn stage_windows(
    instance: &PlantInstance,
    grid: &TimeGrid,
) -> Result<BTreeMap<StageKey, StageWindow>, GridError> {
    stage_windows_with(instance, grid, &WindowOptions::default())
}

pub fn stage_windows_with(
    instance: &PlantInstance,
    grid: &TimeGrid,
    options: &WindowOptions,
) -> Result<BTreeMap<StageKey, StageWindow>, GridError> {
    let k = grid.horizon_steps;
    let mut out = BTreeMap::new();
    for (fi, furnace) in instance.furnaces.iter().enumerate() {
        let f = fi + 1;
        let release = instance.release_step(fi);
        let relaxed = options.relaxed.get(&f);
        let seq: Vec<(usize, usize, usize, bool)> = furnace
            .cycles
            .iter()
            .enumerate()
            .flat_map(|(mi, cycle)| {
                let is_relaxed = relaxed.is_some_and(|r| r.contains(&(mi + 1)));
                cycle
                    .stages
                    .iter()
                    .enumerate()
                    .map(move |(ji, s)| (mi + 1, ji + 1, min_steps(s, grid), is_relaxed))
            })
            .collect();
        let mut before = release;
        let mut after: usize = seq.iter().filter(|s| !s.3).map(|s| s.2).sum();
        for &(m, j, steps, is_relaxed) in &seq {
            if !is_relaxed {
                after -= steps;
            }
            let mut k_min = before;
            let k_max = k.saturating_sub(after);
            if is_relaxed {
                // A relaxed stage that cannot start today is simply shifted.
                k_min = k_min.min(k_max);
            } else if k_min + steps > k_max || after + steps > k {
                return Err(GridError::InfeasibleHorizon {
                    furnace: f,
                    cycle: m,
                    stage: j,
                    k_min,
                    k_max,
                });
            }
            out.insert(StageKey::new(f, m, j), StageWindow { k_min, k_max });
            before += steps;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::testing::{energy_stage, single_furnace, time_stage};

    #[test]
    fn table1_grid() {
        let g = build_time_grid(300, 86_400, 900, 3600, 14_400).unwrap();
        assert_eq!(g.horizon_steps, 288);
        assert_eq!(g.settlement_steps, 3);
        assert_eq!(g.num_settlements(), 96);
        assert_eq!(g.num_blocks(), 6);
        assert_eq!(g, TimeGrid::table1());
    }

    #[test]
    fn quarter_hour_grid_collapses_averaging() {
        let g = build_time_grid(900, 86_400, 900, 3600, 3600).unwrap();
        assert_eq!(g.horizon_steps, 96);
        assert_eq!(g.settlement_steps, 1);
        assert_eq!(g.num_blocks(), 24);
    }

    #[test]
    fn non_divisible_names_pair() {
        let err = build_time_grid(420, 86_400, 900, 3600, 14_400).unwrap_err();
        assert_eq!(
            err,
            GridError::NonDivisible {
                divisor_name: "step_seconds",
                divisor: 420,
                dividend_name: "settlement_seconds",
                dividend: 900,
            }
        );
        assert!(err.to_string().contains("420"));
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(matches!(
            build_time_grid(0, 86_400, 900, 3600, 14_400),
            Err(GridError::NonPositive { .. })
        ));
    }

    #[test]
    fn slots_partition() {
        let g = build_time_grid(300, 1800, 900, 900, 900).unwrap();
        assert_eq!(settlement_slots(&g), vec![vec![1, 2, 3], vec![4, 5, 6]]);
        let t1 = TimeGrid::table1();
        let blocks = block_slots(&t1);
        assert_eq!(blocks.len(), 6);
        assert!(blocks.iter().all(|b| b.len() == 16));
        let g1 = build_time_grid(900, 86_400, 900, 3600, 3600).unwrap();
        let s = settlement_slots(&g1);
        assert!(s.iter().enumerate().all(|(i, ks)| ks == &vec![i + 1]));
    }

    #[test]
    fn windows_two_stage_example() {
        let inst = single_furnace(vec![vec![time_stage(600.0), energy_stage(1000.0, 2000.0)]]);
        let g = TimeGrid::table1();
        let w = stage_windows(&inst, &g).unwrap();
        assert_eq!(g.energy_steps(1000.0, 2000.0), 6);
        assert_eq!(w[&StageKey::new(1, 1, 1)], StageWindow { k_min: 0, k_max: 282 });
        assert_eq!(w[&StageKey::new(1, 1, 2)], StageWindow { k_min: 2, k_max: 288 });
    }

    #[test]
    fn exact_energy_is_one_step() {
        let g = TimeGrid::table1();
        assert_eq!(g.energy_steps(2000.0 * 300.0 / 3600.0, 2000.0), 1);
        assert_eq!(g.energy_steps(1000.0, 3000.0), 4);
    }

    #[test]
    fn overfull_horizon() {
        let g = build_time_grid(300, 3000, 300, 300, 300).unwrap();
        // 10 steps available, cycles need 5 + 6.
        let inst = single_furnace(vec![vec![time_stage(1500.0)], vec![time_stage(1800.0)]]);
        assert!(matches!(
            stage_windows(&inst, &g),
            Err(GridError::InfeasibleHorizon { .. })
        ));
        let fits = single_furnace(vec![vec![time_stage(1500.0)], vec![time_stage(1500.0)]]);
        let w = stage_windows(&fits, &g).unwrap();
        assert_eq!(w[&StageKey::new(1, 2, 1)], StageWindow { k_min: 5, k_max: 10 });
    }

    #[test]
    fn relaxed_cycles_do_not_reserve_room() {
        let g = build_time_grid(300, 3000, 300, 300, 300).unwrap();
        let inst = single_furnace(vec![vec![time_stage(1500.0)], vec![time_stage(1800.0)]]);
        let mut opts = WindowOptions::default();
        opts.relaxed.insert(1, vec![2]);
        let w = stage_windows_with(&inst, &g, &opts).unwrap();
        assert_eq!(w[&StageKey::new(1, 1, 1)], StageWindow { k_min: 0, k_max: 10 });
        assert_eq!(w[&StageKey::new(1, 2, 1)], StageWindow { k_min: 5, k_max: 10 });
    }
}
