//! Independent re-check of a schedule against every process constraint.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    cast_volume, heat_loss_energy, LineSchedule, LossTerm, PlantError, PlantInstance, Schedule,
    StageKind, StageSchedule,
};
use crate::grid::{min_steps, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    StageOrder,
    StageDuration,
    EnergyCompletion,
    PowerOutsideStage,
    StagePowerBounds,
    SemiContinuity,
    PowerUnitCap,
    GlobalCap,
    Ramp,
    SplashOverflow,
    BufferIdentity,
    BufferBounds,
    HoldingPower,
    LadleCount,
    Reheat,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub family: Family,
    /// Human-readable indices, e.g. `line L1 f2 m1 j3 k40`.
    pub at: String,
    /// Amount by which the bound is exceeded, in the constraint's own unit.
    pub excess: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: exceeded by {:.6e}", self.family, self.at, self.excess)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, family: Family) -> usize {
        self.violations.iter().filter(|v| v.family == family).count()
    }
}

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    pub tol: f64,
    /// Allow the instance's relaxed cycles to be partially or fully shifted.
    pub allow_shift: bool,
    /// Extra buffer floor per line id.
    pub buffer_margin: BTreeMap<String, f64>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions { tol: 1e-6, allow_shift: false, buffer_margin: BTreeMap::new() }
    }
}

struct Ctx<'a> {
    grid: &'a TimeGrid,
    tol: f64,
    out: Vec<Violation>,
}

impl Ctx<'_> {
    fn check(&mut self, family: Family, excess: f64, at: impl FnOnce() -> String) {
        if excess > self.tol || excess.is_nan() {
            self.out.push(Violation { family, at: at(), excess });
        }
    }
}

pub fn validate_schedule(
    instance: &PlantInstance,
    grid: &TimeGrid,
    schedule: &Schedule,
    options: &ValidationOptions,
) -> Result<ValidationReport, PlantError> {
    let kk = grid.horizon_steps;
    if schedule.horizon_steps != kk || schedule.step_seconds != grid.step_seconds {
        return Err(PlantError::DimensionMismatch(format!(
            "schedule grid ({} steps of {} s) differs from ({} steps of {} s)",
            schedule.horizon_steps, schedule.step_seconds, kk, grid.step_seconds
        )));
    }
    let mut ctx = Ctx { grid, tol: options.tol, out: Vec::new() };
    let mut unit_power: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut global = vec![0.0; kk];
    for ls in &schedule.lines {
        let li = instance
            .line_index(&ls.line)
            .ok_or_else(|| PlantError::DimensionMismatch(format!("unknown line {}", ls.line)))?;
        let stages = index_stages(instance, li, ls, kk, grid)?;
        for fi in instance.line_furnaces(li) {
            let unit = instance.furnaces[fi].power_unit_id.as_str();
            let acc = unit_power.entry(unit).or_insert_with(|| vec![0.0; kk]);
            for s in stages.iter().filter(|s| s.furnace == fi + 1) {
                for k in 0..kk {
                    acc[k] += s.power_kw[k];
                    global[k] += s.power_kw[k];
                }
            }
        }
        check_line(&mut ctx, instance, li, ls, &stages, options);
    }
    for (unit, power) in &unit_power {
        let cap = instance.power_units[*unit];
        for (k, p) in power.iter().enumerate() {
            ctx.check(Family::PowerUnitCap, p - cap, || format!("unit {unit} k{}", k + 1));
        }
    }
    for (k, p) in global.iter().enumerate() {
        ctx.check(Family::GlobalCap, p - instance.global_p_max_kw, || format!("k{}", k + 1));
    }
    Ok(ValidationReport { violations: ctx.out })
}

fn index_stages<'a>(
    instance: &PlantInstance,
    li: usize,
    ls: &'a LineSchedule,
    kk: usize,
    grid: &TimeGrid,
) -> Result<Vec<&'a StageSchedule>, PlantError> {
    let mism = |m: String| Err(PlantError::DimensionMismatch(format!("line {}: {m}", ls.line)));
    let mut out = Vec::new();
    for fi in instance.line_furnaces(li) {
        for r in instance.furnaces[fi].sequence() {
            let found = ls
                .stages
                .iter()
                .find(|s| s.furnace == fi + 1 && s.cycle == r.cycle && s.stage == r.stage);
            match found {
                Some(s) if s.power_kw.len() == kk => out.push(s),
                Some(_) => return mism(format!("f{} m{} j{}: power length", fi + 1, r.cycle, r.stage)),
                None => return mism(format!("f{} m{} j{} missing", fi + 1, r.cycle, r.stage)),
            }
        }
    }
    if out.len() != ls.stages.len() {
        return mism("unexpected stage entries".into());
    }
    if ls.buffer_m3.len() != kk || ls.holding_power_kw.len() != kk {
        return mism("buffer or holding trace length".into());
    }
    if ls.baseline_kw.len() != grid.num_settlements() {
        return mism("baseline length".into());
    }
    Ok(out)
}

fn check_line(
    ctx: &mut Ctx<'_>,
    instance: &PlantInstance,
    li: usize,
    ls: &LineSchedule,
    stages: &[&StageSchedule],
    options: &ValidationOptions,
) {
    let grid = ctx.grid;
    let kk = grid.horizon_steps;
    let dt_h = grid.step_hours();
    let dt_s = grid.step_seconds as f64;
    let line = &instance.lines[li];
    let lid = &line.id;
    // (furnace index, tap start steps) for the buffer and ladle checks.
    let mut taps: Vec<(usize, Vec<i64>)> = Vec::new();

    for fi in instance.line_furnaces(li) {
        let furnace = &instance.furnaces[fi];
        let f = fi + 1;
        let seq = furnace.sequence();
        let sched: Vec<&StageSchedule> = stages.iter().copied().filter(|s| s.furnace == f).collect();
        let starts: Vec<Option<usize>> = sched.iter().map(|s| s.start_step).collect();
        let n = seq.len();
        let at = |i: usize| format!("line {lid} f{f} m{} j{}", seq[i].cycle, seq[i].stage);

        // Order: starts nondecreasing, a shifted stage is followed only by shifted
        // stages, and only relaxed cycles may be shifted.
        let release = instance.release_step(fi);
        for i in 0..n {
            let relaxed = options.allow_shift && furnace.is_relaxed(seq[i].cycle);
            match starts[i] {
                None if !relaxed => ctx.check(Family::StageOrder, 1.0, || format!("{} not started", at(i))),
                Some(s) => {
                    if s == 0 || s > kk {
                        ctx.check(Family::StageOrder, 1.0, || format!("{} start {s} off grid", at(i)));
                    }
                    if i == 0 && s <= release {
                        ctx.check(Family::StageOrder, (release + 1 - s) as f64, || at(i));
                    }
                    if i > 0 {
                        match starts[i - 1] {
                            None => ctx.check(Family::StageOrder, 1.0, || format!("{} starts after shifted stage", at(i))),
                            Some(p) if s < p => ctx.check(Family::StageOrder, (p - s) as f64, || at(i)),
                            _ => {}
                        }
                    }
                }
                None => {}
            }
        }

        let end = |i: usize| -> usize {
            match starts.get(i + 1).copied().flatten() {
                Some(e) => e,
                None => kk + 1,
            }
        };
        let dur_steps = |i: usize| -> usize {
            match starts[i] {
                Some(s) => end(i).saturating_sub(s),
                None => 0,
            }
        };
        // Whether stage i must be complete within the horizon.
        let must_complete = |i: usize| -> bool {
            match starts[i] {
                None => false,
                Some(_) => i + 1 == n || starts[i + 1].is_some() || !(options.allow_shift && furnace.is_relaxed(seq[i].cycle)),
            }
        };

        for i in 0..n {
            let spec = seq[i].spec;
            let st = sched[i];
            let p = &st.power_kw;
            let Some(s) = starts[i] else {
                for (k, &v) in p.iter().enumerate() {
                    ctx.check(Family::PowerOutsideStage, v.abs(), || format!("{} k{}", at(i), k + 1));
                }
                continue;
            };
            let e = end(i);
            for k in 1..=kk {
                let v = p[k - 1];
                let here = || format!("{} k{k}", at(i));
                if k < s || k >= e {
                    ctx.check(Family::PowerOutsideStage, v.abs(), here);
                    continue;
                }
                ctx.check(Family::StagePowerBounds, v - spec.p_max_kw, here);
                ctx.check(Family::StagePowerBounds, -v, here);
                if spec.semi_continuous {
                    if v > ctx.tol {
                        ctx.check(Family::SemiContinuity, spec.p_min_kw - v, here);
                    }
                } else {
                    ctx.check(Family::StagePowerBounds, spec.p_min_kw - v, here);
                }
            }
            let energy: f64 = p.iter().sum::<f64>() * dt_h;

            if must_complete(i) {
                let need = min_steps(spec, grid);
                if spec.kind == StageKind::Time {
                    ctx.check(Family::StageDuration, need as f64 - dur_steps(i) as f64, || at(i));
                }
                if spec.is_energy() {
                    let mi = seq[i].cycle - 1;
                    let base = i + 1 - seq[i].stage;
                    let terms: Vec<LossTerm> = furnace
                        .loss_group(mi, seq[i].stage - 1)
                        .into_iter()
                        .map(|ji| {
                            let g = seq[base + ji].spec;
                            LossTerm {
                                alpha: furnace.loss_coeff(g),
                                duration_s: dur_steps(base + ji) as f64 * dt_s,
                                nominal_s: g.nominal_duration_s(),
                            }
                        })
                        .collect();
                    let required = heat_loss_energy(spec.min_energy_kwh, &terms).unwrap_or(f64::INFINITY);
                    ctx.check(Family::EnergyCompletion, required - energy, || at(i));
                }
            }

            if let (Some(tau), true) = (spec.reheat_tau_s, spec.is_tapping) {
                if i + 1 < n && starts[i + 1].is_some() {
                    let alpha = furnace.loss_coeff(spec);
                    let required = alpha * (dur_steps(i) as f64 * dt_s / tau - 1.0);
                    ctx.check(Family::Reheat, required - energy, || at(i));
                }
            }

            if let Some(r) = &spec.ramp {
                let mut on = 0usize;
                for k in s..e.min(kk + 1) {
                    let v = p[k - 1];
                    if v > ctx.tol {
                        on += 1;
                    }
                    let limit = r.initial_power_kw + r.rate_limit_kw_per_s * dt_s * on as f64;
                    ctx.check(Family::Ramp, v - limit, || format!("{} k{k}", at(i)));
                }
            }

            if let Some(cm) = &spec.charge_melt {
                let mut cum = 0.0;
                for k in s..e.min(kk + 1) {
                    cum += p[k - 1] * dt_h;
                    let active_h = (k - s + 1) as f64 * dt_h;
                    let lo = cm.overflow_rate_kw * (active_h - cm.overflow_time_s / 3600.0);
                    let hi = cm.splash_energy_kwh + cm.splash_rate_kw * active_h;
                    ctx.check(Family::SplashOverflow, lo - cum, || format!("{} k{k} overflow", at(i)));
                    ctx.check(Family::SplashOverflow, cum - hi, || format!("{} k{k} splash", at(i)));
                }
            }
        }

        let mut tap_starts: Vec<i64> = instance.prior_taps(fi).to_vec();
        for i in 0..n {
            if seq[i].spec.is_tapping {
                if let Some(s) = starts[i] {
                    tap_starts.push(s as i64);
                }
            }
        }
        taps.push((fi, tap_starts));
    }

    // Buffer, holding power and ladles.
    let v0 = instance.initial_buffer(li);
    let margin = line.safety_margin_m3 + options.buffer_margin.get(lid).copied().unwrap_or(0.0);
    for k in 1..=kk {
        let ki = k as i64;
        let mut level = v0 - cast_volume(&line.casting_segments, k, grid.step_seconds);
        let mut ladles = 0usize;
        for (fi, starts) in &taps {
            let f = &instance.furnaces[*fi];
            for &s in starts {
                // Prior taps already delivered are part of v0.
                let land = s + f.delivery_time_steps as i64;
                if land <= ki && land >= 1 {
                    level += f.tap_volume_m3;
                }
                if s <= ki && s > ki - f.roundtrip_time_steps as i64 {
                    ladles += 1;
                }
            }
        }
        let recorded = ls.buffer_m3[k - 1];
        ctx.check(Family::BufferIdentity, (recorded - level).abs(), || format!("line {lid} k{k}"));
        ctx.check(Family::BufferBounds, line.vmin_m3 + margin - level, || format!("line {lid} k{k} low"));
        ctx.check(Family::BufferBounds, level - line.vmax_m3, || format!("line {lid} k{k} high"));
        let hold = line.gamma_kw_per_m3 * level;
        ctx.check(Family::HoldingPower, (ls.holding_power_kw[k - 1] - hold).abs(), || {
            format!("line {lid} k{k}")
        });
        if let Some(limit) = line.ladle_limit {
            ctx.check(Family::LadleCount, ladles as f64 - limit as f64, || format!("line {lid} k{k}"));
        }
    }

    let nq = grid.settlement_steps;
    for q in 1..=grid.num_settlements() {
        let avg: f64 = ((q - 1) * nq + 1..=q * nq).map(|k| ls.baseline_power(k)).sum::<f64>() / nq as f64;
        ctx.check(Family::Baseline, (ls.baseline_kw[q - 1] - avg).abs(), || format!("line {lid} q{q}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_time_grid;
    use crate::plant::testing::{energy_stage, single_furnace, tap_stage, time_stage};
    use crate::plant::{LineSchedule, Schedule, StageSchedule};

    fn grid() -> TimeGrid {
        build_time_grid(300, 3600, 900, 900, 900).unwrap()
    }

    fn schedule_for(inst: &PlantInstance, starts: &[Option<usize>], power: &[Vec<f64>]) -> Schedule {
        let g = grid();
        let kk = g.horizon_steps;
        let f = &inst.furnaces[0];
        let stages = f
            .sequence()
            .iter()
            .enumerate()
            .map(|(i, r)| StageSchedule {
                furnace: 1,
                cycle: r.cycle,
                stage: r.stage,
                furnace_id: f.id.clone(),
                name: r.spec.name.clone(),
                start_step: starts[i],
                start_time_s: starts[i].map(|s| ((s - 1) * 300) as f64),
                power_kw: power.get(i).cloned().unwrap_or_else(|| vec![0.0; kk]),
            })
            .collect();
        let mut ls = LineSchedule {
            line: "L1".into(),
            stages,
            buffer_m3: vec![0.0; kk],
            holding_power_kw: vec![0.0; kk],
            baseline_kw: vec![0.0; g.num_settlements()],
            baseline_includes_holding: true,
            objective_eur: 0.0,
        };
        for q in 0..g.num_settlements() {
            ls.baseline_kw[q] = (q * 3 + 1..=q * 3 + 3).map(|k| ls.total_power(k)).sum::<f64>() / 3.0;
        }
        Schedule::from_lines("test", &g, vec![ls])
    }

    #[test]
    fn clean_schedule_passes() {
        let inst = single_furnace(vec![vec![time_stage(600.0), energy_stage(100.0, 600.0)]]);
        // Wait 2 steps, then 2 steps at 600 kW = 100 kWh.
        let mut p = vec![0.0; 12];
        p[2] = 600.0;
        p[3] = 600.0;
        let s = schedule_for(&inst, &[Some(1), Some(3)], &[vec![0.0; 12], p]);
        let r = validate_schedule(&inst, &grid(), &s, &ValidationOptions::default()).unwrap();
        assert!(r.is_clean(), "{:?}", r.violations);
    }

    #[test]
    fn unit_cap_fault_is_single_violation() {
        let mut inst = single_furnace(vec![vec![energy_stage(100.0, 2000.0)]]);
        inst.power_units.insert("U1".into(), 1200.0);
        let mut p = vec![0.0; 12];
        p[0] = 1201.0;
        let s = schedule_for(&inst, &[Some(1)], &[p]);
        let r = validate_schedule(&inst, &grid(), &s, &ValidationOptions::default()).unwrap();
        assert_eq!(r.violations.len(), 1, "{:?}", r.violations);
        assert_eq!(r.violations[0].family, Family::PowerUnitCap);
        assert!((r.violations[0].excess - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ladle_overlap_detected() {
        let g = build_time_grid(300, 7200, 900, 900, 900).unwrap();
        let mut inst = single_furnace(vec![vec![tap_stage(300.0), time_stage(1500.0), tap_stage(300.0)]]);
        inst.lines[0].ladle_limit = Some(1);
        inst.furnaces[0].roundtrip_time_steps = 10;
        // Taps at steps 1 and 7: six steps apart, roundtrip 10.
        let kk = g.horizon_steps;
        let mut s = schedule_for(&inst, &[Some(1), Some(2), Some(7)], &[]);
        s.horizon_steps = kk;
        for st in &mut s.lines[0].stages {
            st.power_kw = vec![0.0; kk];
        }
        s.lines[0].buffer_m3 = vec![0.0; kk];
        s.lines[0].holding_power_kw = vec![0.0; kk];
        s.lines[0].baseline_kw = vec![0.0; g.num_settlements()];
        let r = validate_schedule(&inst, &g, &s, &ValidationOptions::default()).unwrap();
        assert!(r.count(Family::LadleCount) > 0);
        // Overlap lasts from the second tap until the first ladle returns.
        let ks: Vec<&str> = r.violations.iter().map(|v| v.at.as_str()).collect();
        assert_eq!(ks, vec!["line L1 k7", "line L1 k8", "line L1 k9", "line L1 k10"]);
    }

    #[test]
    fn detects_energy_shortfall_and_outside_power() {
        let inst = single_furnace(vec![vec![time_stage(600.0), energy_stage(100.0, 600.0)]]);
        let mut p = vec![0.0; 12];
        p[2] = 600.0;
        let mut wait = vec![0.0; 12];
        wait[0] = 5.0;
        let s = schedule_for(&inst, &[Some(1), Some(3)], &[wait, p]);
        let r = validate_schedule(&inst, &grid(), &s, &ValidationOptions::default()).unwrap();
        assert_eq!(r.count(Family::EnergyCompletion), 1);
        assert!(r.count(Family::PowerOutsideStage) + r.count(Family::StagePowerBounds) >= 1);
    }

    #[test]
    fn dimension_mismatch() {
        let inst = single_furnace(vec![vec![time_stage(600.0)]]);
        let mut s = schedule_for(&inst, &[Some(1)], &[]);
        s.lines[0].buffer_m3.pop();
        assert!(matches!(
            validate_schedule(&inst, &grid(), &s, &ValidationOptions::default()),
            Err(PlantError::DimensionMismatch(_))
        ));
    }
}
