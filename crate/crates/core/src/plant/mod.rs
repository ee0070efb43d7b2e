//! Plant topology, closed-form process evaluators and the schedule validator.
//!
//! Indices used in schedules and variable names are 1-based (`f`, `m`, `j`,
//! `k`), while the vectors in [`PlantInstance`] are ordinary 0-based slices.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod schedule;
pub mod testing;
mod validate;

pub use schedule::{LineSchedule, Schedule, StageSchedule};
pub use validate::{validate_schedule, Family, ValidationOptions, ValidationReport, Violation};

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed plant instance: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid plant instance: {0}")]
    Invalid(String),
    #[error("negative duration {0} s")]
    NegativeDuration(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    #[serde(alias = "energy_based", alias = "EnergyBased")]
    Energy,
    #[serde(alias = "time_based", alias = "TimeBased")]
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ramp {
    pub initial_power_kw: f64,
    pub rate_limit_kw_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargeMelt {
    pub overflow_rate_kw: f64,
    pub splash_rate_kw: f64,
    pub splash_energy_kwh: f64,
    pub overflow_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    #[serde(default)]
    pub name: String,
    pub kind: StageKind,
    #[serde(default)]
    pub min_energy_kwh: f64,
    /// Nominal duration. For energy stages it defaults to `Ê / P^max`.
    #[serde(default)]
    pub min_duration_s: f64,
    /// Heat-loss coefficient; for tapping stages it is the reheat energy in kWh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_coeff: Option<f64>,
    #[serde(default)]
    pub p_min_kw: f64,
    #[serde(default)]
    pub p_max_kw: f64,
    #[serde(default)]
    pub semi_continuous: bool,
    #[serde(default)]
    pub is_tapping: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reheat_tau_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<Ramp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge_melt: Option<ChargeMelt>,
}

impl StageSpec {
    pub fn is_energy(&self) -> bool {
        self.kind == StageKind::Energy
    }

    pub fn nominal_duration_s(&self) -> f64 {
        if self.min_duration_s > 0.0 || self.kind == StageKind::Time {
            self.min_duration_s
        } else {
            self.min_energy_kwh / self.p_max_kw * 3600.0
        }
    }

    /// Whether the stage needs a semi-continuity binary per step.
    pub fn needs_on_binary(&self) -> bool {
        self.p_max_kw > 0.0 && (self.semi_continuous || self.ramp.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeltCycleSpec {
    pub stages: Vec<StageSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FurnaceSpec {
    pub id: String,
    pub power_unit_id: String,
    pub cycles: Vec<MeltCycleSpec>,
    pub tap_volume_m3: f64,
    pub delivery_time_steps: usize,
    pub roundtrip_time_steps: usize,
    /// 1-based cycle numbers that may be shifted to the next day.
    #[serde(default)]
    pub daf_relaxed_cycles: Vec<usize>,
    /// Per-stage-name heat-loss defaults, used when a stage has no `loss_coeff`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub loss_coeffs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CastSegment {
    pub breakpoint_step: usize,
    pub rate_m3_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CastingLineSpec {
    pub id: String,
    pub furnaces: Vec<String>,
    pub v0_m3: f64,
    pub vmin_m3: f64,
    pub vmax_m3: f64,
    pub gamma_kw_per_m3: f64,
    pub casting_segments: Vec<CastSegment>,
    /// Ladles serving the line; `None` means unconstrained.
    #[serde(default)]
    pub ladle_limit: Option<usize>,
    #[serde(default)]
    pub safety_margin_m3: f64,
    /// Power available to this line's furnaces. Defaults to the line's share of
    /// the global cap, proportional to furnace count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max_kw: Option<f64>,
}

impl CastingLineSpec {
    pub fn cast_volume(&self, k: usize, step_seconds: u64) -> f64 {
        cast_volume(&self.casting_segments, k, step_seconds)
    }

    pub fn last_rate(&self) -> f64 {
        self.casting_segments.last().map_or(0.0, |s| s.rate_m3_per_s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FurnaceState {
    /// Boundary before which the furnace cannot start its first stage.
    #[serde(default)]
    pub release_step: usize,
    /// Start steps (≤ 0) of taps made before the horizon.
    #[serde(default)]
    pub prior_tap_steps: Vec<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    /// Buffer level at the start of the horizon, overriding `v0_m3`.
    #[serde(default)]
    pub buffers: BTreeMap<String, f64>,
    #[serde(default)]
    pub furnaces: BTreeMap<String, FurnaceState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantInstance {
    #[serde(default)]
    pub name: String,
    pub lines: Vec<CastingLineSpec>,
    pub furnaces: Vec<FurnaceSpec>,
    pub power_units: BTreeMap<String, f64>,
    pub global_p_max_kw: f64,
    #[serde(default)]
    pub initial_state: InitialState,
}

/// Position of a stage inside a furnace's day, 1-based cycle and stage.
#[derive(Debug, Clone, Copy)]
pub struct StageRef<'a> {
    pub cycle: usize,
    pub stage: usize,
    pub spec: &'a StageSpec,
}

impl FurnaceSpec {
    /// All stages of all cycles in processing order.
    pub fn sequence(&self) -> Vec<StageRef<'_>> {
        self.cycles
            .iter()
            .enumerate()
            .flat_map(|(mi, c)| {
                c.stages.iter().enumerate().map(move |(ji, spec)| StageRef {
                    cycle: mi + 1,
                    stage: ji + 1,
                    spec,
                })
            })
            .collect()
    }

    pub fn is_relaxed(&self, cycle: usize) -> bool {
        self.daf_relaxed_cycles.contains(&cycle)
    }

    pub fn loss_coeff(&self, spec: &StageSpec) -> f64 {
        spec.loss_coeff
            .or_else(|| self.loss_coeffs.get(&spec.name).copied())
            .unwrap_or(0.0)
    }

    /// Stage indices (0-based within the cycle) whose durations enter the heat
    /// loss of energy stage `stage_idx`: everything after the previous energy
    /// stage, up to and including `stage_idx`.
    pub fn loss_group(&self, cycle_idx: usize, stage_idx: usize) -> Vec<usize> {
        let stages = &self.cycles[cycle_idx].stages;
        let start = stages[..stage_idx]
            .iter()
            .rposition(|s| s.is_energy())
            .map_or(0, |p| p + 1);
        (start..=stage_idx).collect()
    }
}

impl PlantInstance {
    pub fn from_json_str(text: &str) -> Result<PlantInstance, PlantError> {
        let inst: PlantInstance = serde_json::from_str(text)?;
        inst.check()?;
        Ok(inst)
    }

    pub fn load(path: &Path) -> Result<PlantInstance, PlantError> {
        let text = std::fs::read_to_string(path).map_err(|source| PlantError::Io {
            path: path.display().to_string(),
            source,
        })?;
        PlantInstance::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plant instance serializes")
    }

    pub fn furnace_index(&self, id: &str) -> Option<usize> {
        self.furnaces.iter().position(|f| f.id == id)
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    /// Furnace indices served by line `li`, in instance order.
    pub fn line_furnaces(&self, li: usize) -> Vec<usize> {
        let line = &self.lines[li];
        (0..self.furnaces.len())
            .filter(|&fi| line.furnaces.contains(&self.furnaces[fi].id))
            .collect()
    }

    pub fn line_of_furnace(&self, fi: usize) -> Option<usize> {
        let id = &self.furnaces[fi].id;
        self.lines.iter().position(|l| l.furnaces.contains(id))
    }

    /// Furnace indices fed by power unit `unit`.
    pub fn unit_furnaces(&self, unit: &str) -> Vec<usize> {
        (0..self.furnaces.len())
            .filter(|&fi| self.furnaces[fi].power_unit_id == unit)
            .collect()
    }

    pub fn release_step(&self, fi: usize) -> usize {
        self.initial_state
            .furnaces
            .get(&self.furnaces[fi].id)
            .map_or(0, |s| s.release_step)
    }

    pub fn prior_taps(&self, fi: usize) -> &[i64] {
        self.initial_state
            .furnaces
            .get(&self.furnaces[fi].id)
            .map_or(&[], |s| s.prior_tap_steps.as_slice())
    }

    pub fn initial_buffer(&self, li: usize) -> f64 {
        let line = &self.lines[li];
        self.initial_state
            .buffers
            .get(&line.id)
            .copied()
            .unwrap_or(line.v0_m3)
    }

    /// Power available to line `li`.
    pub fn line_cap(&self, li: usize) -> f64 {
        if let Some(cap) = self.lines[li].p_max_kw {
            return cap;
        }
        let share = self.line_furnaces(li).len() as f64 / self.furnaces.len() as f64;
        self.global_p_max_kw * share
    }

    /// Relaxed cycles per 1-based furnace index.
    pub fn relaxed_cycles(&self) -> BTreeMap<usize, Vec<usize>> {
        self.furnaces
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.daf_relaxed_cycles.is_empty())
            .map(|(fi, f)| (fi + 1, f.daf_relaxed_cycles.clone()))
            .collect()
    }

    /// Check the structural invariants of the instance.
    pub fn check(&self) -> Result<(), PlantError> {
        let bad = |msg: String| Err(PlantError::Invalid(msg));
        if self.furnaces.is_empty() || self.lines.is_empty() {
            return bad("instance needs at least one furnace and one line".into());
        }
        if !(self.global_p_max_kw.is_finite() && self.global_p_max_kw > 0.0) {
            return bad("global_p_max_kw must be positive".into());
        }
        for (unit, cap) in &self.power_units {
            if !(cap.is_finite() && *cap > 0.0) {
                return bad(format!("power unit {unit}: cap must be positive"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.furnaces {
            if !seen.insert(f.id.as_str()) {
                return bad(format!("duplicate furnace id {}", f.id));
            }
        }
        let mut seen_lines = std::collections::BTreeSet::new();
        for l in &self.lines {
            if !seen_lines.insert(l.id.as_str()) {
                return bad(format!("duplicate line id {}", l.id));
            }
        }
        for (fi, f) in self.furnaces.iter().enumerate() {
            if !self.power_units.contains_key(&f.power_unit_id) {
                return bad(format!("furnace {}: unknown power unit {}", f.id, f.power_unit_id));
            }
            let owners = self.lines.iter().filter(|l| l.furnaces.contains(&f.id)).count();
            if owners != 1 {
                return bad(format!("furnace {} belongs to {owners} lines, expected 1", f.id));
            }
            if f.cycles.is_empty() || f.cycles.iter().any(|c| c.stages.is_empty()) {
                return bad(format!("furnace {}: cycles must be nonempty", f.id));
            }
            if f.delivery_time_steps > f.roundtrip_time_steps {
                return bad(format!("furnace {}: delivery time exceeds roundtrip time", f.id));
            }
            if !(f.tap_volume_m3 >= 0.0 && f.tap_volume_m3.is_finite()) {
                return bad(format!("furnace {}: tap volume must be nonnegative", f.id));
            }
            for &m in &f.daf_relaxed_cycles {
                if m == 0 || m > f.cycles.len() {
                    return bad(format!("furnace {}: relaxed cycle {m} out of range", f.id));
                }
            }
            let first_relaxed = f.cycles.len() + 1 - f.daf_relaxed_cycles.len();
            if !(first_relaxed..=f.cycles.len()).all(|m| f.daf_relaxed_cycles.contains(&m)) {
                return bad(format!("furnace {}: relaxed cycles must be the trailing cycles", f.id));
            }
            for r in f.sequence() {
                let where_ = format!("furnace {} cycle {} stage {}", f.id, r.cycle, r.stage);
                check_stage(r.spec, &where_, f.loss_coeff(r.spec))?;
            }
            for &s in self.prior_taps(fi) {
                if s > 0 {
                    return bad(format!("furnace {}: prior tap step {s} must be ≤ 0", f.id));
                }
            }
        }
        for id in self.initial_state.furnaces.keys() {
            if self.furnace_index(id).is_none() {
                return bad(format!("initial_state names unknown furnace {id}"));
            }
        }
        for id in self.initial_state.buffers.keys() {
            if self.line_index(id).is_none() {
                return bad(format!("initial_state names unknown line {id}"));
            }
        }
        for (li, l) in self.lines.iter().enumerate() {
            for id in &l.furnaces {
                if self.furnace_index(id).is_none() {
                    return bad(format!("line {}: unknown furnace {id}", l.id));
                }
            }
            let v0 = self.initial_buffer(li);
            if !(l.vmin_m3 <= v0 && v0 <= l.vmax_m3) {
                return bad(format!("line {}: need vmin ≤ v0 ≤ vmax", l.id));
            }
            if l.gamma_kw_per_m3 < 0.0 || l.safety_margin_m3 < 0.0 {
                return bad(format!("line {}: gamma and safety margin must be nonnegative", l.id));
            }
            let segs = &l.casting_segments;
            if segs.first().map(|s| s.breakpoint_step) != Some(0) {
                return bad(format!("line {}: first casting breakpoint must be 0", l.id));
            }
            if segs.windows(2).any(|w| w[1].breakpoint_step <= w[0].breakpoint_step) {
                return bad(format!("line {}: casting breakpoints must increase", l.id));
            }
            if segs.iter().any(|s| !(s.rate_m3_per_s >= 0.0 && s.rate_m3_per_s.is_finite())) {
                return bad(format!("line {}: casting rates must be nonnegative", l.id));
            }
        }
        Ok(())
    }
}

fn check_stage(s: &StageSpec, where_: &str, alpha: f64) -> Result<(), PlantError> {
    let bad = |msg: &str| Err(PlantError::Invalid(format!("{where_}: {msg}")));
    let finite = [s.min_energy_kwh, s.min_duration_s, s.p_min_kw, s.p_max_kw, alpha];
    if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return bad("parameters must be finite and nonnegative");
    }
    match s.kind {
        StageKind::Energy => {
            if !(s.min_energy_kwh > 0.0 && s.p_max_kw > 0.0) {
                return bad("energy stage needs min_energy_kwh > 0 and p_max_kw > 0");
            }
        }
        StageKind::Time => {
            if s.min_duration_s <= 0.0 {
                return bad("time stage needs min_duration_s > 0");
            }
        }
    }
    if s.p_min_kw > s.p_max_kw {
        return bad("p_min_kw exceeds p_max_kw");
    }
    if let Some(r) = &s.ramp {
        if !s.semi_continuous || s.p_min_kw <= 0.0 {
            return bad("a ramp limit needs a semi-continuous stage with p_min_kw > 0");
        }
        if r.initial_power_kw < 0.0 || r.rate_limit_kw_per_s < 0.0 {
            return bad("ramp parameters must be nonnegative");
        }
    }
    if let Some(c) = &s.charge_melt {
        if !s.is_energy() {
            return bad("charge_melt applies to energy stages only");
        }
        let v = [c.overflow_rate_kw, c.splash_rate_kw, c.splash_energy_kwh, c.overflow_time_s];
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("charge_melt parameters must be nonnegative");
        }
    }
    if let Some(tau) = s.reheat_tau_s {
        if !s.is_tapping || tau <= 0.0 {
            return bad("reheat_tau_s needs a tapping stage and a positive value");
        }
    }
    Ok(())
}

/// One term of the heat-loss sum: coefficient, actual and nominal duration.
#[derive(Debug, Clone, Copy)]
pub struct LossTerm {
    pub alpha: f64,
    pub duration_s: f64,
    pub nominal_s: f64,
}

/// Energy needed by an energy stage after elongation losses.
pub fn heat_loss_energy(min_energy_kwh: f64, terms: &[LossTerm]) -> Result<f64, PlantError> {
    let mut factor = 1.0;
    for t in terms {
        if t.duration_s < 0.0 {
            return Err(PlantError::NegativeDuration(t.duration_s));
        }
        if t.alpha != 0.0 {
            factor += t.alpha * t.duration_s / t.nominal_s;
        }
    }
    Ok(min_energy_kwh * factor)
}

/// Cumulative volume cast over steps `1..=k`.
pub fn cast_volume(segments: &[CastSegment], k: usize, step_seconds: u64) -> f64 {
    let dt = step_seconds as f64;
    segments
        .iter()
        .enumerate()
        .map(|(n, seg)| {
            let end = segments.get(n + 1).map_or(usize::MAX, |s| s.breakpoint_step);
            let steps = k.min(end).saturating_sub(seg.breakpoint_step);
            seg.rate_m3_per_s * steps as f64 * dt
        })
        .sum()
}

/// Volume delivered by step `k` from taps started at `start_steps`.
pub fn tapped_volume(tap_volume_m3: f64, delivery_steps: usize, start_steps: &[i64], k: i64) -> f64 {
    let n = start_steps
        .iter()
        .filter(|&&s| s + delivery_steps as i64 <= k)
        .count();
    tap_volume_m3 * n as f64
}

pub fn holding_power(gamma_kw_per_m3: f64, buffer_m3: f64) -> f64 {
    gamma_kw_per_m3 * buffer_m3
}
