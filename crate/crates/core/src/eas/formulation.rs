//! Time-indexed process constraints for one casting line, shared by the
//! day-ahead and reserve models.
//!
//! Stage `j` of a furnace owns binaries `x^k` with `x^k = 1` iff the stage has
//! started by step `k`. The stage is active at `k` iff `x_j^k - x_{j+1}^k = 1`;
//! stages chain across cycles and the last stage of the day runs to the horizon.

use std::collections::BTreeMap;

use crate::grid::{min_steps, stage_windows_with, StageKey, TimeGrid, WindowOptions};
use crate::milp::{Affine, MilpError, MilpModel, Sense, VarId};
use crate::plant::{cast_volume, LineSchedule, PlantInstance, StageKind, StageSchedule};

use super::EasError;

/// A binary that may have been fixed by the stage window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bit {
    Zero,
    One,
    Var(VarId),
}

impl Bit {
    pub fn add_to(self, e: &mut Affine, c: f64) {
        match self {
            Bit::Zero => {}
            Bit::One => e.constant += c,
            Bit::Var(v) => e.add_term(v, c),
        }
    }

    pub fn value(self, values: &[f64]) -> f64 {
        match self {
            Bit::Zero => 0.0,
            Bit::One => 1.0,
            Bit::Var(v) => values[v.0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct StageVars {
    /// Global 1-based furnace, cycle and stage numbers.
    pub key: StageKey,
    pub furnace_index: usize,
    pub relaxed: bool,
    /// Started-by flags, indexed by `k - 1`.
    pub x: Vec<Bit>,
    pub p: Vec<Option<VarId>>,
    pub y: Vec<Option<VarId>>,
    pub zeta: Option<VarId>,
    /// Steps at which the stage can be active: `first..=last`.
    pub first: usize,
    pub last: usize,
}

#[derive(Debug, Clone, Default)]
pub struct DafSpec {
    /// Stage durations in steps from the committed schedule.
    pub scheduled_steps: BTreeMap<StageKey, usize>,
    pub max_shift_energy_kwh: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ProcessOptions {
    pub windows: bool,
    /// Restrict the model to these furnace indices of the line.
    pub furnaces: Option<Vec<usize>>,
    /// Fraction of the line's buffer, casting demand, caps and ladles given to
    /// the modelled furnaces.
    pub share: f64,
    pub daf: Option<DafSpec>,
    /// Schedules already fixed for other furnaces of the line.
    pub committed: Option<Committed>,
}

/// Other furnaces' fixed schedules. Their ladle trips count against the full
/// line limit; with `full_buffer` their taps also feed the whole line buffer,
/// which then replaces the proportional share.
#[derive(Debug, Clone, Default)]
pub struct Committed {
    pub furnaces: Vec<usize>,
    pub stages: Vec<StageSchedule>,
    pub full_buffer: bool,
}

impl Committed {
    /// Tap start steps of the committed furnaces, prior taps included.
    fn taps(&self, instance: &PlantInstance) -> Vec<(usize, i64)> {
        let mut out: Vec<(usize, i64)> =
            self.furnaces.iter().flat_map(|&fi| instance.prior_taps(fi).iter().map(move |&s| (fi, s))).collect();
        for st in &self.stages {
            let fi = st.furnace - 1;
            let spec = &instance.furnaces[fi].cycles[st.cycle - 1].stages[st.stage - 1];
            if let (true, Some(start)) = (spec.is_tapping, st.start_step) {
                out.push((fi, start as i64));
            }
        }
        out
    }
}

impl Default for ProcessOptions {
    fn default() -> Self {
        ProcessOptions { windows: true, furnaces: None, share: 1.0, daf: None, committed: None }
    }
}

#[derive(Debug, Clone)]
pub struct ProcessModel {
    pub model: MilpModel,
    pub line: usize,
    pub furnaces: Vec<usize>,
    pub stages: Vec<StageVars>,
    /// Melting-furnace power per step, indexed by `k - 1`.
    pub furnace_power: Vec<Affine>,
    pub buffer: Vec<Affine>,
    pub holding: Vec<Affine>,
    /// Energy moved to the next day (kWh), when day-after flexibility is on.
    pub shifted_energy: Option<VarId>,
    /// Extra buffer floor from shifted stages (m³).
    pub buffer_margin: Affine,
    pub share: f64,
    /// Auxiliary variables defined as expressions of earlier variables.
    pub defined: Vec<(VarId, Affine)>,
}

fn stage_name(prefix: &str, key: StageKey, k: usize) -> String {
    format!("{prefix}_f{}_m{}_j{}_k{k}", key.furnace, key.cycle, key.stage)
}

fn key_name(prefix: &str, key: StageKey) -> String {
    format!("{prefix}_f{}_m{}_j{}", key.furnace, key.cycle, key.stage)
}

pub fn build_process(
    instance: &PlantInstance,
    li: usize,
    grid: &TimeGrid,
    opts: &ProcessOptions,
) -> Result<ProcessModel, EasError> {
    let kk = grid.horizon_steps;
    let dt_s = grid.step_seconds as f64;
    let line = &instance.lines[li];
    let furnaces = opts.furnaces.clone().unwrap_or_else(|| instance.line_furnaces(li));
    let share = opts.share;
    let daf = opts.daf.as_ref();
    let relaxed = if daf.is_some() { instance.relaxed_cycles() } else { BTreeMap::new() };
    let windows = if opts.windows {
        Some(stage_windows_with(instance, grid, &WindowOptions { relaxed: relaxed.clone() })?)
    } else {
        None
    };

    let mut model = MilpModel::new(&format!("line_{}", line.id));
    let mut stages: Vec<StageVars> = Vec::new();
    let mut furnace_power = vec![Affine::default(); kk];
    // Per furnace: positions of its stages in `stages`.
    let mut spans: Vec<(usize, std::ops::Range<usize>)> = Vec::new();

    for &fi in &furnaces {
        let furnace = &instance.furnaces[fi];
        let f = fi + 1;
        let seq = furnace.sequence();
        let n = seq.len();
        let release = instance.release_step(fi);
        // Fixed-zero prefix `..=lo` and fixed-one suffix `fix1..` per stage.
        let bounds: Vec<(usize, usize, bool)> = seq
            .iter()
            .map(|r| {
                let key = StageKey::new(f, r.cycle, r.stage);
                let is_relaxed = relaxed.get(&f).is_some_and(|c| c.contains(&r.cycle));
                let (lo, fix1) = match &windows {
                    Some(w) => {
                        let w = w[&key];
                        let own = min_steps(r.spec, grid);
                        (w.k_min, if is_relaxed { kk + 1 } else { w.k_max + 1 - own })
                    }
                    None => (release, if is_relaxed { kk + 1 } else { kk }),
                };
                (lo, fix1, is_relaxed)
            })
            .collect();
        let begin = stages.len();
        for (i, r) in seq.iter().enumerate() {
            let key = StageKey::new(f, r.cycle, r.stage);
            let (lo, fix1, is_relaxed) = bounds[i];
            let last = if i + 1 < n { kk.min(bounds[i + 1].1 - 1) } else { kk };
            let first = lo + 1;
            let mut x = Vec::with_capacity(kk);
            for k in 1..=kk {
                x.push(if k <= lo {
                    Bit::Zero
                } else if k >= fix1 {
                    Bit::One
                } else {
                    Bit::Var(model.binary(stage_name("x", key, k))?)
                });
            }
            let mut p = vec![None; kk];
            let mut y = vec![None; kk];
            if r.spec.p_max_kw > 0.0 {
                for k in first..=last {
                    p[k - 1] = Some(model.continuous(stage_name("p", key, k), 0.0, r.spec.p_max_kw)?);
                    if r.spec.needs_on_binary() {
                        y[k - 1] = Some(model.binary(stage_name("y", key, k))?);
                    }
                }
            }
            let zeta = if is_relaxed {
                let z = model.continuous(key_name("zeta", key), 0.0, 1.0)?;
                let mut e = Affine::var(z);
                x[kk - 1].add_to(&mut e, -1.0);
                model.add_constraint(key_name("zdef", key), &e, Sense::Eq, 0.0)?;
                Some(z)
            } else {
                None
            };
            for k in first..=last {
                if let Some(v) = p[k - 1] {
                    furnace_power[k - 1].add_term(v, 1.0);
                }
            }
            stages.push(StageVars { key, furnace_index: fi, relaxed: is_relaxed, x, p, y, zeta, first, last });
        }
        spans.push((fi, begin..stages.len()));
    }

    let mut defs = Vec::new();
    for (fi, span) in &spans {
        add_furnace_rows(&mut model, instance, *fi, grid, &stages[span.clone()], &mut defs)?;
    }

    // Day-after flexibility bookkeeping.
    let mut buffer_margin = Affine::default();
    let mut shifted_energy = None;
    if let Some(daf) = daf {
        let mut de = Affine::default();
        let rate = line.last_rate() * share;
        for s in stages.iter().filter(|s| s.relaxed) {
            let spec = stage_spec(instance, s.key);
            let z = s.zeta.expect("relaxed stages carry zeta");
            if spec.is_energy() {
                de.constant += spec.min_energy_kwh;
                de.add_term(z, -spec.min_energy_kwh);
            }
            let steps = daf.scheduled_steps.get(&s.key).copied().unwrap_or_else(|| min_steps(spec, grid));
            let secs = steps as f64 * dt_s;
            buffer_margin.constant += rate * secs;
            buffer_margin.add_term(z, -rate * secs);
        }
        let cap = daf.max_shift_energy_kwh.unwrap_or(f64::INFINITY);
        let v = model.continuous("dE", 0.0, cap)?;
        let mut e = Affine::var(v);
        e.add_scaled(&de, -1.0);
        model.add_constraint("dE_def", &e, Sense::Eq, 0.0)?;
        shifted_energy = Some(v);
    }

    // Buffer level, holding power and ladles.
    let committed_taps = opts.committed.as_ref().map(|c| c.taps(instance)).unwrap_or_default();
    let full_buffer = opts.committed.as_ref().is_some_and(|c| c.full_buffer);
    let buffer_share = if full_buffer { 1.0 } else { share };
    let v0 = instance.initial_buffer(li);
    let mut buffer = Vec::with_capacity(kk);
    let mut holding = Vec::with_capacity(kk);
    let floor = buffer_share * (line.vmin_m3 + line.safety_margin_m3);
    for k in 1..=kk {
        let ki = k as i64;
        let mut b = Affine::constant(buffer_share * (v0 - cast_volume(&line.casting_segments, k, grid.step_seconds)));
        if full_buffer {
            for &(fi, s) in &committed_taps {
                let fs = &instance.furnaces[fi];
                let at = s + fs.delivery_time_steps as i64;
                if at <= ki && at >= 1 {
                    b.constant += fs.tap_volume_m3;
                }
            }
        }
        for &fi in &furnaces {
            let fs = &instance.furnaces[fi];
            let d = fs.delivery_time_steps as i64;
            for &s in instance.prior_taps(fi) {
                if s + d <= ki && s + d >= 1 {
                    b.constant += fs.tap_volume_m3;
                }
            }
        }
        for s in &stages {
            let fs = &instance.furnaces[s.furnace_index];
            if !stage_spec(instance, s.key).is_tapping {
                continue;
            }
            let at = ki - fs.delivery_time_steps as i64;
            if at >= 1 {
                s.x[at as usize - 1].add_to(&mut b, fs.tap_volume_m3);
            }
        }
        let mut lower = b.clone();
        lower.add_scaled(&buffer_margin, -1.0);
        model.add_constraint(format!("bmin_k{k}"), &lower, Sense::Ge, floor)?;
        model.add_constraint(format!("bmax_k{k}"), &b, Sense::Le, buffer_share * line.vmax_m3)?;
        holding.push(b.scaled(line.gamma_kw_per_m3));
        buffer.push(b);
    }

    if let Some(limit) = line.ladle_limit {
        let limit = if share < 1.0 && opts.committed.is_none() { ((limit as f64 * share).floor() as usize).max(1) } else { limit };
        for k in 1..=kk {
            let ki = k as i64;
            let mut e = Affine::default();
            for &(fi, s) in &committed_taps {
                let rt = instance.furnaces[fi].roundtrip_time_steps as i64;
                if s <= ki && s > ki - rt {
                    e.constant += 1.0;
                }
            }
            for &fi in &furnaces {
                let rt = instance.furnaces[fi].roundtrip_time_steps as i64;
                e.constant += instance.prior_taps(fi).iter().filter(|&&s| s <= ki && s > ki - rt).count() as f64;
            }
            for s in &stages {
                if !stage_spec(instance, s.key).is_tapping {
                    continue;
                }
                let rt = instance.furnaces[s.furnace_index].roundtrip_time_steps as i64;
                s.x[k - 1].add_to(&mut e, 1.0);
                let back = ki - rt;
                if back >= 1 {
                    s.x[back as usize - 1].add_to(&mut e, -1.0);
                }
            }
            model.add_constraint(format!("ladle_k{k}"), &e, Sense::Le, limit as f64)?;
        }
    }

    // Power caps: each power unit, then the line's share of the global cap.
    let mut units: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &fi in &furnaces {
        units.entry(instance.furnaces[fi].power_unit_id.as_str()).or_default().push(fi);
    }
    let line_furnaces = instance.line_furnaces(li);
    for (unit, members) in &units {
        let all = instance.unit_furnaces(unit);
        let in_line = all.iter().filter(|f| line_furnaces.contains(f)).count();
        let cap = instance.power_units[*unit] * in_line as f64 / all.len() as f64;
        let chosen: Vec<&StageVars> = stages.iter().filter(|s| members.contains(&s.furnace_index)).collect();
        add_cap_rows(&mut model, instance, &format!("unit_{unit}"), &chosen, kk, cap)?;
    }
    let all: Vec<&StageVars> = stages.iter().collect();
    add_cap_rows(&mut model, instance, "linecap", &all, kk, instance.line_cap(li) * share)?;

    Ok(ProcessModel {
        model,
        line: li,
        furnaces,
        stages,
        furnace_power,
        buffer,
        holding,
        shifted_energy,
        buffer_margin,
        share,
        defined: defs,
    })
}

fn stage_spec(instance: &PlantInstance, key: StageKey) -> &crate::plant::StageSpec {
    &instance.furnaces[key.furnace - 1].cycles[key.cycle - 1].stages[key.stage - 1]
}

fn add_cap_rows(
    model: &mut MilpModel,
    instance: &PlantInstance,
    tag: &str,
    stages: &[&StageVars],
    kk: usize,
    cap: f64,
) -> Result<(), MilpError> {
    let tag: String = tag.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    for k in 1..=kk {
        let mut e = Affine::default();
        let mut reach = 0.0;
        for s in stages {
            if let Some(v) = s.p[k - 1] {
                e.add_term(v, 1.0);
                reach += stage_spec(instance, s.key).p_max_kw;
            }
        }
        if reach > cap {
            model.add_constraint(format!("{tag}_k{k}"), &e, Sense::Le, cap)?;
        }
    }
    Ok(())
}

/// Stage order, durations, power bounds, energy with heat loss, reheat, ramp
/// and the charge-melting splash/overflow envelope for one furnace.
fn add_furnace_rows(
    model: &mut MilpModel,
    instance: &PlantInstance,
    fi: usize,
    grid: &TimeGrid,
    stages: &[StageVars],
    defs: &mut Vec<(VarId, Affine)>,
) -> Result<(), MilpError> {
    let kk = grid.horizon_steps;
    let dt_h = grid.step_hours();
    let dt_s = grid.step_seconds as f64;
    let furnace = &instance.furnaces[fi];
    let n = stages.len();
    let next_x = |i: usize, k: usize| -> Bit { if i + 1 < n { stages[i + 1].x[k - 1] } else { Bit::Zero } };
    let active = |i: usize, k: usize| -> Affine {
        let mut e = Affine::default();
        stages[i].x[k - 1].add_to(&mut e, 1.0);
        next_x(i, k).add_to(&mut e, -1.0);
        e
    };
    let duration = |i: usize| -> Affine {
        let mut e = Affine::default();
        for k in 1..=kk {
            stages[i].x[k - 1].add_to(&mut e, 1.0);
            next_x(i, k).add_to(&mut e, -1.0);
        }
        e
    };
    // Completion condition: 1 for ordinary stages; for a shifted-cycle stage,
    // whether its successor (or itself, for the last stage) starts today.
    let completes = |i: usize| -> Affine {
        let s = &stages[i];
        if !s.relaxed {
            return Affine::constant(1.0);
        }
        let z = if i + 1 < n { stages[i + 1].zeta } else { s.zeta };
        Affine::var(z.expect("relaxed successor carries zeta"))
    };

    for (i, s) in stages.iter().enumerate() {
        let key = s.key;
        let spec = stage_spec(instance, key);
        let tag = |p: &str| key_name(p, key);

        for k in 1..kk {
            if let (Bit::Var(a), Bit::Var(b)) = (s.x[k - 1], s.x[k]) {
                let e = Affine { terms: vec![(a, 1.0), (b, -1.0)], constant: 0.0 };
                model.add_constraint(stage_name("mono", key, k), &e, Sense::Le, 0.0)?;
            }
        }
        if i > 0 {
            for k in 1..=kk {
                let prev = stages[i - 1].x[k - 1];
                if s.x[k - 1] == Bit::Zero || prev == Bit::One {
                    continue;
                }
                let mut e = Affine::default();
                s.x[k - 1].add_to(&mut e, 1.0);
                prev.add_to(&mut e, -1.0);
                model.add_constraint(stage_name("ord", key, k), &e, Sense::Le, 0.0)?;
            }
        }

        let mut energy = Affine::default();
        for k in s.first..=s.last {
            let Some(p) = s.p[k - 1] else { continue };
            energy.add_term(p, dt_h);
            let act = active(i, k);
            if let Some(y) = s.y[k - 1] {
                let e = Affine { terms: vec![(p, 1.0), (y, -spec.p_max_kw)], constant: 0.0 };
                model.add_constraint(stage_name("pmax", key, k), &e, Sense::Le, 0.0)?;
                if spec.p_min_kw > 0.0 {
                    let e = Affine { terms: vec![(p, 1.0), (y, -spec.p_min_kw)], constant: 0.0 };
                    model.add_constraint(stage_name("pmin", key, k), &e, Sense::Ge, 0.0)?;
                }
                let mut e = Affine::var(y);
                e.add_scaled(&act, -1.0);
                model.add_constraint(stage_name("on", key, k), &e, Sense::Le, 0.0)?;
            } else {
                let mut e = Affine::var(p);
                e.add_scaled(&act, -spec.p_max_kw);
                model.add_constraint(stage_name("pmax", key, k), &e, Sense::Le, 0.0)?;
                if spec.p_min_kw > 0.0 {
                    let mut e = Affine::var(p);
                    e.add_scaled(&act, -spec.p_min_kw);
                    model.add_constraint(stage_name("pmin", key, k), &e, Sense::Ge, 0.0)?;
                }
            }
        }

        let cond = completes(i);
        let own_steps = min_steps(spec, grid) as f64;
        match spec.kind {
            StageKind::Time => {
                let mut e = duration(i);
                e.add_scaled(&cond, -own_steps);
                model.add_constraint(tag("dur"), &e, Sense::Ge, 0.0)?;
            }
            StageKind::Energy => {
                // energy ≥ Ê (1 + Σ α dur/Δ̂) over the loss group; relaxed by
                // big-M when the stage may be left unfinished.
                let base = i + 1 - key.stage;
                let mut e = energy.clone();
                let mut big_m = spec.min_energy_kwh;
                for g in furnace.loss_group(key.cycle - 1, key.stage - 1) {
                    let gs = &furnace.cycles[key.cycle - 1].stages[g];
                    let alpha = furnace.loss_coeff(gs);
                    if alpha == 0.0 {
                        continue;
                    }
                    let coef = spec.min_energy_kwh * alpha * dt_s / gs.nominal_duration_s();
                    e.add_scaled(&duration(base + g), -coef);
                    big_m += coef * kk as f64;
                }
                if stages[i].relaxed {
                    e.constant += big_m;
                    e.add_scaled(&cond, -big_m);
                }
                model.add_constraint(tag("energy"), &e, Sense::Ge, spec.min_energy_kwh)?;
            }
        }

        if let (Some(tau), true) = (spec.reheat_tau_s, spec.is_tapping) {
            let alpha = furnace.loss_coeff(spec);
            if i + 1 < n && alpha > 0.0 {
                let mut e = energy.clone();
                e.add_scaled(&duration(i), -alpha * dt_s / tau);
                e.constant += alpha;
                if stages[i + 1].relaxed {
                    let big_m = alpha * kk as f64 * dt_s / tau;
                    e.constant += big_m;
                    e.add_term(stages[i + 1].zeta.expect("relaxed stage carries zeta"), -big_m);
                }
                model.add_constraint(tag("reheat"), &e, Sense::Ge, 0.0)?;
            }
        }

        if let Some(r) = &spec.ramp {
            let mut count = None;
            for k in s.first..=s.last {
                let (Some(p), Some(y)) = (s.p[k - 1], s.y[k - 1]) else { continue };
                let c = running_sum(model, defs, stage_name("ons", key, k), count, &Affine::var(y), kk as f64)?;
                count = Some(c);
                let e = Affine { terms: vec![(p, 1.0), (c, -r.rate_limit_kw_per_s * dt_s)], constant: 0.0 };
                model.add_constraint(stage_name("ramp", key, k), &e, Sense::Le, r.initial_power_kw)?;
            }
        }

        if let Some(cm) = &spec.charge_melt {
            let mut cum = None;
            let mut act = None;
            let mut before = Affine::default();
            for k in 1..s.first {
                before.add_scaled(&active(i, k), 1.0);
            }
            for k in s.first..=s.last {
                let mut steps = active(i, k);
                if k == s.first {
                    steps.add_scaled(&before, 1.0);
                }
                let a = running_sum(model, defs, stage_name("act", key, k), act, &steps, kk as f64)?;
                let de = s.p[k - 1].map_or_else(Affine::default, |p| Affine { terms: vec![(p, dt_h)], constant: 0.0 });
                let c = running_sum(model, defs, stage_name("ecum", key, k), cum, &de, f64::INFINITY)?;
                act = Some(a);
                cum = Some(c);
                let hi = Affine { terms: vec![(c, 1.0), (a, -cm.splash_rate_kw * dt_h)], constant: 0.0 };
                model.add_constraint(stage_name("splash", key, k), &hi, Sense::Le, cm.splash_energy_kwh)?;
                let lo = Affine { terms: vec![(c, 1.0), (a, -cm.overflow_rate_kw * dt_h)], constant: 0.0 };
                model.add_constraint(
                    stage_name("overflow", key, k),
                    &lo,
                    Sense::Ge,
                    -cm.overflow_rate_kw * cm.overflow_time_s / 3600.0,
                )?;
            }
        }
    }
    Ok(())
}

/// Continuous `s^k = s^{k-1} + increment`, recorded so warm starts can fill it.
fn running_sum(
    model: &mut MilpModel,
    defs: &mut Vec<(VarId, Affine)>,
    name: String,
    prev: Option<VarId>,
    increment: &Affine,
    upper: f64,
) -> Result<VarId, MilpError> {
    let v = model.continuous(name.clone(), 0.0, upper)?;
    let mut def = increment.clone();
    if let Some(p) = prev {
        def.add_term(p, 1.0);
    }
    let mut e = Affine::var(v);
    e.add_scaled(&def, -1.0);
    model.add_constraint(format!("{name}_def"), &e, Sense::Eq, 0.0)?;
    defs.push((v, def));
    Ok(v)
}

impl ProcessModel {
    /// Full assignment of the process variables reproducing `stages`.
    pub fn assignment(&self, instance: &PlantInstance, stages: &[StageSchedule]) -> BTreeMap<String, f64> {
        let kk = self.furnace_power.len();
        let mut out = BTreeMap::new();
        let mut de = 0.0;
        for s in &self.stages {
            let found = stages
                .iter()
                .find(|t| t.furnace == s.key.furnace && t.cycle == s.key.cycle && t.stage == s.key.stage);
            let start = found.and_then(|t| t.start_step);
            for k in 1..=kk {
                let on = start.is_some_and(|st| st <= k);
                if let Bit::Var(v) = s.x[k - 1] {
                    out.insert(self.model.variables[v.0].name.clone(), if on { 1.0 } else { 0.0 });
                }
                let p = found.map_or(0.0, |t| t.power_kw[k - 1]);
                if let Some(v) = s.p[k - 1] {
                    out.insert(self.model.variables[v.0].name.clone(), p);
                }
                if let Some(v) = s.y[k - 1] {
                    out.insert(self.model.variables[v.0].name.clone(), if p > 1e-9 { 1.0 } else { 0.0 });
                }
            }
            if let Some(z) = s.zeta {
                let started = start.is_some_and(|st| st <= kk);
                out.insert(self.model.variables[z.0].name.clone(), if started { 1.0 } else { 0.0 });
                if !started {
                    de += stage_spec(instance, s.key).min_energy_kwh;
                }
            }
        }
        if let Some(v) = self.shifted_energy {
            out.insert(self.model.variables[v.0].name.clone(), de);
        }
        let mut dense = self.model.dense_values(&out);
        for (v, def) in &self.defined {
            dense[v.0] = def.eval(&dense);
            out.insert(self.model.variables[v.0].name.clone(), dense[v.0]);
        }
        out
    }

    /// Stage schedules from solver values. A stage that is not allowed to shift
    /// but never starts is reported as a solver inconsistency.
    pub fn extract_stages(
        &self,
        instance: &PlantInstance,
        grid: &TimeGrid,
        values: &[f64],
    ) -> Result<Vec<StageSchedule>, MilpError> {
        let kk = grid.horizon_steps;
        let mut out = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            let start = (1..=kk).find(|&k| s.x[k - 1].value(values) > 0.5);
            if start.is_none() && !s.relaxed {
                return Err(MilpError::MissingVariable(format!(
                    "{} never reaches 1",
                    key_name("x", s.key)
                )));
            }
            let power = (1..=kk)
                .map(|k| {
                    let v = s.p[k - 1].map_or(0.0, |p| values[p.0]);
                    if v.abs() < 1e-9 {
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            let spec = stage_spec(instance, s.key);
            out.push(StageSchedule {
                furnace: s.key.furnace,
                cycle: s.key.cycle,
                stage: s.key.stage,
                furnace_id: instance.furnaces[s.furnace_index].id.clone(),
                name: spec.name.clone(),
                start_step: start,
                start_time_s: start.map(|st| ((st - 1) as u64 * grid.step_seconds) as f64),
                power_kw: power,
            });
        }
        Ok(out)
    }

    /// Baseline power of settlement interval `q` (1-based) as an expression.
    pub fn baseline_expr(&self, grid: &TimeGrid, q: usize, include_holding: bool) -> Affine {
        let nq = grid.settlement_steps;
        let mut e = Affine::default();
        for k in (q - 1) * nq + 1..=q * nq {
            e.add_scaled(&self.furnace_power[k - 1], 1.0 / nq as f64);
            if include_holding {
                e.add_scaled(&self.holding[k - 1], 1.0 / nq as f64);
            }
        }
        e
    }

    /// Metered power at step `k` (furnaces plus holding) as an expression.
    pub fn total_power(&self, k: usize) -> Affine {
        let mut e = self.furnace_power[k - 1].clone();
        e.add_scaled(&self.holding[k - 1], 1.0);
        e
    }
}

/// Complete a line schedule from its stage schedules: buffer trace from the
/// closed-form balance, holding power and baseline.
pub fn finish_line_schedule(
    instance: &PlantInstance,
    li: usize,
    grid: &TimeGrid,
    mut stages: Vec<StageSchedule>,
    include_holding: bool,
) -> LineSchedule {
    let kk = grid.horizon_steps;
    let line = &instance.lines[li];
    stages.sort_by_key(|s| (s.furnace, s.cycle, s.stage));
    let mut taps: Vec<(usize, i64)> = Vec::new();
    for fi in instance.line_furnaces(li) {
        for &s in instance.prior_taps(fi) {
            taps.push((fi, s));
        }
    }
    for s in &stages {
        let fi = s.furnace - 1;
        if instance.furnaces[fi].cycles[s.cycle - 1].stages[s.stage - 1].is_tapping {
            if let Some(st) = s.start_step {
                taps.push((fi, st as i64));
            }
        }
    }
    let v0 = instance.initial_buffer(li);
    let buffer: Vec<f64> = (1..=kk)
        .map(|k| {
            let mut v = v0 - cast_volume(&line.casting_segments, k, grid.step_seconds);
            for &(fi, s) in &taps {
                let land = s + instance.furnaces[fi].delivery_time_steps as i64;
                if land >= 1 && land <= k as i64 {
                    v += instance.furnaces[fi].tap_volume_m3;
                }
            }
            v
        })
        .collect();
    let holding = buffer.iter().map(|b| line.gamma_kw_per_m3 * b).collect();
    let mut ls = LineSchedule {
        line: line.id.clone(),
        stages,
        buffer_m3: buffer,
        holding_power_kw: holding,
        baseline_kw: Vec::new(),
        baseline_includes_holding: include_holding,
        objective_eur: 0.0,
    };
    ls.baseline_kw = super::compute_baseline(&ls, grid);
    ls
}
