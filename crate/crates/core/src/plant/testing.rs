//! Small instance builders shared by unit and integration tests.
#![doc(hidden)]

use std::collections::BTreeMap;

use super::*;

pub fn energy_stage(min_energy_kwh: f64, p_max_kw: f64) -> StageSpec {
    StageSpec {
        name: "heat".into(),
        kind: StageKind::Energy,
        min_energy_kwh,
        min_duration_s: 0.0,
        loss_coeff: None,
        p_min_kw: 0.0,
        p_max_kw,
        semi_continuous: false,
        is_tapping: false,
        reheat_tau_s: None,
        ramp: None,
        charge_melt: None,
    }
}

pub fn time_stage(min_duration_s: f64) -> StageSpec {
    StageSpec {
        name: "wait".into(),
        kind: StageKind::Time,
        min_duration_s,
        min_energy_kwh: 0.0,
        ..energy_stage(1.0, 0.0)
    }
}

pub fn tap_stage(min_duration_s: f64) -> StageSpec {
    StageSpec {
        name: "tapping".into(),
        is_tapping: true,
        ..time_stage(min_duration_s)
    }
}

/// One furnace on one line with loose caps and an inert buffer.
pub fn single_furnace(cycles: Vec<Vec<StageSpec>>) -> PlantInstance {
    PlantInstance {
        name: "single".into(),
        lines: vec![CastingLineSpec {
            id: "L1".into(),
            furnaces: vec!["F1".into()],
            v0_m3: 0.0,
            vmin_m3: 0.0,
            vmax_m3: 1e6,
            gamma_kw_per_m3: 0.0,
            casting_segments: vec![CastSegment { breakpoint_step: 0, rate_m3_per_s: 0.0 }],
            ladle_limit: None,
            safety_margin_m3: 0.0,
            p_max_kw: None,
        }],
        furnaces: vec![FurnaceSpec {
            id: "F1".into(),
            power_unit_id: "U1".into(),
            cycles: cycles.into_iter().map(|stages| MeltCycleSpec { stages }).collect(),
            tap_volume_m3: 0.0,
            delivery_time_steps: 0,
            roundtrip_time_steps: 0,
            daf_relaxed_cycles: vec![],
            loss_coeffs: BTreeMap::new(),
        }],
        power_units: BTreeMap::from([("U1".to_string(), 1e6)]),
        global_p_max_kw: 1e6,
        initial_state: InitialState::default(),
    }
}

/// Seven-stage melt cycle laid out like the furnace state machine.
pub fn demo_like_furnace() -> FurnaceSpec {
    let named = |mut s: StageSpec, name: &str| {
        s.name = name.into();
        s
    };
    let stages = vec![
        named(time_stage(3600.0), "loading"),
        named(energy_stage(500.0, 1000.0), "primary_heating"),
        named(energy_stage(2000.0, 1000.0), "charge_melting"),
        named(energy_stage(500.0, 1000.0), "melting"),
        named(time_stage(1800.0), "analysis"),
        named(energy_stage(300.0, 1000.0), "overheating"),
        named(tap_stage(1800.0), "tapping"),
    ];
    let mut inst = single_furnace(vec![stages]);
    inst.furnaces.remove(0)
}
