use std::path::Path;

use dsm_core::eas::{decompose_and_warmstart, EasConfig};
use dsm_core::grid::build_time_grid;
use dsm_core::milp::{SolveOptions, SolverProfile};
use dsm_core::plant::testing::{energy_stage, single_furnace, tap_stage, time_stage};
use dsm_core::plant::{validate_schedule, CastSegment, Schedule, ValidationOptions};

/// Two furnaces on separate power units sharing one ladle. Split in half, the
/// buffer would make both furnaces tap at the same time.
#[test]
fn single_ladle_decomposition_yields_a_feasible_incumbent() {
    let grid = build_time_grid(300, 14_400, 900, 3600, 3600).unwrap();
    let cycle = vec![time_stage(900.0), energy_stage(250.0, 250.0), tap_stage(600.0)];
    let mut inst = single_furnace(vec![cycle]);
    let mut f2 = inst.furnaces[0].clone();
    f2.id = "F2".into();
    f2.power_unit_id = "U2".into();
    inst.furnaces.push(f2);
    inst.power_units.insert("U2".into(), 1e6);
    for f in &mut inst.furnaces {
        f.tap_volume_m3 = 3.0;
        f.delivery_time_steps = 1;
        f.roundtrip_time_steps = 6;
    }
    let line = &mut inst.lines[0];
    line.furnaces.push("F2".into());
    line.v0_m3 = 2.4;
    line.vmin_m3 = 0.5;
    line.vmax_m3 = 10.0;
    line.casting_segments = vec![CastSegment { breakpoint_step: 0, rate_m3_per_s: 0.0003125 }];
    line.ladle_limit = Some(1);
    inst.check().unwrap();

    let prices: Vec<f64> = (0..grid.horizon_steps).map(|k| if k < 24 { 60.0 } else { 20.0 }).collect();
    let profile = SolverProfile::highs_runner(Path::new(env!("CARGO_BIN_EXE_dsm-highs")));
    let opts = SolveOptions { mip_gap: 1e-9, time_limit_s: 120.0, ..SolveOptions::default() };
    let r = decompose_and_warmstart(&inst, 0, &grid, &prices, &EasConfig::default(), &profile, &opts).unwrap();
    assert_eq!(r.subproblems, 2);
    let inc = r.incumbent.expect("merged schedule feasible");
    let inc_obj = r.incumbent_objective.unwrap();
    assert!(r.outcome.model_objective <= inc_obj + 1e-6 * inc_obj.abs().max(1.0));
    let s = Schedule::from_lines("incumbent", &grid, vec![inc]);
    let report = validate_schedule(&inst, &grid, &s, &ValidationOptions { tol: 1e-6, ..ValidationOptions::default() }).unwrap();
    assert!(report.is_clean(), "{:?}", report.violations);
}
