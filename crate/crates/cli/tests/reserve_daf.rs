use std::path::Path;

use dsm_core::eas::{solve_line, EasConfig};
use dsm_core::grid::build_time_grid;
use dsm_core::milp::{SolveOptions, SolverProfile};
use dsm_core::plant::testing::{energy_stage, single_furnace, tap_stage, time_stage};
use dsm_core::plant::{validate_schedule, Schedule, ValidationOptions};
use dsm_core::reserve::{solve_interval, DafMode, ReserveParams, ReservePrices};

/// The second melt finishes at full power right before the horizon ends, so
/// only shifting it to the next day frees capacity in the last hour.
#[test]
fn relaxed_last_cycle_frees_final_block_capacity() {
    let grid = build_time_grid(300, 21_600, 900, 3600, 3600).unwrap();
    let cycle = vec![time_stage(900.0), energy_stage(250.0, 250.0), tap_stage(600.0)];
    let mut inst = single_furnace(vec![cycle.clone(), cycle]);
    inst.furnaces[0].daf_relaxed_cycles = vec![2];
    inst.check().unwrap();

    let prices: Vec<f64> = (0..grid.horizon_steps).map(|k| if k >= 48 { 10.0 } else { 50.0 + k as f64 * 0.1 }).collect();
    let profile = SolverProfile::highs_runner(Path::new(env!("CARGO_BIN_EXE_dsm-highs")));
    let opts = SolveOptions { mip_gap: 1e-9, time_limit_s: 120.0, ..SolveOptions::default() };
    let eas = solve_line(&inst, 0, &grid, &prices, &EasConfig::default(), &profile, &opts).unwrap().schedule;

    let with = ReserveParams { daf: DafMode::Always, max_shift_energy_kwh: Some(300.0), ..ReserveParams::default() };
    let without = ReserveParams { daf: DafMode::Never, ..with.clone() };
    let rp = ReservePrices::from_day_ahead(prices, &with);
    // First interval of the last hour, where the furnace melts at full power.
    let q = grid.num_settlements() - 3;
    assert!(eas.baseline_kw[q - 1] > 200.0, "baseline {}", eas.baseline_kw[q - 1]);

    let a = solve_interval(&inst, 0, &grid, &eas, &rp, &with, q, &profile, &opts).unwrap();
    let b = solve_interval(&inst, 0, &grid, &eas, &rp, &without, q, &profile, &opts).unwrap();
    assert!(b.reserve_kw < 1e-6, "without shifting: {}", b.reserve_kw);
    assert!(a.reserve_kw > 100.0, "with shifting: {}", a.reserve_kw);
    // Only stages that never start today count as shifted energy; a melt
    // that starts and stops short does not.
    assert!(a.shifted_energy_kwh >= 0.0 && a.shifted_energy_kwh <= 300.0 + 1e-6, "shifted {}", a.shifted_energy_kwh);

    let c = a.contingency.expect("contingency schedule");
    let mut vopts = ValidationOptions { tol: 1e-6, allow_shift: true, ..ValidationOptions::default() };
    vopts.buffer_margin.insert(c.line.clone(), a.buffer_margin_m3);
    let report = validate_schedule(&inst, &grid, &Schedule::from_lines("contingency", &grid, vec![c]), &vopts).unwrap();
    assert!(report.is_clean(), "{:?}", report.violations);
}
