#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(inst) = dsm_core::plant::PlantInstance::from_json_str(text) {
            let _ = dsm_core::grid::stage_windows(&inst, &dsm_core::grid::TimeGrid::table1());
        }
    }
});
