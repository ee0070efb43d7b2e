#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for res in [900, 3600] {
            if let Ok(s) = dsm_core::market::parse_prices_csv(text, res, "fuzz") {
                let _ = dsm_core::market::expand_to_grid(&s, &dsm_core::grid::TimeGrid::table1());
            }
        }
    }
});
