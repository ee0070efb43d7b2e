#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = dsm_core::milp::parse_listing(text);
        let _ = dsm_core::milp::parse_start(text);
    }
});
