//! Replays the checked-in fuzz corpus through the parsers so stable builds
//! exercise the same inputs as the fuzz targets.

use std::path::PathBuf;

use dsm_core::grid::{stage_windows, TimeGrid};
use dsm_core::market::{expand_to_grid, parse_prices_csv};
use dsm_core::milp::{parse_listing, parse_start, parse_xml};
use dsm_core::plant::{PlantInstance, Schedule};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn plant_json_seeds() {
    let mut ok = 0;
    for (name, text) in seeds("plant_json") {
        match PlantInstance::from_json_str(&text) {
            Ok(inst) => {
                let _ = stage_windows(&inst, &TimeGrid::table1());
                ok += 1;
            }
            Err(e) => assert_eq!(name, "empty_lines", "{e}"),
        }
    }
    assert_eq!(ok, 2);
}

#[test]
fn schedule_json_seeds() {
    for (name, text) in seeds("schedule_json") {
        assert!(Schedule::from_json_str(&text).is_ok(), "{name}");
    }
}

#[test]
fn prices_csv_seeds() {
    for (name, text) in seeds("prices_csv") {
        let parsed = parse_prices_csv(&text, 3600, "seed").and_then(|s| expand_to_grid(&s, &TimeGrid::table1()));
        let quarter = parse_prices_csv(&text, 900, "seed").and_then(|s| expand_to_grid(&s, &TimeGrid::table1()));
        match name.as_str() {
            "demo_hourly" => assert_eq!(parsed.unwrap().len(), 288),
            "quarter_hourly" => assert_eq!(quarter.unwrap().len(), 288),
            _ => assert!(parsed.is_err()),
        }
    }
}

#[test]
fn solution_seeds() {
    for (name, text) in seeds("solution_listing") {
        let listing = parse_listing(&text);
        assert_eq!(listing.is_ok(), name != "start_file", "{name}");
        assert!(parse_start(&text).is_ok() || name != "start_file");
    }
    for (name, text) in seeds("solution_xml") {
        assert!(parse_xml(&text).is_ok(), "{name}");
    }
}
