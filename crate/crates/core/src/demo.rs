//! Bundled synthetic demo: two casting lines with two furnaces each, two melt
//! cycles per furnace, on the 5 min / 15 min / 1 h / 4 h grid.

use crate::grid::TimeGrid;
use crate::market::{parse_prices_csv, PriceSeries};
use crate::plant::PlantInstance;

pub const DEMO_PLANT_JSON: &str = include_str!("../data/demo_plant.json");
pub const DEMO_PRICES_CSV: &str = include_str!("../data/demo_prices.csv");

pub fn demo_instance() -> PlantInstance {
    PlantInstance::from_json_str(DEMO_PLANT_JSON).expect("bundled demo instance is valid")
}

pub fn demo_grid() -> TimeGrid {
    TimeGrid::table1()
}

/// Hourly prices with morning (08-11) and evening (17-20) peaks over a slowly
/// varying base.
pub fn demo_prices() -> PriceSeries {
    parse_prices_csv(DEMO_PRICES_CSV, 3600, "two-peak").expect("bundled demo prices are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::stage_windows;

    #[test]
    fn demo_is_consistent() {
        let inst = demo_instance();
        assert_eq!(inst.lines.len(), 2);
        assert_eq!(inst.furnaces.len(), 4);
        assert!(inst.furnaces.iter().all(|f| f.cycles.len() == 2));
        assert!(stage_windows(&inst, &demo_grid()).is_ok());
        assert_eq!(demo_prices().values.len(), 24);
    }
}
