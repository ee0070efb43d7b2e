use serde::{Deserialize, Serialize};

use crate::grid::TimeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub furnace: usize,
    pub cycle: usize,
    pub stage: usize,
    pub furnace_id: String,
    pub name: String,
    /// First step at which the stage is active; `None` if shifted past the horizon.
    pub start_step: Option<usize>,
    pub start_time_s: Option<f64>,
    pub power_kw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSchedule {
    pub line: String,
    pub stages: Vec<StageSchedule>,
    pub buffer_m3: Vec<f64>,
    pub holding_power_kw: Vec<f64>,
    pub baseline_kw: Vec<f64>,
    pub baseline_includes_holding: bool,
    pub objective_eur: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub label: String,
    pub step_seconds: u64,
    pub horizon_steps: usize,
    pub settlement_steps: usize,
    pub lines: Vec<LineSchedule>,
    pub objective_eur: f64,
}

impl LineSchedule {
    /// Melting-furnace power at 1-based step `k`.
    pub fn furnace_power(&self, k: usize) -> f64 {
        self.stages.iter().map(|s| s.power_kw[k - 1]).sum()
    }

    /// Metered power at step `k`: furnaces plus holding furnaces.
    pub fn total_power(&self, k: usize) -> f64 {
        self.furnace_power(k) + self.holding_power_kw[k - 1]
    }

    /// Power counted in the baseline at step `k`.
    pub fn baseline_power(&self, k: usize) -> f64 {
        if self.baseline_includes_holding {
            self.total_power(k)
        } else {
            self.furnace_power(k)
        }
    }

    pub fn horizon(&self) -> usize {
        self.buffer_m3.len()
    }

    pub fn energy_kwh(&self, grid: &TimeGrid) -> f64 {
        (1..=self.horizon()).map(|k| self.total_power(k)).sum::<f64>() * grid.step_hours()
    }
}

impl Schedule {
    pub fn from_lines(label: &str, grid: &TimeGrid, lines: Vec<LineSchedule>) -> Schedule {
        let objective_eur = lines.iter().map(|l| l.objective_eur).sum();
        Schedule {
            label: label.to_string(),
            step_seconds: grid.step_seconds,
            horizon_steps: grid.horizon_steps,
            settlement_steps: grid.settlement_steps,
            lines,
            objective_eur,
        }
    }

    pub fn line(&self, id: &str) -> Option<&LineSchedule> {
        self.lines.iter().find(|l| l.line == id)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Schedule, serde_json::Error> {
        serde_json::from_str(text)
    }
}
