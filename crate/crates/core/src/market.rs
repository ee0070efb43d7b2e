//! Price series ingestion, grid expansion and time-of-use tariffs.
//!
//! Prices are €/MWh at the boundary and converted to €/kWh once, inside the
//! model builders.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::TimeGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("price series is not contiguous at {0}")]
    GapDetected(String),
    #[error("price file has no rows")]
    EmptyFile,
    #[error("series resolution {resolution_s} s is not a multiple of the {step_s} s grid step")]
    NonDivisible { resolution_s: u64, step_s: u64 },
    #[error("series covers {got} s but the horizon is {expected} s")]
    HorizonMismatch { expected: u64, got: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub label: String,
    pub resolution_s: u64,
    /// €/MWh per interval.
    pub values: Vec<f64>,
}

impl PriceSeries {
    pub fn flat(label: &str, resolution_s: u64, n: usize, price: f64) -> PriceSeries {
        PriceSeries { label: label.into(), resolution_s, values: vec![price; n] }
    }

    pub fn duration_s(&self) -> u64 {
        self.resolution_s * self.values.len() as u64
    }

    /// Time-weighted mean price, €/MWh.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn scaled(&self, label: &str, factor: f64) -> PriceSeries {
        PriceSeries {
            label: label.into(),
            resolution_s: self.resolution_s,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Interval start as seconds. Accepts RFC 3339, `YYYY-MM-DD HH:MM[:SS]`,
/// `YYYY-MM-DDTHH:MM[:SS]` or a bare number of seconds.
fn parse_stamp(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    None
}

/// Parse a price CSV with header `interval_start,price_eur_mwh`.
pub fn parse_prices_csv(text: &str, resolution_s: u64, label: &str) -> Result<PriceSeries, MarketError> {
    if resolution_s == 0 {
        return Err(MarketError::MalformedRow { line: 0, reason: "resolution must be positive".into() });
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| MarketError::MalformedRow { line: 1, reason: e.to_string() })?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["interval_start", "price_eur_mwh"] {
        return Err(MarketError::MalformedRow {
            line: 1,
            reason: format!("expected header `interval_start,price_eur_mwh`, got `{}`", cols.join(",")),
        });
    }
    let mut values = Vec::new();
    let mut prev: Option<i64> = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| MarketError::MalformedRow { line, reason: e.to_string() })?;
        if rec.len() != 2 {
            return Err(MarketError::MalformedRow { line, reason: format!("expected 2 fields, got {}", rec.len()) });
        }
        let stamp = parse_stamp(&rec[0])
            .ok_or_else(|| MarketError::MalformedRow { line, reason: format!("bad timestamp `{}`", &rec[0]) })?;
        let price: f64 = rec[1]
            .parse()
            .ok()
            .filter(|p: &f64| p.is_finite())
            .ok_or_else(|| MarketError::MalformedRow { line, reason: format!("bad price `{}`", &rec[1]) })?;
        if let Some(p) = prev {
            if stamp - p != resolution_s as i64 {
                return Err(MarketError::GapDetected(rec[0].to_string()));
            }
        }
        prev = Some(stamp);
        values.push(price);
    }
    if values.is_empty() {
        return Err(MarketError::EmptyFile);
    }
    Ok(PriceSeries { label: label.into(), resolution_s, values })
}

pub fn load_prices_csv(path: &Path, resolution_s: u64) -> Result<PriceSeries, MarketError> {
    let text = std::fs::read_to_string(path).map_err(|e| MarketError::Io(format!("{}: {e}", path.display())))?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_prices_csv(&text, resolution_s, &label)
}

/// Repeat each value over the grid steps it covers; one price per step.
pub fn expand_to_grid(series: &PriceSeries, grid: &TimeGrid) -> Result<Vec<f64>, MarketError> {
    if series.resolution_s % grid.step_seconds != 0 {
        return Err(MarketError::NonDivisible { resolution_s: series.resolution_s, step_s: grid.step_seconds });
    }
    if series.duration_s() != grid.horizon_seconds() {
        return Err(MarketError::HorizonMismatch { expected: grid.horizon_seconds(), got: series.duration_s() });
    }
    let rep = (series.resolution_s / grid.step_seconds) as usize;
    Ok(series.values.iter().flat_map(|&v| std::iter::repeat_n(v, rep)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Summer,
    Winter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayType {
    Weekday,
    Weekend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TouLevel {
    OffPeak,
    Shoulder,
    Peak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouTariff {
    pub off_peak: f64,
    pub shoulder: f64,
    pub peak: f64,
    pub season: Season,
    /// Half-open hour ranges `[from, to)`; hours not listed are off-peak.
    pub slots: Vec<(u32, u32, TouLevel)>,
}

impl TouTariff {
    /// Danish retail time-of-use tariff.
    pub fn danish(season: Season) -> TouTariff {
        use TouLevel::*;
        let slots = match season {
            Season::Summer => vec![(6, 8, Shoulder), (8, 12, Peak), (12, 21, Shoulder)],
            Season::Winter => vec![(6, 8, Shoulder), (8, 12, Peak), (12, 17, Shoulder), (17, 19, Peak), (19, 21, Shoulder)],
        };
        TouTariff { off_peak: 27.04, shoulder: 33.15, peak: 39.39, season, slots }
    }

    pub fn level_at(&self, hour: u32, day: DayType) -> TouLevel {
        if day == DayType::Weekend {
            return TouLevel::OffPeak;
        }
        self.slots
            .iter()
            .find(|&&(a, b, _)| a <= hour && hour < b)
            .map(|&(_, _, l)| l)
            .unwrap_or(TouLevel::OffPeak)
    }

    pub fn price(&self, level: TouLevel) -> f64 {
        match level {
            TouLevel::OffPeak => self.off_peak,
            TouLevel::Shoulder => self.shoulder,
            TouLevel::Peak => self.peak,
        }
    }
}

/// 24 hourly prices for one day.
pub fn tou_series(tariff: &TouTariff, day: DayType) -> PriceSeries {
    PriceSeries {
        label: format!("tou-{:?}-{:?}", tariff.season, day).to_lowercase(),
        resolution_s: 3600,
        values: (0..24).map(|h| tariff.price(tariff.level_at(h, day))).collect(),
    }
}

/// Default up-regulation penalty rate: 1.2 × day-ahead price.
pub const UP_PENALTY_FACTOR: f64 = 1.2;
/// Default down-regulation penalty rate: 0.2 × day-ahead price.
pub const DOWN_PENALTY_FACTOR: f64 = 0.2;

/// Per-step (up, down) imbalance penalty series in €/MWh.
pub fn penalty_series(day_ahead: &[f64], up_factor: f64, down_factor: f64) -> (Vec<f64>, Vec<f64>) {
    (
        day_ahead.iter().map(|p| (p * up_factor).max(0.0)).collect(),
        day_ahead.iter().map(|p| (p * down_factor).max(0.0)).collect(),
    )
}

/// Hourly series with a base price and raised price in the given hour ranges.
pub fn peaked_day(base: f64, peak: f64, peaks: &[(u32, u32)]) -> PriceSeries {
    PriceSeries {
        label: "two-peak".into(),
        resolution_s: 3600,
        values: (0..24).map(|h| if peaks.iter().any(|&(a, b)| a <= h && h < b) { peak } else { base }).collect(),
    }
}

/// Write a series with interval starts in seconds from midnight.
pub fn write_prices_csv(series: &PriceSeries) -> String {
    let mut out = String::from("interval_start,price_eur_mwh\n");
    for (i, v) in series.values.iter().enumerate() {
        let t = i as u64 * series.resolution_s;
        out.push_str(&format!("{t},{}\n", crate::milp::fmt_num(*v)));
    }
    out
}
