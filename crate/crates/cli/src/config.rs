//! Run configuration: one TOML file naming the instance, price series, grid,
//! solver and model parameters. Relative paths resolve against the file's
//! directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dsm_core::eas::EasConfig;
use dsm_core::grid::{build_time_grid, TimeGrid};
use dsm_core::market::{self, PriceSeries};
use dsm_core::milp::{ModelFormat, SolutionDialect, SolveOptions, SolverProfile};
use dsm_core::reserve::{ReserveParams, ReservePrices};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: PathBuf,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub prices: PriceFiles,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub eas: EasConfig,
    #[serde(default)]
    pub reserve: ReserveParams,
    #[serde(default)]
    pub aggregate: AggregateSettings,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceFiles {
    pub day_ahead: PathBuf,
    /// Up- and down-regulation prices; derived from the day-ahead series by
    /// the reserve penalty factors when absent.
    #[serde(default)]
    pub up: Option<PathBuf>,
    #[serde(default)]
    pub down: Option<PathBuf>,
    #[serde(default = "default_resolution")]
    pub resolution_s: u64,
}

fn default_resolution() -> u64 {
    3600
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub step_s: u64,
    pub horizon_s: u64,
    pub settlement_s: u64,
    pub market_s: u64,
    pub block_s: u64,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings { step_s: 300, horizon_s: 86_400, settlement_s: 900, market_s: 3600, block_s: 14_400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Command template; the bundled `dsm-highs` next to this executable when
    /// absent. `DSM_SOLVER` overrides both.
    pub command: Option<String>,
    pub dialect: SolutionDialect,
    pub model_format: ModelFormat,
    pub start_flag: Option<String>,
    pub mip_gap: f64,
    pub eas_time_limit_s: f64,
    pub reserve_time_limit_s: f64,
    pub polish: bool,
    /// Warm-start each line from the per-power-unit decomposition.
    pub decompose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            command: None,
            dialect: SolutionDialect::Listing,
            model_format: ModelFormat::Mps,
            start_flag: None,
            mip_gap: 1e-4,
            eas_time_limit_s: 900.0,
            reserve_time_limit_s: 120.0,
            polish: true,
            decompose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateSettings {
    pub activations: usize,
}

impl Default for AggregateSettings {
    fn default() -> Self {
        AggregateSettings { activations: 1 }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("missing file: {0}")]
pub struct MissingFile(pub PathBuf);

impl RunConfig {
    pub fn from_toml_str(text: &str, base: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).context("malformed run configuration")?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|_| MissingFile(path.to_path_buf()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = RunConfig::from_toml_str(&text, base).with_context(|| format!("in {}", path.display()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut self.instance);
        abs(&mut self.output_dir);
        abs(&mut self.prices.day_ahead);
        self.prices.up.as_mut().map(abs);
        self.prices.down.as_mut().map(abs);
    }

    /// Referenced inputs exist and the grid is consistent.
    pub fn check(&self) -> Result<()> {
        let mut files = vec![&self.instance, &self.prices.day_ahead];
        files.extend(self.prices.up.iter());
        files.extend(self.prices.down.iter());
        for f in files {
            if !f.is_file() {
                return Err(MissingFile(f.clone()).into());
            }
        }
        self.grid()?;
        if self.prices.up.is_some() != self.prices.down.is_some() {
            bail!("give both up and down regulation prices or neither");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let g = &self.grid;
        Ok(build_time_grid(g.step_s, g.horizon_s, g.settlement_s, g.market_s, g.block_s)?)
    }

    pub fn profile(&self) -> SolverProfile {
        let s = &self.solver;
        let profile = match &s.command {
            Some(cmd) => SolverProfile {
                command: cmd.clone(),
                dialect: s.dialect,
                start_flag: s.start_flag.clone(),
                model_format: s.model_format,
            },
            None => SolverProfile::highs_runner(&bundled_solver()),
        };
        profile.with_env_override()
    }

    pub fn eas_options(&self) -> SolveOptions {
        SolveOptions {
            time_limit_s: self.solver.eas_time_limit_s,
            mip_gap: self.solver.mip_gap,
            warm_start: None,
            polish: self.solver.polish,
        }
    }

    pub fn reserve_options(&self) -> SolveOptions {
        SolveOptions { time_limit_s: self.solver.reserve_time_limit_s, ..self.eas_options() }
    }

    pub fn day_ahead_series(&self) -> Result<PriceSeries> {
        load_series(&self.prices.day_ahead, self.prices.resolution_s)
    }

    /// Day-ahead prices on the grid's step resolution.
    pub fn day_ahead(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        Ok(market::expand_to_grid(&self.day_ahead_series()?, grid)?)
    }

    pub fn reserve_prices(&self, grid: &TimeGrid) -> Result<ReservePrices> {
        let da = self.day_ahead(grid)?;
        match (&self.prices.up, &self.prices.down) {
            (Some(up), Some(down)) => Ok(ReservePrices {
                day_ahead: da,
                up: market::expand_to_grid(&load_series(up, self.prices.resolution_s)?, grid)?,
                down: market::expand_to_grid(&load_series(down, self.prices.resolution_s)?, grid)?,
            }),
            _ => Ok(ReservePrices::from_day_ahead(da, &self.reserve)),
        }
    }
}

fn load_series(path: &Path, resolution_s: u64) -> Result<PriceSeries> {
    if !path.is_file() {
        return Err(MissingFile(path.to_path_buf()).into());
    }
    market::load_prices_csv(path, resolution_s).with_context(|| format!("reading {}", path.display()))
}

/// `dsm-highs` in the directory of the running executable.
pub fn bundled_solver() -> PathBuf {
    let exe = std::env::current_exe().ok();
    let dir = exe.as_deref().and_then(Path::parent).unwrap_or(Path::new("."));
    dir.join(format!("dsm-highs{}", std::env::consts::EXE_SUFFIX))
}
