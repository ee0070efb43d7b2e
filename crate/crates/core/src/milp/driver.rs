//! External-process solver driver: model file in, solution file out.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::emit::{emit_model, fmt_num, ModelFormat};
use super::model::{MilpModel, VarKind};
use super::solution::{parse_solution, write_start, MilpSolution, SolutionDialect, SolveStatus};
use super::MilpError;

pub const SOLVER_ENV: &str = "DSM_SOLVER";

/// How to invoke a solver. Placeholders in `command` and `start_flag`:
/// `{model}`, `{solution}`, `{time_limit}`, `{gap}`, `{start}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverProfile {
    pub command: String,
    pub dialect: SolutionDialect,
    #[serde(default)]
    pub start_flag: Option<String>,
    pub model_format: ModelFormat,
}

impl SolverProfile {
    /// Profile for the bundled `dsm-highs` runner.
    pub fn highs_runner(binary: &Path) -> SolverProfile {
        let bin = shell_words::quote(&binary.to_string_lossy()).into_owned();
        SolverProfile {
            command: format!("{bin} {{model}} --solution {{solution}} --time-limit {{time_limit}} --gap {{gap}}"),
            dialect: SolutionDialect::Listing,
            start_flag: Some("--start {start}".into()),
            model_format: ModelFormat::Mps,
        }
    }

    /// Replace the command with `$DSM_SOLVER` when set.
    pub fn with_env_override(mut self) -> SolverProfile {
        if let Ok(cmd) = std::env::var(SOLVER_ENV) {
            if !cmd.trim().is_empty() {
                self.command = cmd;
            }
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub time_limit_s: f64,
    pub mip_gap: f64,
    pub warm_start: Option<BTreeMap<String, f64>>,
    /// Re-solve with binaries fixed at their rounded values to clean up
    /// tolerance-level noise in the continuous part.
    pub polish: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { time_limit_s: 900.0, mip_gap: 1e-4, warm_start: None, polish: true }
    }
}

fn substitute(token: &str, subs: &[(&str, String)]) -> String {
    let mut t = token.to_string();
    for (k, v) in subs {
        t = t.replace(k, v);
    }
    t
}

fn argv(profile: &SolverProfile, subs: &[(&str, String)], with_start: bool) -> Result<Vec<String>, MilpError> {
    let split = |s: &str| {
        shell_words::split(s).map_err(|e| MilpError::SolverNotFound(format!("bad command template `{s}`: {e}")))
    };
    let mut args: Vec<String> = split(&profile.command)?.iter().map(|t| substitute(t, subs)).collect();
    if with_start {
        if let Some(flag) = &profile.start_flag {
            args.extend(split(flag)?.iter().map(|t| substitute(t, subs)));
        }
    }
    if args.is_empty() {
        return Err(MilpError::SolverNotFound("empty solver command".into()));
    }
    Ok(args)
}

/// Solve `model` with an external solver.
///
/// The reported objective is recomputed from the returned values plus the
/// model's constant offset, in the model's own sense.
pub fn solve(model: &MilpModel, profile: &SolverProfile, options: &SolveOptions) -> Result<MilpSolution, MilpError> {
    let dir = tempfile::Builder::new()
        .prefix("dsm-solve-")
        .tempdir()
        .map_err(|e| MilpError::Io(format!("temp dir: {e}")))?;
    let mut sol = run_once(model, profile, options, dir.path())?;
    if options.polish && sol.has_values() && model.num_binaries() > 0 {
        let mut fixed = model.clone();
        for v in &mut fixed.variables {
            if v.kind == VarKind::Binary {
                let x = sol.value(&v.name).round().clamp(v.lower, v.upper);
                v.lower = x;
                v.upper = x;
            }
        }
        let lp_opts = SolveOptions { warm_start: None, polish: false, ..options.clone() };
        match run_once(&fixed, profile, &lp_opts, dir.path()) {
            Ok(p) if p.status == SolveStatus::Optimal && p.has_values() => {
                sol.values = p.values;
                sol.solve_seconds += p.solve_seconds;
            }
            Ok(p) => log::warn!("polish step for {} returned {:?}; keeping raw values", model.name, p.status),
            Err(e) => log::warn!("polish step for {} failed: {e}; keeping raw values", model.name),
        }
    }
    if sol.has_values() {
        let dense = model.dense_values(&sol.values);
        sol.objective = Some(model.objective_value(&dense));
    }
    Ok(sol)
}

fn run_once(model: &MilpModel, profile: &SolverProfile, options: &SolveOptions, dir: &Path) -> Result<MilpSolution, MilpError> {
    let text = emit_model(model, profile.model_format)?;
    let model_path = dir.join(format!("model.{}", profile.model_format.extension()));
    let sol_path = dir.join("solution.out");
    let start_path = dir.join("start.txt");
    let _ = std::fs::remove_file(&sol_path);
    write_file(&model_path, &text)?;
    let with_start = match &options.warm_start {
        Some(ws) if profile.start_flag.is_some() => {
            let filtered: BTreeMap<String, f64> = ws
                .iter()
                .filter(|(k, _)| model.var(k).is_some())
                .map(|(k, v)| (k.clone(), *v))
                .collect();
            write_file(&start_path, &write_start(&filtered))?;
            true
        }
        _ => false,
    };
    let subs = [
        ("{model}", path_str(&model_path)),
        ("{solution}", path_str(&sol_path)),
        ("{time_limit}", fmt_num(options.time_limit_s)),
        ("{gap}", fmt_num(options.mip_gap)),
        ("{start}", path_str(&start_path)),
    ];
    let args = argv(profile, &subs, with_start)?;
    log::debug!("running {}", args.join(" "));
    let started = Instant::now();
    let output = Command::new(&args[0]).args(&args[1..]).output().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
            MilpError::SolverNotFound(format!("{}: {e}", args[0]))
        }
        _ => MilpError::Io(format!("spawning {}: {e}", args[0])),
    })?;
    let elapsed = started.elapsed().as_secs_f64();
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        let excerpt: String = stderr.chars().rev().take(600).collect::<Vec<_>>().into_iter().rev().collect();
        return Err(MilpError::SolverCrashed { code: output.status.code(), stderr: excerpt });
    }
    let body = std::fs::read_to_string(&sol_path)
        .map_err(|e| MilpError::UnparsableSolution(format!("reading {}: {e}", sol_path.display())))?;
    let mut sol = parse_solution(&body, profile.dialect)?;
    if sol.solve_seconds == 0.0 {
        sol.solve_seconds = elapsed;
    }
    if sol.has_values() {
        // Solvers may omit zero-valued columns.
        let values = model
            .variables
            .iter()
            .map(|v| (v.name.clone(), sol.values.get(&v.name).copied().unwrap_or(0.0)))
            .collect();
        sol.values = values;
    }
    Ok(sol)
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), MilpError> {
    std::fs::write(path, text).map_err(|e| MilpError::Io(format!("writing {}: {e}", path.display())))
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}
