//! Minimal file-in/file-out front end to the HiGHS MILP solver.
//!
//! Reads an MPS or LP model, optionally a `name value` start file, and writes
//! the solution in the listing or XML dialect understood by `dsm`.

use std::collections::BTreeMap;
use std::ffi::{c_void, CString};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dsm_core::milp::{parse_start, write_listing, write_xml, MilpSolution, SolveStatus};
use highs_sys::*;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Dialect {
    Listing,
    Xml,
}

#[derive(Parser, Debug)]
#[command(version, about = "Solve an MPS/LP model with HiGHS")]
struct Args {
    model: PathBuf,
    #[arg(long)]
    solution: PathBuf,
    #[arg(long, default_value_t = 900.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 1e-4)]
    gap: f64,
    #[arg(long)]
    start: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Dialect::Listing)]
    dialect: Dialect,
    #[arg(long)]
    verbose: bool,
    /// Extra HiGHS option as `name=value`; repeatable.
    #[arg(long = "option", value_name = "NAME=VALUE")]
    options: Vec<String>,
}

struct Highs(*mut c_void);

impl Drop for Highs {
    fn drop(&mut self) {
        unsafe { Highs_destroy(self.0) }
    }
}

fn cstr(s: &str) -> CString {
    CString::new(s).expect("no interior NUL")
}

impl Highs {
    fn set_f64(&self, name: &str, v: f64) -> Result<(), String> {
        let rc = unsafe { Highs_setDoubleOptionValue(self.0, cstr(name).as_ptr(), v) };
        (rc != STATUS_ERROR).then_some(()).ok_or_else(|| format!("option {name}"))
    }

    fn set_bool(&self, name: &str, v: bool) -> Result<(), String> {
        let rc = unsafe { Highs_setBoolOptionValue(self.0, cstr(name).as_ptr(), v as HighsInt) };
        (rc != STATUS_ERROR).then_some(()).ok_or_else(|| format!("option {name}"))
    }

    fn set_any(&self, name: &str, v: &str) -> Result<(), String> {
        let rc = unsafe { Highs_setOptionValue(self.0, cstr(name).as_ptr(), cstr(v).as_ptr()) };
        (rc != STATUS_ERROR).then_some(()).ok_or_else(|| format!("option {name}={v}"))
    }

    fn int_info(&self, name: &str) -> Option<HighsInt> {
        let mut v: HighsInt = 0;
        let rc = unsafe { Highs_getIntInfoValue(self.0, cstr(name).as_ptr(), &mut v) };
        (rc == STATUS_OK).then_some(v)
    }

    fn f64_info(&self, name: &str) -> Option<f64> {
        let mut v = 0.0;
        let rc = unsafe { Highs_getDoubleInfoValue(self.0, cstr(name).as_ptr(), &mut v) };
        (rc == STATUS_OK).then_some(v)
    }

    fn col_name(&self, col: HighsInt) -> String {
        let mut buf = vec![0u8; 1024];
        unsafe { Highs_getColName(self.0, col, buf.as_mut_ptr() as *mut _) };
        let end = buf.iter().position(|&b| b == 0).unwrap_or(buf.len());
        String::from_utf8_lossy(&buf[..end]).into_owned()
    }
}

fn run(args: &Args) -> Result<MilpSolution, String> {
    let h = Highs(unsafe { Highs_create() });
    h.set_bool("output_flag", args.verbose)?;
    h.set_f64("time_limit", args.time_limit)?;
    h.set_f64("mip_rel_gap", args.gap)?;
    h.set_f64("primal_feasibility_tolerance", 1e-9)?;
    h.set_f64("mip_feasibility_tolerance", 1e-9)?;
    for opt in &args.options {
        let (name, value) = opt.split_once('=').ok_or_else(|| format!("option `{opt}` is not name=value"))?;
        h.set_any(name.trim(), value.trim())?;
    }
    let path = cstr(&args.model.to_string_lossy());
    if unsafe { Highs_readModel(h.0, path.as_ptr()) } == STATUS_ERROR {
        return Err(format!("cannot read model {}", args.model.display()));
    }
    let n = unsafe { Highs_getNumCol(h.0) };
    let names: Vec<String> = (0..n).map(|c| h.col_name(c)).collect();
    if let Some(start) = &args.start {
        let text = std::fs::read_to_string(start).map_err(|e| format!("{}: {e}", start.display()))?;
        let values = parse_start(&text).map_err(|e| e.to_string())?;
        let index: BTreeMap<&str, HighsInt> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i as HighsInt)).collect();
        let (idx, val): (Vec<HighsInt>, Vec<f64>) =
            values.iter().filter_map(|(k, v)| index.get(k.as_str()).map(|&i| (i, *v))).unzip();
        if !idx.is_empty() {
            unsafe { Highs_setSparseSolution(h.0, idx.len() as HighsInt, idx.as_ptr(), val.as_ptr()) };
        }
    }
    if unsafe { Highs_run(h.0) } == STATUS_ERROR {
        return Err("HiGHS run failed".into());
    }
    let model_status = unsafe { Highs_getModelStatus(h.0) };
    let has_primal = h.int_info("primal_solution_status") == Some(2);
    let status = match model_status {
        MODEL_STATUS_OPTIMAL => SolveStatus::Optimal,
        MODEL_STATUS_INFEASIBLE | MODEL_STATUS_UNBOUNDED_OR_INFEASIBLE => SolveStatus::Infeasible,
        MODEL_STATUS_REACHED_TIME_LIMIT => SolveStatus::TimeLimit,
        _ if has_primal => SolveStatus::Feasible,
        _ => SolveStatus::Error,
    };
    let mut values = BTreeMap::new();
    let mut objective = None;
    if has_primal && status != SolveStatus::Infeasible {
        let nrow = unsafe { Highs_getNumRow(h.0) } as usize;
        let mut col = vec![0.0; n as usize];
        let mut col_dual = vec![0.0; n as usize];
        let mut row = vec![0.0; nrow];
        let mut row_dual = vec![0.0; nrow];
        unsafe {
            Highs_getSolution(h.0, col.as_mut_ptr(), col_dual.as_mut_ptr(), row.as_mut_ptr(), row_dual.as_mut_ptr())
        };
        values = names.into_iter().zip(col).collect();
        objective = Some(unsafe { Highs_getObjectiveValue(h.0) });
    }
    Ok(MilpSolution {
        status,
        values,
        objective,
        gap: h.f64_info("mip_gap").filter(|g| g.is_finite()),
        solve_seconds: unsafe { Highs_getRunTime(h.0) },
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let sol = match run(&args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("dsm-highs: {e}");
            return ExitCode::from(1);
        }
    };
    let text = match args.dialect {
        Dialect::Listing => write_listing(&sol),
        Dialect::Xml => write_xml(&sol),
    };
    if let Err(e) = std::fs::write(&args.solution, text) {
        eprintln!("dsm-highs: {}: {e}", args.solution.display());
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
