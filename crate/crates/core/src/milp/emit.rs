//! Deterministic MPS (free format) and LP text writers.

use std::fmt::Write as _;

use super::model::{MilpModel, ObjSense, Sense, VarKind};
use super::MilpError;

pub const MAX_NAME_LEN: usize = 255;
const LP_LINE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFormat {
    Mps,
    Lp,
}

impl ModelFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ModelFormat::Mps => "mps",
            ModelFormat::Lp => "lp",
        }
    }
}

pub fn emit_model(model: &MilpModel, format: ModelFormat) -> Result<String, MilpError> {
    check_names(model)?;
    Ok(match format {
        ModelFormat::Mps => write_mps(model),
        ModelFormat::Lp => write_lp(model),
    })
}

/// Shortest round-trip decimal; integers without a fractional part.
pub fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

fn check_names(model: &MilpModel) -> Result<(), MilpError> {
    if model.variables.is_empty() {
        return Err(MilpError::EmptyModel);
    }
    let names = model
        .variables
        .iter()
        .map(|v| &v.name)
        .chain(model.constraints.iter().map(|c| &c.name));
    for name in names {
        if name.len() > MAX_NAME_LEN {
            return Err(MilpError::NameTooLong(name.clone()));
        }
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == ':' || c == '\\') {
            return Err(MilpError::InvalidName(name.clone()));
        }
    }
    if model.constraints.iter().any(|c| c.name == "obj") {
        return Err(MilpError::InvalidName("obj".into()));
    }
    for (v, x) in model.variables.iter().map(|v| (v, v.lower)).chain(model.variables.iter().map(|v| (v, v.upper))) {
        if x.is_nan() {
            return Err(MilpError::InvalidName(format!("{} has a NaN bound", v.name)));
        }
    }
    Ok(())
}

fn obj_sign(model: &MilpModel) -> f64 {
    match model.objective.sense {
        ObjSense::Minimize => 1.0,
        ObjSense::Maximize => -1.0,
    }
}

fn header(model: &MilpModel, out: &mut String, comment: &str) {
    let _ = writeln!(out, "{comment} model {}", model.name);
    let _ = writeln!(
        out,
        "{comment} {} variables ({} binary), {} constraints",
        model.num_vars(),
        model.num_binaries(),
        model.constraints.len()
    );
    if model.objective.sense == ObjSense::Maximize {
        let _ = writeln!(out, "{comment} objective sense MAX, written negated as MIN");
    }
    if model.objective.offset != 0.0 {
        let _ = writeln!(out, "{comment} objective offset {}", fmt_num(model.objective.offset));
    }
    for (k, v) in &model.metadata {
        let _ = writeln!(out, "{comment} {k} = {v}");
    }
}

fn write_mps(model: &MilpModel) -> String {
    let mut out = String::new();
    header(model, &mut out, "*");
    let _ = writeln!(out, "NAME {}", model.name);
    out.push_str("ROWS\n N  obj\n");
    for c in &model.constraints {
        let t = match c.sense {
            Sense::Le => 'L',
            Sense::Ge => 'G',
            Sense::Eq => 'E',
        };
        let _ = writeln!(out, " {t}  {}", c.name);
    }
    // Column-major view.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (ri, c) in model.constraints.iter().enumerate() {
        for &(v, a) in &c.terms {
            cols[v.0].push((ri, a));
        }
    }
    let sign = obj_sign(model);
    let mut obj = vec![0.0; model.num_vars()];
    for &(v, c) in &model.objective.terms {
        obj[v.0] += sign * c;
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (j, var) in model.variables.iter().enumerate() {
        let is_int = var.kind == VarKind::Binary;
        if is_int != in_int {
            let tag = if is_int { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, "    M{marker:07} 'MARKER' '{tag}'");
            marker += 1;
            in_int = is_int;
        }
        let mut wrote = false;
        if obj[j] != 0.0 {
            let _ = writeln!(out, "    {} obj {}", var.name, fmt_num(obj[j]));
            wrote = true;
        }
        for &(ri, a) in &cols[j] {
            let _ = writeln!(out, "    {} {} {}", var.name, model.constraints[ri].name, fmt_num(a));
            wrote = true;
        }
        if !wrote {
            // Keep the column declared.
            let _ = writeln!(out, "    {} obj 0", var.name);
        }
    }
    if in_int {
        let _ = writeln!(out, "    M{marker:07} 'MARKER' 'INTEND'");
    }
    out.push_str("RHS\n");
    for c in &model.constraints {
        if c.rhs != 0.0 {
            let _ = writeln!(out, "    rhs {} {}", c.name, fmt_num(c.rhs));
        }
    }
    out.push_str("BOUNDS\n");
    for v in &model.variables {
        let n = &v.name;
        let (lo, up) = (v.lower, v.upper);
        if v.kind == VarKind::Binary && lo == 0.0 && up == 1.0 {
            let _ = writeln!(out, " BV bnd {n}");
        } else if lo == up {
            let _ = writeln!(out, " FX bnd {n} {}", fmt_num(lo));
        } else if lo == f64::NEG_INFINITY && up == f64::INFINITY {
            let _ = writeln!(out, " FR bnd {n}");
        } else {
            if lo == f64::NEG_INFINITY {
                let _ = writeln!(out, " MI bnd {n}");
            } else if lo != 0.0 || v.kind == VarKind::Binary {
                let _ = writeln!(out, " LO bnd {n} {}", fmt_num(lo));
            }
            if up != f64::INFINITY {
                let _ = writeln!(out, " UP bnd {n} {}", fmt_num(up));
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

fn push_terms(out: &mut String, line: &mut String, terms: impl Iterator<Item = (String, f64)>) {
    let mut first = true;
    for (name, c) in terms {
        let piece = if first {
            if c < 0.0 {
                format!(" - {} {name}", fmt_num(-c))
            } else {
                format!(" {} {name}", fmt_num(c))
            }
        } else if c < 0.0 {
            format!(" - {} {name}", fmt_num(-c))
        } else {
            format!(" + {} {name}", fmt_num(c))
        };
        first = false;
        if line.len() + piece.len() > LP_LINE {
            out.push_str(line);
            out.push('\n');
            line.clear();
            line.push_str("   ");
        }
        line.push_str(&piece);
    }
}

fn write_lp(model: &MilpModel) -> String {
    let mut out = String::new();
    header(model, &mut out, "\\");
    let sign = obj_sign(model);
    out.push_str("Minimize\n");
    let mut line = String::from(" obj:");
    let names = |v: super::model::VarId| model.variables[v.0].name.clone();
    let mut obj: Vec<(String, f64)> = model.objective.terms.iter().map(|&(v, c)| (names(v), sign * c)).collect();
    if obj.is_empty() {
        obj.push((model.variables[0].name.clone(), 0.0));
    }
    push_terms(&mut out, &mut line, obj.into_iter());
    out.push_str(&line);
    out.push('\n');
    out.push_str("Subject To\n");
    for c in &model.constraints {
        let mut line = format!(" {}:", c.name);
        push_terms(&mut out, &mut line, c.terms.iter().map(|&(v, a)| (names(v), a)));
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let tail = format!(" {op} {}", fmt_num(c.rhs));
        if line.len() + tail.len() > LP_LINE {
            out.push_str(&line);
            out.push('\n');
            line = String::from("  ");
        }
        line.push_str(&tail);
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        let n = &v.name;
        let (lo, up) = (v.lower, v.upper);
        if v.kind == VarKind::Binary && lo == 0.0 && up == 1.0 {
            continue;
        }
        if lo == up {
            let _ = writeln!(out, " {n} = {}", fmt_num(lo));
        } else if lo == f64::NEG_INFINITY && up == f64::INFINITY {
            let _ = writeln!(out, " {n} free");
        } else {
            let l = if lo == f64::NEG_INFINITY { "-inf".to_string() } else { fmt_num(lo) };
            let u = if up == f64::INFINITY { "+inf".to_string() } else { fmt_num(up) };
            if lo == 0.0 && up == f64::INFINITY {
                continue;
            }
            let _ = writeln!(out, " {l} <= {n} <= {u}");
        }
    }
    let bins: Vec<&str> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        let mut line = String::new();
        for b in bins {
            if line.len() + b.len() + 1 > LP_LINE {
                out.push_str(&line);
                out.push('\n');
                line.clear();
            }
            line.push(' ');
            line.push_str(b);
        }
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("End\n");
    out
}
