//! Solution files: a `name value` listing and a CPLEX-style XML document.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::emit::fmt_num;
use super::MilpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeLimit,
    Error,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Error => "error",
        }
    }

    /// Map a solver status phrase to a status. Checks "infeasible" before
    /// "feasible" since the former contains the latter.
    pub fn from_phrase(text: &str) -> SolveStatus {
        let t = text.to_ascii_lowercase().replace(['-', '_'], " ");
        if t.contains("infeasible") {
            SolveStatus::Infeasible
        } else if t.contains("time limit") || t.contains("timelimit") {
            SolveStatus::TimeLimit
        } else if t.contains("optimal") {
            SolveStatus::Optimal
        } else if t.contains("feasible") {
            SolveStatus::Feasible
        } else {
            SolveStatus::Error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolutionDialect {
    Listing,
    Xml,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub values: BTreeMap<String, f64>,
    pub objective: Option<f64>,
    pub gap: Option<f64>,
    pub solve_seconds: f64,
}

impl MilpSolution {
    pub fn has_values(&self) -> bool {
        !self.values.is_empty()
            && matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible | SolveStatus::TimeLimit)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.values.get(name).copied().unwrap_or(0.0)
    }
}

pub fn parse_solution(text: &str, dialect: SolutionDialect) -> Result<MilpSolution, MilpError> {
    match dialect {
        SolutionDialect::Listing => parse_listing(text),
        SolutionDialect::Xml => parse_xml(text),
    }
}

fn num(token: &str, what: &str, line: usize) -> Result<f64, MilpError> {
    let lower = token.to_ascii_lowercase();
    let v = match lower.as_str() {
        "inf" | "+inf" | "infinity" => f64::INFINITY,
        "-inf" | "-infinity" => f64::NEG_INFINITY,
        _ => token.parse::<f64>().map_err(|_| {
            MilpError::UnparsableSolution(format!("line {line}: bad {what} `{token}`"))
        })?,
    };
    if v.is_nan() {
        return Err(MilpError::UnparsableSolution(format!("line {line}: NaN {what}")));
    }
    Ok(v)
}

/// Parse the listing dialect:
///
/// ```text
/// # status optimal
/// # objective 2
/// # gap 0
/// # seconds 0.01
/// x 2
/// ```
pub fn parse_listing(text: &str) -> Result<MilpSolution, MilpError> {
    let mut status = None;
    let mut objective = None;
    let mut gap = None;
    let mut seconds = 0.0;
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            let key = it.next().unwrap_or("");
            let val: Vec<&str> = it.collect();
            let val = val.join(" ");
            match key {
                "status" => status = Some(SolveStatus::from_phrase(&val)),
                "objective" => objective = Some(num(&val, "objective", line_no)?),
                "gap" => gap = Some(num(&val, "gap", line_no)?),
                "seconds" => seconds = num(&val, "seconds", line_no)?,
                _ => {}
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(name), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(MilpError::UnparsableSolution(format!("line {line_no}: expected `name value`")));
        };
        let v = num(v, "value", line_no)?;
        if !v.is_finite() {
            return Err(MilpError::UnparsableSolution(format!("line {line_no}: non-finite value")));
        }
        if values.insert(name.to_string(), v).is_some() {
            return Err(MilpError::UnparsableSolution(format!("line {line_no}: duplicate `{name}`")));
        }
    }
    let status = status.ok_or_else(|| MilpError::UnparsableSolution("missing `# status` line".into()))?;
    Ok(MilpSolution { status, values, objective, gap, solve_seconds: seconds })
}

pub fn write_listing(sol: &MilpSolution) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# status {}", sol.status.as_str());
    if let Some(o) = sol.objective {
        let _ = writeln!(out, "# objective {}", fmt_num(o));
    }
    if let Some(g) = sol.gap {
        let _ = writeln!(out, "# gap {}", fmt_num(g));
    }
    let _ = writeln!(out, "# seconds {}", fmt_num(sol.solve_seconds));
    for (k, v) in &sol.values {
        let _ = writeln!(out, "{k} {}", fmt_num(*v));
    }
    out
}

/// Warm-start file: plain `name value` lines.
pub fn write_start(values: &BTreeMap<String, f64>) -> String {
    let mut out = String::new();
    for (k, v) in values {
        let _ = writeln!(out, "{k} {}", fmt_num(*v));
    }
    out
}

pub fn parse_start(text: &str) -> Result<BTreeMap<String, f64>, MilpError> {
    let mut with_status = String::from("# status feasible\n");
    with_status.push_str(text);
    Ok(parse_listing(&with_status)?.values)
}

/// Parse a CPLEX-style solution document.
pub fn parse_xml(text: &str) -> Result<MilpSolution, MilpError> {
    let doc = roxmltree::Document::parse(text)
        .map_err(|e| MilpError::UnparsableSolution(format!("xml: {e}")))?;
    let root = doc.root_element();
    if root.tag_name().name() != "CPLEXSolution" {
        return Err(MilpError::UnparsableSolution(format!(
            "unexpected root element <{}>",
            root.tag_name().name()
        )));
    }
    let header = root
        .children()
        .find(|n| n.has_tag_name("header"))
        .ok_or_else(|| MilpError::UnparsableSolution("missing <header>".into()))?;
    let attr = |name: &str| -> Result<Option<f64>, MilpError> {
        header.attribute(name).map(|v| num(v, name, 0)).transpose()
    };
    let status = SolveStatus::from_phrase(header.attribute("solutionStatusString").unwrap_or(""));
    let objective = attr("objectiveValue")?;
    let gap = attr("MIPRelativeGap")?;
    let seconds = attr("solveSeconds")?.unwrap_or(0.0);
    let mut values = BTreeMap::new();
    if let Some(vars) = root.children().find(|n| n.has_tag_name("variables")) {
        for v in vars.children().filter(|n| n.has_tag_name("variable")) {
            let name = v
                .attribute("name")
                .ok_or_else(|| MilpError::UnparsableSolution("variable without name".into()))?;
            let value = v
                .attribute("value")
                .ok_or_else(|| MilpError::UnparsableSolution(format!("variable {name} without value")))?;
            let value = num(value, "value", 0)?;
            if !value.is_finite() {
                return Err(MilpError::UnparsableSolution(format!("variable {name}: non-finite value")));
            }
            if values.insert(name.to_string(), value).is_some() {
                return Err(MilpError::UnparsableSolution(format!("duplicate variable {name}")));
            }
        }
    }
    Ok(MilpSolution { status, values, objective, gap, solve_seconds: seconds })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn write_xml(sol: &MilpSolution) -> String {
    let status = match sol.status {
        SolveStatus::Optimal => "integer optimal solution",
        SolveStatus::Feasible => "integer feasible solution",
        SolveStatus::Infeasible => "integer infeasible",
        SolveStatus::TimeLimit => "time limit exceeded",
        SolveStatus::Error => "error",
    };
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<CPLEXSolution version=\"1.2\">\n");
    let _ = write!(out, " <header solutionStatusString=\"{status}\"");
    if let Some(o) = sol.objective {
        let _ = write!(out, " objectiveValue=\"{}\"", fmt_num(o));
    }
    if let Some(g) = sol.gap {
        let _ = write!(out, " MIPRelativeGap=\"{}\"", fmt_num(g));
    }
    let _ = writeln!(out, " solveSeconds=\"{}\"/>", fmt_num(sol.solve_seconds));
    out.push_str(" <variables>\n");
    for (i, (k, v)) in sol.values.iter().enumerate() {
        let _ = writeln!(
            out,
            "  <variable name=\"{}\" index=\"{i}\" value=\"{}\"/>",
            xml_escape(k),
            fmt_num(*v)
        );
    }
    out.push_str(" </variables>\n</CPLEXSolution>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MilpSolution {
        MilpSolution {
            status: SolveStatus::Optimal,
            values: BTreeMap::from([("x".to_string(), 2.0), ("y_1".to_string(), 0.5)]),
            objective: Some(2.5),
            gap: Some(0.0),
            solve_seconds: 0.25,
        }
    }

    #[test]
    fn listing_round_trip() {
        let s = sample();
        assert_eq!(parse_listing(&write_listing(&s)).unwrap(), s);
    }

    #[test]
    fn xml_round_trip() {
        let s = sample();
        assert_eq!(parse_xml(&write_xml(&s)).unwrap(), s);
    }

    #[test]
    fn cplex_document() {
        let text = r#"<?xml version = "1.0" standalone="yes"?>
<CPLEXSolution version="1.2">
 <header problemName="m" objectiveValue="12" solutionStatusValue="101"
  solutionStatusString="integer optimal solution" MIPRelativeGap="0"/>
 <quality epInt="1e-05"/>
 <variables>
  <variable name="x" index="0" value="1"/>
  <variable name="y" index="1" value="-0"/>
 </variables>
</CPLEXSolution>"#;
        let s = parse_xml(text).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.objective, Some(12.0));
        assert_eq!(s.values["x"], 1.0);
    }

    #[test]
    fn status_phrases() {
        assert_eq!(SolveStatus::from_phrase("integer infeasible"), SolveStatus::Infeasible);
        assert_eq!(SolveStatus::from_phrase("integer optimal, tolerance"), SolveStatus::Optimal);
        assert_eq!(SolveStatus::from_phrase("time_limit"), SolveStatus::TimeLimit);
        assert_eq!(SolveStatus::from_phrase("integer feasible solution"), SolveStatus::Feasible);
        assert_eq!(SolveStatus::from_phrase("unbounded"), SolveStatus::Error);
    }

    #[test]
    fn malformed_listing() {
        assert!(parse_listing("x 1\n").is_err());
        assert!(parse_listing("# status optimal\nx one\n").is_err());
        assert!(parse_listing("# status optimal\nx 1 2\n").is_err());
        assert!(parse_listing("# status optimal\nx 1\nx 2\n").is_err());
        assert!(parse_xml("<foo/>").is_err());
        assert!(parse_xml("not xml").is_err());
    }
}
