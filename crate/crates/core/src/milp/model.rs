use std::collections::{BTreeMap, HashMap};

use super::MilpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub sense: ObjSense,
    pub terms: Vec<(VarId, f64)>,
    /// Constant added to the reported objective; not written to model files.
    pub offset: f64,
}

/// Linear expression with a constant part.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Affine {
        Affine { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Affine {
        Affine { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: VarId, c: f64) {
        self.terms.push((v, c));
    }

    pub fn add_scaled(&mut self, other: &Affine, c: f64) {
        self.terms.extend(other.terms.iter().map(|&(v, a)| (v, a * c)));
        self.constant += other.constant * c;
    }

    pub fn scaled(&self, c: f64) -> Affine {
        let mut out = Affine::default();
        out.add_scaled(self, c);
        out
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
    /// Free-form annotations written as comments and kept for extraction.
    pub metadata: BTreeMap<String, String>,
    index: HashMap<String, VarId>,
    row_names: HashMap<String, usize>,
}

impl MilpModel {
    pub fn new(name: &str) -> MilpModel {
        MilpModel {
            name: name.to_string(),
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Objective { sense: ObjSense::Minimize, terms: Vec::new(), offset: 0.0 },
            metadata: BTreeMap::new(),
            index: HashMap::new(),
            row_names: HashMap::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> Result<VarId, MilpError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(MilpError::DuplicateName(name));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        let id = VarId(self.variables.len());
        self.index.insert(name.clone(), id);
        self.variables.push(Variable { name, kind, lower, upper });
        Ok(id)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> Result<VarId, MilpError> {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Result<VarId, MilpError> {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    /// Add `expr (sense) rhs`. Repeated variables are merged and zero terms dropped;
    /// a constant part of `expr` is moved to the right-hand side.
    pub fn add_constraint(&mut self, name: impl Into<String>, expr: &Affine, sense: Sense, rhs: f64) -> Result<(), MilpError> {
        let name = name.into();
        if self.row_names.contains_key(&name) {
            return Err(MilpError::DuplicateName(name));
        }
        let terms = merge_terms(&expr.terms);
        for &(v, _) in &terms {
            if v.0 >= self.variables.len() {
                return Err(MilpError::UnknownVariable(format!("{} in row {name}", v.0)));
            }
        }
        let rhs = rhs - expr.constant;
        if terms.is_empty() {
            let ok = match sense {
                Sense::Le => 0.0 <= rhs + 1e-9,
                Sense::Ge => 0.0 >= rhs - 1e-9,
                Sense::Eq => rhs.abs() <= 1e-9,
            };
            return if ok { Ok(()) } else { Err(MilpError::ConstantRowViolated(name)) };
        }
        self.row_names.insert(name.clone(), self.constraints.len());
        self.constraints.push(Constraint { name, terms, sense, rhs });
        Ok(())
    }

    pub fn set_objective(&mut self, sense: ObjSense, expr: &Affine) {
        self.objective = Objective { sense, terms: merge_terms(&expr.terms), offset: expr.constant };
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) {
        self.variables[v.0].lower = lower;
        self.variables[v.0].upper = upper;
    }

    /// Objective value of a full assignment, including the offset.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.offset + self.objective.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>()
    }

    /// Largest bound or row violation of an assignment.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
            if v.kind == VarKind::Binary {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v.0]).sum();
            let gap = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }

    /// Dense value vector from a name map; missing names read as 0.
    pub fn dense_values(&self, values: &BTreeMap<String, f64>) -> Vec<f64> {
        self.variables.iter().map(|v| values.get(&v.name).copied().unwrap_or(0.0)).collect()
    }
}

fn merge_terms(terms: &[(VarId, f64)]) -> Vec<(VarId, f64)> {
    let mut acc: BTreeMap<VarId, f64> = BTreeMap::new();
    let mut order = Vec::new();
    for &(v, c) in terms {
        let e = acc.entry(v).or_insert_with(|| {
            order.push(v);
            0.0
        });
        *e += c;
    }
    order
        .into_iter()
        .filter_map(|v| {
            let c = acc[&v];
            (c != 0.0).then_some((v, c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut m = MilpModel::new("t");
        m.binary("x").unwrap();
        assert!(matches!(m.binary("x"), Err(MilpError::DuplicateName(_))));
    }

    #[test]
    fn terms_merge_and_constants_move() {
        let mut m = MilpModel::new("t");
        let x = m.continuous("x", 0.0, 10.0).unwrap();
        let y = m.continuous("y", 0.0, 10.0).unwrap();
        let mut e = Affine::var(x);
        e.add_term(y, 2.0);
        e.add_term(x, -1.0);
        e.constant = 3.0;
        m.add_constraint("c", &e, Sense::Le, 5.0).unwrap();
        assert_eq!(m.constraints[0].terms, vec![(y, 2.0)]);
        assert_eq!(m.constraints[0].rhs, 2.0);
    }

    #[test]
    fn constant_rows_checked() {
        let mut m = MilpModel::new("t");
        assert!(m.add_constraint("ok", &Affine::constant(1.0), Sense::Le, 2.0).is_ok());
        assert!(matches!(
            m.add_constraint("bad", &Affine::constant(3.0), Sense::Le, 2.0),
            Err(MilpError::ConstantRowViolated(_))
        ));
        assert!(m.constraints.is_empty());
    }

    #[test]
    fn violation_measure() {
        let mut m = MilpModel::new("t");
        let x = m.binary("x").unwrap();
        m.add_constraint("c", &Affine::var(x), Sense::Le, 0.5).unwrap();
        assert_eq!(m.max_violation(&[0.0]), 0.0);
        assert_eq!(m.max_violation(&[1.0]), 0.5);
    }
}
