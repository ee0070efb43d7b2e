//! Solver-agnostic MILP representation, model-file emission and an
//! external-process solver driver.

use thiserror::Error;

mod driver;
mod emit;
mod model;
mod solution;

pub use driver::{solve, SolveOptions, SolverProfile, SOLVER_ENV};
pub use emit::{emit_model, fmt_num, ModelFormat};
pub use model::{Affine, Constraint, MilpModel, ObjSense, Objective, Sense, VarId, VarKind, Variable};
pub use solution::{
    parse_listing, parse_solution, parse_start, parse_xml, write_listing, write_start, write_xml, MilpSolution,
    SolutionDialect, SolveStatus,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("row `{0}` has no variables and is violated by its constant")]
    ConstantRowViolated(String),
    #[error("model has no variables")]
    EmptyModel,
    #[error("name longer than 255 characters: `{0}`")]
    NameTooLong(String),
    #[error("name not representable in model files: `{0}`")]
    InvalidName(String),
    #[error("solver not found: {0}")]
    SolverNotFound(String),
    #[error("solver exited with code {code:?}: {stderr}")]
    SolverCrashed { code: Option<i32>, stderr: String },
    #[error("unparsable solution: {0}")]
    UnparsableSolution(String),
    #[error("solution lacks variable `{0}`")]
    MissingVariable(String),
    #[error("i/o: {0}")]
    Io(String),
}
