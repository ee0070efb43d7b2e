//! Demand-side-management scheduling for multi-furnace casting plants:
//! day-ahead energy-aware scheduling and reserve-capacity bidding built on
//! time-indexed MILP models solved by an external solver.

pub mod demo;
pub mod eas;
pub mod grid;
pub mod market;
pub mod milp;
mod par;
pub mod plant;
pub mod reserve;
