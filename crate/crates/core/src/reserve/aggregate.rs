//! Internal aggregation of per-line bids when the operator may dispatch the
//! reserve more than once a day.
//!
//! Capacities enter the aggregation in MW and prices in €/MW.

use serde::{Deserialize, Serialize};

use super::{BidBlock, ReserveError};
use crate::milp::{self, Affine, MilpModel, ObjSense, Sense, SolveOptions, SolverProfile, VarId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineBids {
    pub line: String,
    pub blocks: Vec<BidBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedBlock {
    pub block: usize,
    pub capacity_kw: f64,
    pub price_eur_per_mw: Option<f64>,
    /// Lines whose bid is counted once for this block.
    pub selected_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub activations: usize,
    pub method: String,
    pub objective: f64,
    pub blocks: Vec<AggregatedBlock>,
}

/// Capacity (MW) and price per `[block][line]`; ineligible bids count as zero.
fn matrix(bids: &[LineBids]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), ReserveError> {
    let nd = bids.first().map_or(0, |b| b.blocks.len());
    if bids.is_empty() || nd == 0 {
        return Err(ReserveError::BadBids("no bids".into()));
    }
    if bids.iter().any(|b| b.blocks.len() != nd) {
        return Err(ReserveError::BadBids("lines have different numbers of blocks".into()));
    }
    let mut cap = vec![vec![0.0; bids.len()]; nd];
    let mut price = vec![vec![0.0; bids.len()]; nd];
    for (c, b) in bids.iter().enumerate() {
        for (d, blk) in b.blocks.iter().enumerate() {
            if blk.eligible && blk.capacity_kw.is_finite() && blk.capacity_kw > 0.0 {
                cap[d][c] = blk.capacity_kw / 1000.0;
                price[d][c] = blk.price_eur_per_mw.unwrap_or(0.0);
            }
        }
    }
    Ok((cap, price))
}

/// Single daily activation: capacities add up per block at the
/// capacity-weighted price.
pub fn aggregate_closed_form(bids: &[LineBids]) -> Result<Aggregation, ReserveError> {
    let (cap, price) = matrix(bids)?;
    let mut objective = 0.0;
    let blocks = cap
        .iter()
        .zip(&price)
        .enumerate()
        .map(|(d, (r, l))| {
            let total: f64 = r.iter().sum();
            let value: f64 = r.iter().zip(l).map(|(a, b)| a * b).sum();
            objective += value;
            AggregatedBlock {
                block: d + 1,
                capacity_kw: total * 1000.0,
                price_eur_per_mw: (total > 0.0).then(|| value / total),
                selected_lines: bids.iter().zip(r).filter(|(_, &x)| x > 0.0).map(|(b, _)| b.line.clone()).collect(),
            }
        })
        .collect();
    Ok(Aggregation { activations: 1, method: "closed_form".into(), objective, blocks })
}

pub struct AggregationModel {
    pub model: MilpModel,
    pub pooled: Vec<VarId>,
    pub beta: Vec<Vec<VarId>>,
    pub mu: Vec<Vec<VarId>>,
}

/// Multi-activation aggregation: pick at most one block per line to count in
/// full (`β`) and pool a common capacity `R̃_d` bounded by the lines not picked.
pub fn build_aggregation_model(bids: &[LineBids], activations: usize) -> Result<AggregationModel, ReserveError> {
    let (cap, price) = matrix(bids)?;
    let nc = bids.len();
    let mut m = MilpModel::new("aggregation");
    let mut obj = Affine::default();
    let mut pooled = Vec::new();
    let mut beta = Vec::new();
    let mut mu = Vec::new();
    for (d, (r, l)) in cap.iter().zip(&price).enumerate() {
        let rmax = r.iter().copied().fold(0.0, f64::max);
        let t = m.continuous(format!("Rt_d{}", d + 1), 0.0, rmax)?;
        obj.add_term(t, 1.0);
        let mut b_row = Vec::new();
        let mut u_row = Vec::new();
        for c in 0..nc {
            let b = m.binary(format!("beta_d{}_c{}", d + 1, c + 1))?;
            let u = m.binary(format!("mu_d{}_c{}", d + 1, c + 1))?;
            obj.add_term(b, r[c] * l[c]);
            m.add_constraint(format!("excl_d{}_c{}", d + 1, c + 1), &Affine { terms: vec![(t, 1.0), (b, rmax)], constant: 0.0 }, Sense::Le, rmax)?;
            m.add_constraint(format!("nth_d{}_c{}", d + 1, c + 1), &Affine { terms: vec![(t, 1.0), (u, rmax)], constant: 0.0 }, Sense::Le, r[c] + rmax)?;
            b_row.push(b);
            u_row.push(u);
        }
        let e = Affine { terms: b_row.iter().map(|&b| (b, 1.0)).collect(), constant: 0.0 };
        m.add_constraint(format!("pick_d{}", d + 1), &e, Sense::Le, (nc + 1) as f64 - activations as f64)?;
        let e = Affine { terms: u_row.iter().map(|&u| (u, 1.0)).collect(), constant: 0.0 };
        m.add_constraint(format!("mu_d{}", d + 1), &e, Sense::Ge, activations as f64 - 1.0)?;
        pooled.push(t);
        beta.push(b_row);
        mu.push(u_row);
    }
    for c in 0..nc {
        let e = Affine { terms: beta.iter().map(|row| (row[c], 1.0)).collect(), constant: 0.0 };
        m.add_constraint(format!("once_c{}", c + 1), &e, Sense::Le, 1.0)?;
    }
    m.set_objective(ObjSense::Maximize, &obj);
    Ok(AggregationModel { model: m, pooled, beta, mu })
}

fn blocks_from(bids: &[LineBids], cap: &[Vec<f64>], price: &[Vec<f64>], pooled: &[f64], beta: &[Vec<bool>]) -> Vec<AggregatedBlock> {
    (0..cap.len())
        .map(|d| {
            let chosen: Vec<usize> = (0..bids.len()).filter(|&c| beta[d][c]).collect();
            let total: f64 = chosen.iter().map(|&c| cap[d][c]).sum();
            let value: f64 = chosen.iter().map(|&c| cap[d][c] * price[d][c]).sum();
            AggregatedBlock {
                block: d + 1,
                capacity_kw: pooled[d] * 1000.0,
                price_eur_per_mw: (total > 0.0).then(|| value / total),
                selected_lines: chosen.iter().map(|&c| bids[c].line.clone()).collect(),
            }
        })
        .collect()
}

/// Aggregate line bids for `activations` dispatches per day: the closed form
/// for a single activation, the aggregation MILP otherwise.
pub fn aggregate_internal(
    bids: &[LineBids],
    activations: usize,
    profile: &SolverProfile,
    options: &SolveOptions,
) -> Result<Aggregation, ReserveError> {
    if activations == 0 {
        return Err(ReserveError::BadBids("activations must be at least 1".into()));
    }
    if activations == 1 {
        return aggregate_closed_form(bids);
    }
    let (cap, price) = matrix(bids)?;
    let am = build_aggregation_model(bids, activations)?;
    let sol = milp::solve(&am.model, profile, options)?;
    if !sol.has_values() {
        return Err(ReserveError::NoSolution { line: "aggregation".into(), q: 0, status: sol.status.as_str().into() });
    }
    let dense = am.model.dense_values(&sol.values);
    let pooled: Vec<f64> = am.pooled.iter().map(|v| dense[v.0]).collect();
    let beta: Vec<Vec<bool>> = am.beta.iter().map(|row| row.iter().map(|v| dense[v.0] > 0.5).collect()).collect();
    Ok(Aggregation {
        activations,
        method: "milp".into(),
        objective: sol.objective.unwrap_or(f64::NAN),
        blocks: blocks_from(bids, &cap, &price, &pooled, &beta),
    })
}

/// Exhaustive enumeration of the aggregation model, for small instances.
pub fn aggregate_exhaustive(bids: &[LineBids], activations: usize) -> Result<Aggregation, ReserveError> {
    let (cap, price) = matrix(bids)?;
    let nd = cap.len();
    let nc = bids.len();
    let bits = nd * nc;
    if 2 * bits > 24 {
        return Err(ReserveError::BadBids("instance too large to enumerate".into()));
    }
    let rmax: Vec<f64> = cap.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
    let mut best: Option<(f64, Vec<f64>, Vec<Vec<bool>>)> = None;
    for bmask in 0u32..1 << bits {
        let beta: Vec<Vec<bool>> = (0..nd).map(|d| (0..nc).map(|c| bmask >> (d * nc + c) & 1 == 1).collect()).collect();
        if (0..nc).any(|c| (0..nd).filter(|&d| beta[d][c]).count() > 1) {
            continue;
        }
        if beta.iter().any(|row| row.iter().filter(|&&b| b).count() as i64 > nc as i64 + 1 - activations as i64) {
            continue;
        }
        for umask in 0u32..1 << bits {
            let mu: Vec<Vec<bool>> = (0..nd).map(|d| (0..nc).map(|c| umask >> (d * nc + c) & 1 == 1).collect()).collect();
            if mu.iter().any(|row| (row.iter().filter(|&&u| u).count() as i64) < activations as i64 - 1) {
                continue;
            }
            let mut obj = 0.0;
            let mut pooled = Vec::with_capacity(nd);
            for d in 0..nd {
                let mut t = rmax[d];
                for c in 0..nc {
                    if beta[d][c] {
                        t = t.min(0.0);
                        obj += cap[d][c] * price[d][c];
                    }
                    if mu[d][c] {
                        t = t.min(cap[d][c]);
                    }
                }
                pooled.push(t);
                obj += t;
            }
            if best.as_ref().is_none_or(|b| obj > b.0 + 1e-12) {
                best = Some((obj, pooled, beta.clone()));
            }
        }
    }
    let (objective, pooled, beta) = best.ok_or_else(|| ReserveError::BadBids("no feasible selection".into()))?;
    Ok(Aggregation {
        activations,
        method: "exhaustive".into(),
        objective,
        blocks: blocks_from(bids, &cap, &price, &pooled, &beta),
    })
}
