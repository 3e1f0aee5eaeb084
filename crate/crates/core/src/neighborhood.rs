//! Importance-ratio neighborhoods and the exact constrained improvement step.
//!
//! For fixed action values the constrained improvement objective is separable
//! across states, and each per-state problem is a linear program over the box
//! `(2 - c) b(a) <= p(a) <= c b(a)` intersected with the simplex. After
//! setting every coordinate to its lower bound the remaining mass `c - 1` is
//! allocated greedily to the highest-valued actions, each absorbing at most
//! `2 (c - 1) b(a)`. Any feasible point that is not of this form can be
//! improved by moving mass from a lower-valued to a higher-valued action, so
//! the greedy fill is optimal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy, FiniteMdp, StationaryDist, TabularPolicy};

/// Boundary tolerance for membership tests.
pub const NEIGHBORHOOD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrSummary {
    pub sup_ir: f64,
    pub inf_ir: f64,
    pub support_match: bool,
}

/// Extremal ratios `candidate / base` over actions supported by `base`.
pub fn extremal_ir(base: &TabularPolicy, candidate: &TabularPolicy) -> Result<IrSummary> {
    if base.n_states() != candidate.n_states() || base.n_actions() != candidate.n_actions() {
        return Err(Error::DimensionMismatch(
            "policies of different shape".into(),
        ));
    }
    let (mut sup_ir, mut inf_ir) = (0.0_f64, f64::INFINITY);
    let mut support_match = true;
    for s in 0..base.n_states() {
        for (&b, &c) in base.row(s).iter().zip(candidate.row(s)) {
            if b > 0.0 {
                let r = c / b;
                sup_ir = sup_ir.max(r);
                inf_ir = inf_ir.min(r);
                support_match &= c > 0.0;
            } else {
                support_match &= c == 0.0;
            }
        }
    }
    Ok(IrSummary {
        sup_ir,
        inf_ir,
        support_match,
    })
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 1.0 && c < 2.0) {
        return Err(Error::NeighborhoodConstant(c));
    }
    Ok(())
}

/// Membership in the neighborhood with any constant `c >= 1`.
pub fn in_neighborhood_unchecked(ir: &IrSummary, c: f64) -> bool {
    ir.support_match && ir.inf_ir >= 2.0 - c - NEIGHBORHOOD_TOL && ir.sup_ir <= c + NEIGHBORHOOD_TOL
}

/// True iff `2 - c <= inf IR`, `sup IR <= c` and supports agree.
pub fn in_neighborhood(base: &TabularPolicy, candidate: &TabularPolicy, c: f64) -> Result<bool> {
    check_c(c)?;
    Ok(in_neighborhood_unchecked(&extremal_ir(base, candidate)?, c))
}

/// Maximizer of `sum_a p(a) values(a)` over the neighborhood box around `base_row`.
///
/// Exactly tied actions share their pour in proportion to their caps, so
/// equal values return `base_row` itself; otherwise actions are filled by
/// descending value, then ascending index.
pub fn constrained_improve_state(action_values: &[f64], base_row: &[f64], c: f64) -> Vec<f64> {
    let lo = 2.0 - c;
    let mut p: Vec<f64> = base_row.iter().map(|&b| lo * b).collect();
    let mut order: Vec<usize> = (0..base_row.len()).filter(|&a| base_row[a] > 0.0).collect();
    order.sort_by(|&x, &y| {
        action_values[y]
            .partial_cmp(&action_values[x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    let mut surplus = 1.0 - p.iter().sum::<f64>();
    let mut i = 0;
    while i < order.len() && surplus > 0.0 {
        let v = action_values[order[i]];
        let mut j = i;
        while j < order.len() && action_values[order[j]] == v {
            j += 1;
        }
        let group = &order[i..j];
        let group_base: f64 = group.iter().map(|&a| base_row[a]).sum();
        let cap = 2.0 * (c - 1.0) * group_base;
        let take = surplus.min(cap);
        for &a in group {
            p[a] += take * base_row[a] / group_base;
        }
        surplus -= take;
        i = j;
    }
    p
}

/// One exact mirror-learning step with neighborhood constant `c`.
///
/// The sampling distribution must charge every state; given that, it does
/// not change the maximizer because the objective decouples over states.
pub fn mirror_step(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    c: f64,
    sampling: &StationaryDist,
) -> Result<TabularPolicy> {
    check_c(c)?;
    if sampling.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch(
            "sampling distribution length".into(),
        ));
    }
    if let Some(s) = sampling.first_zero() {
        return Err(Error::SamplingSupport(s));
    }
    if !policy.has_full_support() {
        return Err(Error::invalid(
            "policy",
            "mirror step needs a full-support policy",
        ));
    }
    let tables = evaluate_policy(mdp, policy, false)?;
    let probs: Vec<f64> = (0..mdp.n_states())
        .flat_map(|s| constrained_improve_state(tables.adv_row(s), policy.row(s), c))
        .collect();
    TabularPolicy::new(
        mdp.n_states(),
        mdp.n_actions(),
        renormalized(probs, mdp.n_actions()),
    )
}

fn renormalized(mut probs: Vec<f64>, n_actions: usize) -> Vec<f64> {
    for row in probs.chunks_mut(n_actions) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
    }
    probs
}

/// Expected advantage `E_{s~sampling} E_{a~candidate} A^policy(s, a)`.
pub fn surrogate_gain(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    candidate: &TabularPolicy,
    sampling: &StationaryDist,
) -> Result<f64> {
    let tables = evaluate_policy(mdp, policy, false)?;
    Ok((0..mdp.n_states())
        .map(|s| {
            sampling.xi[s]
                * candidate
                    .row(s)
                    .iter()
                    .zip(tables.adv_row(s))
                    .map(|(p, a)| p * a)
                    .sum::<f64>()
        })
        .sum())
}
