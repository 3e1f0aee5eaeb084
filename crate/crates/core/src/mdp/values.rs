use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FiniteMdp, TabularPolicy};
use crate::error::{Error, Result};

/// State values, action values and advantages of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTables {
    pub n_actions: usize,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub adv: Vec<f64>,
}

impl ValueTables {
    fn from_v(mdp: &FiniteMdp, v: Vec<f64>, masked: Option<usize>) -> Self {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let mut q = vec![0.0; ns * na];
        for s in 0..ns {
            if masked == Some(s) {
                continue;
            }
            for a in 0..na {
                let next: f64 = mdp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                q[s * na + a] = mdp.r(s, a) + mdp.discount() * next;
            }
        }
        let adv = q
            .iter()
            .enumerate()
            .map(|(i, &qa)| qa - v[i / na])
            .collect();
        Self {
            n_actions: na,
            v,
            q,
            adv,
        }
    }

    #[inline]
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    #[inline]
    pub fn adv(&self, s: usize, a: usize) -> f64 {
        self.adv[s * self.n_actions + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn adv_row(&self, s: usize) -> &[f64] {
        &self.adv[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Value of the initial state, i.e. the return J.
    pub fn value_at(&self, s: usize) -> f64 {
        self.v[s]
    }
}

pub(crate) fn solve_dense(a: DMatrix<f64>, b: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    a.lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical(format!("singular linear system in {what}")))
}

/// Exact policy evaluation by a dense LU solve of the Bellman system.
///
/// With `episodic_masking` the reset state is absorbing for value purposes:
/// `V(reset) = 0` and `Q(reset, .) = 0`.
pub fn evaluate_policy(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    episodic_masking: bool,
) -> Result<ValueTables> {
    mdp.check_policy(policy)?;
    let masked = if episodic_masking {
        Some(mdp.reset_state().ok_or_else(|| {
            Error::invalid("evaluation", "episodic masking requires a reset state")
        })?)
    } else {
        None
    };
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.discount();
    let mut a = DMatrix::<f64>::identity(ns, ns);
    let mut b = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        if masked == Some(s) {
            continue;
        }
        for act in 0..na {
            let pi = policy.prob(s, act);
            if pi == 0.0 {
                continue;
            }
            b[s] += pi * mdp.r(s, act);
            for (s2, &p) in mdp.row(s, act).iter().enumerate() {
                a[(s, s2)] -= gamma * pi * p;
            }
        }
    }
    let v = solve_dense(a, b, "policy evaluation")?;
    Ok(ValueTables::from_v(mdp, v.as_slice().to_vec(), masked))
}

/// Optimal values by value iteration, stopping once successive iterates
/// differ by at most `tol` in sup norm.
pub fn value_iteration(
    mdp: &FiniteMdp,
    episodic_masking: bool,
    tol: f64,
    max_iters: usize,
) -> Result<ValueTables> {
    let masked = if episodic_masking {
        Some(mdp.reset_state().ok_or_else(|| {
            Error::invalid("value iteration", "episodic masking requires a reset state")
        })?)
    } else {
        None
    };
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.discount();
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    for _ in 0..max_iters {
        let mut delta = 0.0_f64;
        for s in 0..ns {
            if masked == Some(s) {
                next[s] = 0.0;
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let ev: f64 = mdp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                best = best.max(mdp.r(s, a) + gamma * ev);
            }
            delta = delta.max((best - v[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut v, &mut next);
        // contraction: the remaining error is below delta * gamma / (1 - gamma)
        if delta * gamma / (1.0 - gamma) <= tol {
            return Ok(ValueTables::from_v(mdp, v, masked));
        }
    }
    Err(Error::Numerical(format!(
        "value iteration did not reach tolerance {tol} in {max_iters} iterations"
    )))
}

/// Deterministic greedy policy w.r.t. action values, ties to the lowest index.
pub fn greedy_policy(tables: &ValueTables) -> TabularPolicy {
    let na = tables.n_actions;
    let actions: Vec<usize> = tables
        .q
        .chunks(na)
        .map(|row| {
            let mut best = 0;
            for a in 1..na {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    TabularPolicy::deterministic(na, &actions).expect("greedy actions are in range")
}
