//! Finite (episodic) MDPs, tabular policies and their exact solution.
//!
//! Transition and reward tensors are stored flat in row-major order:
//! `transition[(s * n_actions + a) * n_states + s_next]` and
//! `reward[s * n_actions + a]`.

mod chain;
mod sampling;
mod values;

pub use chain::{
    average_episode_length, discounted_occupancy, episode_length_monte_carlo, induced_chain,
    restart_augmented_chain, stationary_distribution, stationary_of_chain, EpisodeLengthEstimate,
    StationaryDist,
};
pub use sampling::{
    sample_transition_counts, sample_transitions, Transition, TransitionBatch, TransitionCounts,
};
pub use values::{evaluate_policy, greedy_policy, value_iteration, ValueTables};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating probability vectors supplied as input.
pub const PROB_TOL: f64 = 1e-12;

/// Tolerance for solved quantities (values, stationary measures).
pub const SOLVE_TOL: f64 = 1e-9;

pub(crate) fn check_distribution(what: &'static str, p: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for (i, &x) in p.iter().enumerate() {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::invalid(what, format!("entry {i} = {x}")));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::invalid(what, format!("sums to {sum}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial_state: usize,
    discount: f64,
    reset_state: Option<usize>,
    r_max: f64,
}

impl FiniteMdp {
    /// Builds an MDP from flat tensors, checking every structural invariant.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial_state: usize,
        discount: f64,
        reset_state: Option<usize>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid(
                "mdp",
                "needs at least one state and one action",
            ));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::DimensionMismatch(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if initial_state >= n_states {
            return Err(Error::invalid(
                "mdp",
                format!("initial state {initial_state} out of range"),
            ));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::invalid(
                "mdp",
                format!("discount {discount} not in [0, 1)"),
            ));
        }
        for (i, row) in transition.chunks(n_states).enumerate() {
            check_distribution("transition row", row).map_err(|e| {
                Error::invalid(
                    "mdp",
                    format!("(s={}, a={}): {e}", i / n_actions, i % n_actions),
                )
            })?;
        }
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::invalid("mdp", format!("non-finite reward {r}")));
        }
        if let Some(reset) = reset_state {
            if reset >= n_states {
                return Err(Error::invalid(
                    "mdp",
                    format!("reset state {reset} out of range"),
                ));
            }
            for a in 0..n_actions {
                if reward[reset * n_actions + a] != 0.0 {
                    return Err(Error::invalid(
                        "mdp",
                        format!("reset state must not incur reward (action {a})"),
                    ));
                }
                let row = &transition[(reset * n_actions + a) * n_states..][..n_states];
                if (row[initial_state] - 1.0).abs() > PROB_TOL {
                    return Err(Error::invalid(
                        "mdp",
                        format!("reset state must restart at the initial state (action {a})"),
                    ));
                }
            }
        }
        let r_max = reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            initial_state,
            discount,
            reset_state,
            r_max,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn reset_state(&self) -> Option<usize> {
        self.reset_state
    }

    /// Largest absolute reward.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// Next-state distribution of `(s, a)`.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    /// Same dynamics with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            self.initial_state,
            discount,
            self.reset_state,
        )
    }

    /// Same dynamics with every reward replaced by `f(s, a, r)`.
    pub fn map_rewards(&self, f: impl Fn(usize, usize, f64) -> f64) -> Result<Self> {
        let reward = (0..self.n_states * self.n_actions)
            .map(|i| f(i / self.n_actions, i % self.n_actions, self.reward[i]))
            .collect();
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            reward,
            self.initial_state,
            self.discount,
            self.reset_state,
        )
    }

    pub(crate) fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, mdp is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// On-disk layout of an MDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub initial_state: usize,
    #[serde(default)]
    pub reset_state: Option<usize>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
}

impl TryFrom<MdpFile> for FiniteMdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        if f.transition.len() != f.n_states || f.reward.len() != f.n_states {
            return Err(Error::DimensionMismatch(
                "outer length of transition/reward must equal n_states".into(),
            ));
        }
        let mut transition = Vec::with_capacity(f.n_states * f.n_actions * f.n_states);
        for (s, per_action) in f.transition.iter().enumerate() {
            if per_action.len() != f.n_actions {
                return Err(Error::DimensionMismatch(format!(
                    "transition[{s}] has {} actions",
                    per_action.len()
                )));
            }
            for row in per_action {
                if row.len() != f.n_states {
                    return Err(Error::DimensionMismatch(format!(
                        "transition row of state {s} has length {}",
                        row.len()
                    )));
                }
                transition.extend_from_slice(row);
            }
        }
        let mut reward = Vec::with_capacity(f.n_states * f.n_actions);
        for (s, row) in f.reward.iter().enumerate() {
            if row.len() != f.n_actions {
                return Err(Error::DimensionMismatch(format!(
                    "reward[{s}] has length {}",
                    row.len()
                )));
            }
            reward.extend_from_slice(row);
        }
        FiniteMdp::new(
            f.n_states,
            f.n_actions,
            transition,
            reward,
            f.initial_state,
            f.discount,
            f.reset_state,
        )
    }
}

impl From<FiniteMdp> for MdpFile {
    fn from(m: FiniteMdp) -> Self {
        let transition = (0..m.n_states)
            .map(|s| (0..m.n_actions).map(|a| m.row(s, a).to_vec()).collect())
            .collect();
        let reward = m.reward.chunks(m.n_actions).map(<[f64]>::to_vec).collect();
        MdpFile {
            n_states: m.n_states,
            n_actions: m.n_actions,
            discount: m.discount,
            initial_state: m.initial_state,
            reset_state: m.reset_state,
            transition,
            reward,
        }
    }
}

/// Row-stochastic action distributions, one row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions || n_actions == 0 {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} entries, expected {n_states}x{n_actions}",
                probs.len()
            )));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            check_distribution("policy row", row)
                .map_err(|e| Error::invalid("policy", format!("state {s}: {e}")))?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    /// Builds a policy from rows, renormalizing away rounding drift.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for row in rows {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch("ragged policy rows".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("policy", format!("row sums to {sum}")));
            }
            probs.extend(row.iter().map(|p| p / sum));
        }
        Self::new(n_states, n_actions, probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::invalid("policy", format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.n_actions)
    }

    pub fn support(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(s)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, _)| a)
    }

    pub fn has_full_support(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// Convex combination `(1 - t) * self + t * other`.
    pub fn mix(&self, other: &Self, t: f64) -> Result<Self> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::DimensionMismatch(
                "mixing policies of different shape".into(),
            ));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (1.0 - t) * p + t * q)
            .collect();
        Self::new(self.n_states, self.n_actions, probs)
    }

    /// Short stable fingerprint of the probability table.
    pub fn fingerprint(&self) -> String {
        crate::digest::digest_f64s(&self.probs)[..16].to_string()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub probs: Vec<Vec<f64>>,
}

impl TryFrom<PolicyFile> for TabularPolicy {
    type Error = Error;

    fn try_from(f: PolicyFile) -> Result<Self> {
        let n_states = f.probs.len();
        let n_actions = f.probs.first().map_or(0, Vec::len);
        if f.probs.iter().any(|r| r.len() != n_actions) {
            return Err(Error::DimensionMismatch("ragged policy rows".into()));
        }
        TabularPolicy::new(n_states, n_actions, f.probs.concat())
    }
}

impl From<TabularPolicy> for PolicyFile {
    fn from(p: TabularPolicy) -> Self {
        PolicyFile {
            probs: p.rows().map(<[f64]>::to_vec).collect(),
        }
    }
}
