//! Local reward and transition losses of a world model, exact and sampled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{pushforward, Encoder, LatentMdp, Metric};
use crate::mdp::{FiniteMdp, StationaryDist, TabularPolicy, TransitionCounts};
use crate::transport::transport_cost;

pub use crate::mdp::{Transition, TransitionBatch};

/// Exact 1-Wasserstein distance between two distributions over latent states.
pub fn wasserstein(mu: &[f64], nu: &[f64], metric: &Metric) -> Result<f64> {
    let n = metric.len();
    if mu.len() != n || nu.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "distributions of length {} and {} for a metric over {n} points",
            mu.len(),
            nu.len()
        )));
    }
    if mu == nu {
        return Ok(0.0);
    }
    if metric.is_discrete() {
        return Ok(0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>());
    }
    let point = |p: &[f64]| {
        let mut it = p.iter().enumerate().filter(|(_, &x)| x > 0.0);
        match (it.next(), it.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    };
    if let Some(i) = point(mu) {
        return Ok(nu
            .iter()
            .enumerate()
            .map(|(j, &q)| q * metric.d(i, j))
            .sum());
    }
    if let Some(j) = point(nu) {
        return Ok(mu
            .iter()
            .enumerate()
            .map(|(i, &p)| p * metric.d(i, j))
            .sum());
    }
    transport_cost(mu, nu, metric.as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossSource {
    ExactStationary,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_r: f64,
    pub l_p: f64,
    pub source: LossSource,
    pub sample_count: u64,
}

impl LossReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_inputs(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    weighting: &StationaryDist,
    policy: &TabularPolicy,
) -> Result<()> {
    latent.check_pair(mdp, encoder)?;
    mdp.check_policy(policy)?;
    if weighting.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch("weighting length".into()));
    }
    Ok(())
}

/// `phi# P(.|s,a)`.
pub fn pushed_row(mdp: &FiniteMdp, encoder: &Encoder, s: usize, a: usize) -> Vec<f64> {
    pushforward(encoder, mdp.row(s, a)).expect("encoder checked against mdp")
}

/// `L_R` and `L_P` under `s ~ weighting`, `a ~ policy(.|s)`, by enumeration.
pub fn exact_losses(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    weighting: &StationaryDist,
    policy: &TabularPolicy,
) -> Result<LossReport> {
    check_inputs(mdp, encoder, latent, weighting, policy)?;
    let (mut l_r, mut l_p) = (0.0, 0.0);
    for s in 0..mdp.n_states() {
        let w = weighting.xi[s];
        if w == 0.0 {
            continue;
        }
        let z = encoder.map(s);
        for a in 0..mdp.n_actions() {
            let pa = w * policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            l_r += pa * (mdp.r(s, a) - latent.r(z, a)).abs();
            let pushed = pushed_row(mdp, encoder, s, a);
            l_p += pa * wasserstein(&pushed, latent.row(z, a), latent.metric())?;
        }
    }
    Ok(LossReport {
        l_r,
        l_p,
        source: LossSource::ExactStationary,
        sample_count: 0,
    })
}

fn require_discrete(latent: &LatentMdp) -> Result<()> {
    if !latent.metric().is_discrete() {
        return Err(Error::precondition(
            "empirical losses",
            "the sampled transition estimator needs the discrete latent metric",
        ));
    }
    Ok(())
}

/// Sample estimates `L̂_R = mean |r - R̄|`, `L̂_P = 1 - mean P̄(φ(s')|φ(s),a)`.
pub fn empirical_losses(
    batch: &TransitionBatch,
    encoder: &Encoder,
    latent: &LatentMdp,
) -> Result<LossReport> {
    require_discrete(latent)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (mut sr, mut sp) = (0.0, 0.0);
    for t in batch.iter() {
        let z = encoder.map(t.s);
        sr += (t.r - latent.r(z, t.a)).abs();
        sp += latent.p(z, t.a, encoder.map(t.s_next));
    }
    let n = batch.len() as f64;
    Ok(LossReport {
        l_r: sr / n,
        l_p: 1.0 - sp / n,
        source: LossSource::Empirical,
        sample_count: batch.len() as u64,
    })
}

/// Same estimators computed from cell counts; rewards are read from `mdp`.
pub fn empirical_losses_from_counts(
    counts: &TransitionCounts,
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
) -> Result<LossReport> {
    require_discrete(latent)?;
    latent.check_pair(mdp, encoder)?;
    if counts.total == 0 {
        return Err(Error::EmptyBatch);
    }
    let (mut sr, mut sp) = (0.0, 0.0);
    for &(s, a, t, k) in &counts.cells {
        let z = encoder.map(s);
        let k = k as f64;
        sr += k * (mdp.r(s, a) - latent.r(z, a)).abs();
        sp += k * latent.p(z, a, encoder.map(t));
    }
    let n = counts.total as f64;
    Ok(LossReport {
        l_r: sr / n,
        l_p: 1.0 - sp / n,
        source: LossSource::Empirical,
        sample_count: counts.total,
    })
}

/// `E_{s,a} E_{s'~P} E_{z'~P̄} d(φ(s'), z')`, an upper bound on `L_P`.
pub fn crude_transition_bound(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    weighting: &StationaryDist,
    policy: &TabularPolicy,
) -> Result<f64> {
    check_inputs(mdp, encoder, latent, weighting, policy)?;
    let metric = latent.metric();
    let mut total = 0.0;
    for s in 0..mdp.n_states() {
        let w = weighting.xi[s];
        if w == 0.0 {
            continue;
        }
        let z = encoder.map(s);
        for a in 0..mdp.n_actions() {
            let pa = w * policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            let pushed = pushed_row(mdp, encoder, s, a);
            let latent_row = latent.row(z, a);
            let mut e = 0.0;
            for (x, px) in pushed.iter().enumerate() {
                for (y, qy) in latent_row.iter().enumerate() {
                    e += px * qy * metric.d(x, y);
                }
            }
            total += pa * e;
        }
    }
    Ok(total)
}
