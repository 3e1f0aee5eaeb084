//! PPO-style machinery at tabular scale: drift regularizer, loss-penalized
//! utility, clipped-surrogate ascent for softmax latent policies, and
//! imagination rollouts inside a world model.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{compose, Encoder, LatentMdp};
use crate::mdp::{evaluate_policy, FiniteMdp, StationaryDist, TabularPolicy, TransitionBatch};

/// Latent policy parametrized by unnormalized log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxLatentPolicy {
    pub n_latent: usize,
    pub n_actions: usize,
    pub logits: Vec<f64>,
}

impl SoftmaxLatentPolicy {
    pub fn new(n_latent: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != n_latent * n_actions || n_actions == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} logits for {n_latent}x{n_actions}",
                logits.len()
            )));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("logits", "non-finite entry"));
        }
        Ok(Self {
            n_latent,
            n_actions,
            logits,
        })
    }

    pub fn uniform(n_latent: usize, n_actions: usize) -> Self {
        Self {
            n_latent,
            n_actions,
            logits: vec![0.0; n_latent * n_actions],
        }
    }

    /// Log-probabilities of a full-support tabular policy.
    pub fn from_tabular(policy: &TabularPolicy) -> Result<Self> {
        if !policy.has_full_support() {
            return Err(Error::invalid("policy", "softmax needs full support"));
        }
        Self::new(
            policy.n_states(),
            policy.n_actions(),
            policy.probs().iter().map(|p| p.ln()).collect(),
        )
    }

    pub fn probs_row(&self, z: usize) -> Vec<f64> {
        let row = &self.logits[z * self.n_actions..(z + 1) * self.n_actions];
        let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|x| x / total).collect()
    }

    pub fn to_tabular(&self) -> TabularPolicy {
        let probs = (0..self.n_latent).flat_map(|z| self.probs_row(z)).collect();
        TabularPolicy::new(self.n_latent, self.n_actions, probs)
            .expect("softmax rows are distributions")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub epsilon_clip: f64,
    pub alpha_r: f64,
    pub alpha_p: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            epsilon_clip: 0.1,
            alpha_r: 0.01,
            alpha_p: 5e-4,
            learning_rate: 1.0,
            epochs: 4,
            minibatches: 4,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    /// Clip range matching the neighborhood constant `c`.
    pub fn tied_to_neighborhood(mut self, c: f64) -> Self {
        self.epsilon_clip = c - 1.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::invalid("surrogate config", format!("{what} = {v}"));
        if !(self.epsilon_clip > 0.0) {
            return Err(bad("epsilon_clip", self.epsilon_clip));
        }
        if !(self.alpha_r > 0.0 && self.alpha_r <= 1.0) {
            return Err(bad("alpha_r", self.alpha_r));
        }
        if !(self.alpha_p > 0.0 && self.alpha_p <= 1.0) {
            return Err(bad("alpha_p", self.alpha_p));
        }
        if !(self.learning_rate > 0.0) {
            return Err(bad("learning_rate", self.learning_rate));
        }
        if self.epochs == 0 || self.minibatches == 0 {
            return Err(Error::invalid(
                "surrogate config",
                "epochs and minibatches must be positive",
            ));
        }
        Ok(())
    }
}

/// `(ℓ_R, ℓ_P)` for one ground transition.
pub fn transitionwise_losses(
    s: usize,
    a: usize,
    s_next: usize,
    encoder: &Encoder,
    latent: &LatentMdp,
    mdp: &FiniteMdp,
) -> (f64, f64) {
    let z = encoder.map(s);
    let l_r = (mdp.r(s, a) - latent.r(z, a)).abs();
    let z_next = encoder.map(s_next);
    let l_p = latent
        .row(z, a)
        .iter()
        .enumerate()
        .map(|(y, &p)| p * latent.metric().d(z_next, y))
        .sum();
    (l_r, l_p)
}

/// `U = adv - α_R ℓ_R - α_P ℓ_P`.
#[allow(clippy::too_many_arguments)]
pub fn utility(
    s: usize,
    a: usize,
    s_next: usize,
    adv: f64,
    config: &SurrogateConfig,
    encoder: &Encoder,
    latent: &LatentMdp,
    mdp: &FiniteMdp,
) -> f64 {
    let (l_r, l_p) = transitionwise_losses(s, a, s_next, encoder, latent, mdp);
    adv - config.alpha_r * l_r - config.alpha_p * l_p
}

fn clip(r: f64, eps: f64) -> f64 {
    r.clamp(1.0 - eps, 1.0 + eps)
}

/// `E_{a~base}[ReLU((ratio - clip(ratio, 1±ε)) values(s,a))]` at `state`.
pub fn ppo_drift(
    base: &TabularPolicy,
    candidate: &TabularPolicy,
    values: &[f64],
    state: usize,
    epsilon: f64,
) -> Result<f64> {
    let na = base.n_actions();
    if values.len() < (state + 1) * na || candidate.n_actions() != na {
        return Err(Error::DimensionMismatch("drift inputs".into()));
    }
    let mut d = 0.0;
    for (a, (&b, &c)) in base.row(state).iter().zip(candidate.row(state)).enumerate() {
        if (b > 0.0) != (c > 0.0) {
            return Err(Error::invalid(
                "drift",
                format!("support mismatch at state {state}, action {a}"),
            ));
        }
        if b == 0.0 {
            continue;
        }
        let r = c / b;
        d += b * ((r - clip(r, epsilon)) * values[state * na + a]).max(0.0);
    }
    Ok(d)
}

/// `E_{s~w}[E_{a~candidate} values(s,a) - drift(s)]`.
pub fn drift_regularized_objective(
    base: &TabularPolicy,
    candidate: &TabularPolicy,
    values: &[f64],
    weighting: &StationaryDist,
    epsilon: f64,
) -> Result<f64> {
    let na = base.n_actions();
    let mut total = 0.0;
    for s in 0..base.n_states() {
        let gain: f64 = (0..na)
            .map(|a| candidate.prob(s, a) * values[s * na + a])
            .sum();
        total += weighting.xi[s] * (gain - ppo_drift(base, candidate, values, s, epsilon)?);
    }
    Ok(total)
}

/// `E_{s~w} E_{a~base} min(ratio v, clip(ratio) v)`.
pub fn clipped_expectation(
    base: &TabularPolicy,
    candidate: &TabularPolicy,
    values: &[f64],
    weighting: &StationaryDist,
    epsilon: f64,
) -> f64 {
    let na = base.n_actions();
    let mut total = 0.0;
    for s in 0..base.n_states() {
        for a in 0..na {
            let b = base.prob(s, a);
            if b == 0.0 {
                continue;
            }
            let r = candidate.prob(s, a) / b;
            let v = values[s * na + a];
            total += weighting.xi[s] * b * (r * v).min(clip(r, epsilon) * v);
        }
    }
    total
}

/// One term of the clipped surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClippedSample {
    pub latent: usize,
    pub action: usize,
    pub utility: f64,
    pub old_prob: f64,
}

/// Mean of `min(ratio U, clip(ratio, 1±ε) U)` over `samples`.
pub fn clipped_objective(
    policy: &SoftmaxLatentPolicy,
    samples: &[ClippedSample],
    epsilon: f64,
) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples
        .iter()
        .map(|t| {
            let r = policy.probs_row(t.latent)[t.action] / t.old_prob;
            (r * t.utility).min(clip(r, epsilon) * t.utility)
        })
        .sum();
    sum / samples.len() as f64
}

/// Analytic gradient of [`clipped_objective`] with respect to the logits.
pub fn clipped_gradient(
    policy: &SoftmaxLatentPolicy,
    samples: &[ClippedSample],
    epsilon: f64,
) -> Result<Vec<f64>> {
    let na = policy.n_actions;
    let mut grad = vec![0.0; policy.logits.len()];
    if samples.is_empty() {
        return Ok(grad);
    }
    let rows: Vec<Vec<f64>> = (0..policy.n_latent).map(|z| policy.probs_row(z)).collect();
    for t in samples {
        let pi = &rows[t.latent];
        let r = pi[t.action] / t.old_prob;
        let u = t.utility;
        // the unclipped branch is the active one
        let active = (u > 0.0 && r < 1.0 + epsilon) || (u < 0.0 && r > 1.0 - epsilon);
        if !active {
            continue;
        }
        for (b, &pb) in pi.iter().enumerate() {
            let ind = if b == t.action { 1.0 } else { 0.0 };
            grad[t.latent * na + b] += u * r * (ind - pb);
        }
    }
    let n = samples.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(format!(
            "logit ({}, {}) has gradient {}",
            i / na,
            i % na,
            grad[i]
        )));
    }
    Ok(grad)
}

/// Builds the surrogate samples of a ground batch collected under `policy ∘ encoder`,
/// with exact advantages of that policy.
pub fn surrogate_samples(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    policy: &SoftmaxLatentPolicy,
    batch: &TransitionBatch,
    config: &SurrogateConfig,
) -> Result<Vec<ClippedSample>> {
    latent.check_pair(mdp, encoder)?;
    batch.validate(mdp)?;
    let tabular = policy.to_tabular();
    let ground = compose(&tabular, encoder)?;
    let tables = evaluate_policy(mdp, &ground, false)?;
    Ok(batch
        .iter()
        .map(|t| {
            let z = encoder.map(t.s);
            ClippedSample {
                latent: z,
                action: t.a,
                utility: utility(
                    t.s,
                    t.a,
                    t.s_next,
                    tables.adv(t.s, t.a),
                    config,
                    encoder,
                    latent,
                    mdp,
                ),
                old_prob: tabular.prob(z, t.a),
            }
        })
        .collect())
}

/// Gradient ascent on the clipped surrogate for the configured epochs and
/// minibatches. Advantages are exact values of the data-collecting policy.
pub fn clipped_update(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    policy: &SoftmaxLatentPolicy,
    batch: &TransitionBatch,
    config: &SurrogateConfig,
) -> Result<SoftmaxLatentPolicy> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let samples = surrogate_samples(mdp, encoder, latent, policy, batch, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = policy.clone();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mb = samples.len().div_ceil(config.minibatches);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(mb) {
            let part: Vec<ClippedSample> = chunk.iter().map(|&i| samples[i]).collect();
            let g = clipped_gradient(&current, &part, config.epsilon_clip)?;
            for (l, d) in current.logits.iter_mut().zip(g) {
                *l += config.learning_rate * d;
            }
        }
    }
    Ok(current)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTrajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl LatentTrajectory {
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards
            .iter()
            .rev()
            .fold(0.0, |acc, r| r + gamma * acc)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatentBatch {
    pub trajectories: Vec<LatentTrajectory>,
}

struct Imagination {
    starts: WeightedIndex<f64>,
    actions: Vec<WeightedIndex<f64>>,
    next: Vec<WeightedIndex<f64>>,
}

impl Imagination {
    fn new(latent: &LatentMdp, policy: &TabularPolicy, starts: &[f64]) -> Result<Self> {
        latent.model().check_policy(policy)?;
        if starts.len() != latent.n_latent() {
            return Err(Error::DimensionMismatch("start distribution length".into()));
        }
        let na = latent.n_actions();
        Ok(Self {
            starts: WeightedIndex::new(starts)
                .map_err(|e| Error::invalid("starts", e.to_string()))?,
            actions: (0..latent.n_latent())
                .map(|z| WeightedIndex::new(policy.row(z)).expect("policy row"))
                .collect(),
            next: (0..latent.n_latent() * na)
                .map(|i| WeightedIndex::new(latent.row(i / na, i % na)).expect("transition row"))
                .collect(),
        })
    }

    fn run(
        &self,
        latent: &LatentMdp,
        horizon: usize,
        rng: &mut ChaCha8Rng,
        mut visit: impl FnMut(usize, usize, f64),
    ) -> usize {
        let na = latent.n_actions();
        let mut z = self.starts.sample(rng);
        for _ in 0..horizon {
            let a = self.actions[z].sample(rng);
            let z_next = self.next[z * na + a].sample(rng);
            visit(z, a, latent.r(z, a));
            z = z_next;
        }
        z
    }
}

/// Samples `count` trajectories of length `horizon` inside the world model.
pub fn imagine_rollouts(
    latent: &LatentMdp,
    latent_policy: &TabularPolicy,
    starts: &[f64],
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<LatentBatch> {
    if horizon == 0 {
        return Err(Error::invalid("imagination", "horizon must be at least 1"));
    }
    if count == 0 {
        return Ok(LatentBatch::default());
    }
    let im = Imagination::new(latent, latent_policy, starts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajectories = (0..count)
        .map(|_| {
            let mut tr = LatentTrajectory {
                states: Vec::with_capacity(horizon + 1),
                actions: Vec::with_capacity(horizon),
                rewards: Vec::with_capacity(horizon),
            };
            let last = im.run(latent, horizon, &mut rng, |z, a, r| {
                tr.states.push(z);
                tr.actions.push(a);
                tr.rewards.push(r);
            });
            tr.states.push(last);
            tr
        })
        .collect();
    Ok(LatentBatch { trajectories })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

/// Streaming mean of imagined discounted returns; draws the same random
/// sequence as [`imagine_rollouts`] with equal arguments.
pub fn imagined_returns(
    latent: &LatentMdp,
    latent_policy: &TabularPolicy,
    starts: &[f64],
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<ReturnEstimate> {
    if horizon == 0 {
        return Err(Error::invalid("imagination", "horizon must be at least 1"));
    }
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let im = Imagination::new(latent, latent_policy, starts)?;
    let gamma = latent.discount();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..count {
        let (mut g, mut disc) = (0.0, 1.0);
        im.run(latent, horizon, &mut rng, |_, _, r| {
            g += disc * r;
            disc *= gamma;
        });
        sum += g;
        sum_sq += g * g;
    }
    let n = count as f64;
    let mean = sum / n;
    let var = if count > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(ReturnEstimate {
        mean,
        std_err: (var / n).sqrt(),
        count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::Metric;

    #[test]
    fn utility_arithmetic() {
        // ℓ_R = 0.1, ℓ_P = 0.2 on a two-latent instance
        let mdp =
            FiniteMdp::new(2, 1, vec![1.0, 0.0, 0.0, 1.0], vec![0.5, 0.0], 0, 0.9, None).unwrap();
        let model =
            FiniteMdp::new(2, 1, vec![0.8, 0.2, 0.0, 1.0], vec![0.4, 0.0], 0, 0.9, None).unwrap();
        let latent = LatentMdp::new(model, Metric::discrete(2)).unwrap();
        let enc = Encoder::identity(2);
        let (l_r, l_p) = transitionwise_losses(0, 0, 0, &enc, &latent, &mdp);
        assert!((l_r - 0.1).abs() < 1e-15 && (l_p - 0.2).abs() < 1e-15);
        let cfg = SurrogateConfig {
            alpha_r: 1.0,
            alpha_p: 1.0,
            ..Default::default()
        };
        assert!((utility(0, 0, 0, 0.5, &cfg, &enc, &latent, &mdp) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn drift_arithmetic() {
        let base = TabularPolicy::new(1, 2, vec![0.4, 0.6]).unwrap();
        let cand = TabularPolicy::new(1, 2, vec![0.6, 0.4]).unwrap();
        // ratio 1.5 at a0 with value 2: 0.4 * (1.5 - 1.1) * 2
        let d = ppo_drift(&base, &cand, &[2.0, 0.0], 0, 0.1).unwrap();
        assert!((d - 0.4 * 0.4 * 2.0).abs() < 1e-15);
        assert_eq!(ppo_drift(&base, &base, &[2.0, -1.0], 0, 0.1).unwrap(), 0.0);
        let bad = TabularPolicy::new(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(ppo_drift(&base, &bad, &[1.0, 1.0], 0, 0.1).is_err());
    }

    #[test]
    fn softmax_round_trip() {
        let p = TabularPolicy::new(1, 3, vec![0.2, 0.3, 0.5]).unwrap();
        let s = SoftmaxLatentPolicy::from_tabular(&p).unwrap();
        let back = s.to_tabular();
        assert!(back
            .probs()
            .iter()
            .zip(p.probs())
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn horizon_one_deterministic_rewards() {
        let model = FiniteMdp::new(
            2,
            1,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.3, -0.7],
            0,
            0.9,
            None,
        )
        .unwrap();
        let latent = LatentMdp::new(model, Metric::discrete(2)).unwrap();
        let pol = TabularPolicy::uniform(2, 1);
        let batch = imagine_rollouts(&latent, &pol, &[0.5, 0.5], 1, 50, 4).unwrap();
        for t in &batch.trajectories {
            assert_eq!(t.rewards[0], latent.r(t.states[0], 0));
            assert_eq!(t.states[1], 1 - t.states[0]);
        }
        assert!(imagine_rollouts(&latent, &pol, &[0.5, 0.5], 3, 0, 4)
            .unwrap()
            .trajectories
            .is_empty());
        let est = imagined_returns(&latent, &pol, &[0.5, 0.5], 1, 50, 4).unwrap();
        let direct: f64 = batch
            .trajectories
            .iter()
            .map(|t| t.discounted_return(0.9))
            .sum::<f64>()
            / 50.0;
        assert!((est.mean - direct).abs() < 1e-15);
    }
}
