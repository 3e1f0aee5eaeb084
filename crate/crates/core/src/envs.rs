//! Concrete environments: the out-of-trajectory and confounding
//! counterexamples, and a seeded generator of small episodic instances.
//!
//! The two counterexamples fix every magnitude the figures leave open and
//! expose each as a parameter:
//!
//! * `fig1`: regions S1..S4 plus a reset state, three actions. Every
//!   non-reset transition terminates with probability `p_term`. In S1, a1
//!   drifts to S2 with probability `drift` (otherwise stays in S1), a2 jumps
//!   to S3 and a3 stays. In S2, a3 drifts to S4 with probability `drift`.
//!   S3 pays `s3_reward` and S4 pays 1 per step; both end with probability
//!   `p_end`. The encoder maps S1, S2, S4 to one latent each and splits S3
//!   in two halves; the world model is fitted under the baseline and then
//!   pays `corrupt_reward` in the second half of S3.
//! * `fig2`: s1, s2, s3, s4 and reset, two actions. From s1 both actions
//!   reach s2 with probability `1 - epsilon` and s3 otherwise. At s2, a2
//!   pays 2; at s3, a2 pays `-2/epsilon`; a1 pays nothing. Both move to s4,
//!   then to reset and back to s1. The encoder merges s2 and s3.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{compose, fit_latent_model, Encoder, LatentMdp};
use crate::mdp::{evaluate_policy, stationary_distribution, FiniteMdp, TabularPolicy};
use crate::neighborhood::constrained_improve_state;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub mdp: FiniteMdp,
    pub encoder: Encoder,
    pub latent: LatentMdp,
    /// Baseline over latent states.
    pub baseline_latent: TabularPolicy,
    /// The same baseline composed with the encoder.
    pub baseline: TabularPolicy,
}

impl EnvSpec {
    fn assemble(
        name: &str,
        params: BTreeMap<String, f64>,
        mdp: FiniteMdp,
        encoder: Encoder,
        baseline_latent: TabularPolicy,
    ) -> Result<Self> {
        let baseline = compose(&baseline_latent, &encoder)?;
        let xi = stationary_distribution(&mdp, &baseline)?;
        let latent = fit_latent_model(&mdp, &encoder, &xi)?;
        Ok(Self {
            name: name.to_string(),
            params,
            mdp,
            encoder,
            latent,
            baseline_latent,
            baseline,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }
}

/// Row-major transition/reward accumulator.
struct Builder {
    n: usize,
    na: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

impl Builder {
    fn new(n: usize, na: usize) -> Self {
        Self {
            n,
            na,
            transition: vec![0.0; n * na * n],
            reward: vec![0.0; n * na],
        }
    }

    fn add(&mut self, s: usize, a: usize, t: usize, p: f64) {
        self.transition[(s * self.na + a) * self.n + t] += p;
    }

    fn spread(&mut self, s: usize, a: usize, targets: &[usize], p: f64) {
        let each = p / targets.len() as f64;
        for &t in targets {
            self.add(s, a, t, each);
        }
    }

    fn set_reward(&mut self, s: usize, a: usize, r: f64) {
        self.reward[s * self.na + a] = r;
    }

    fn finish(self, initial: usize, discount: f64, reset: usize) -> Result<FiniteMdp> {
        FiniteMdp::new(
            self.n,
            self.na,
            self.transition,
            self.reward,
            initial,
            discount,
            Some(reset),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Params {
    pub epsilon: f64,
    pub region_sizes: [usize; 4],
    pub drift: f64,
    pub p_term: f64,
    pub p_end: f64,
    pub s3_reward: f64,
    pub corrupt_reward: f64,
    pub discount: f64,
}

impl Default for Fig1Params {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            region_sizes: [3, 3, 4, 3],
            drift: 0.3,
            p_term: 0.02,
            p_end: 0.1,
            s3_reward: -1.0,
            corrupt_reward: 20.0,
            discount: 0.95,
        }
    }
}

impl Fig1Params {
    fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::invalid("fig1 params", d));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0 / 3.0) {
            return bad(format!("epsilon = {} must lie in (0, 1/3)", self.epsilon));
        }
        if self.region_sizes[..2].contains(&0) || self.region_sizes[3] == 0 {
            return bad("regions S1, S2, S4 must be nonempty".into());
        }
        if self.region_sizes[2] < 2 {
            return bad("S3 needs at least two states to be split".into());
        }
        for (name, p) in [
            ("drift", self.drift),
            ("p_term", self.p_term),
            ("p_end", self.p_end),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("{name} = {p} must lie in (0, 1)"));
            }
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad(format!("discount = {}", self.discount));
        }
        Ok(())
    }
}

/// Out-of-trajectory counterexample; latent states are
/// `[s̄1, s̄2, s̄3, s̄3', s̄4, reset]`.
pub fn build_fig1(params: &Fig1Params) -> Result<EnvSpec> {
    params.validate()?;
    let [n1, n2, n3, n4] = params.region_sizes;
    let n = n1 + n2 + n3 + n4 + 1;
    let reset = n - 1;
    let range = |lo: usize, len: usize| (lo..lo + len).collect::<Vec<_>>();
    let s1 = range(0, n1);
    let s2 = range(n1, n2);
    let s3 = range(n1 + n2, n3);
    let s4 = range(n1 + n2 + n3, n4);
    let (q, keep) = (params.drift, 1.0 - params.p_term);
    let mut b = Builder::new(n, 3);
    for &s in &s1 {
        b.spread(s, 0, &s2, keep * q);
        b.spread(s, 0, &s1, keep * (1.0 - q));
        b.spread(s, 1, &s3, keep);
        b.spread(s, 2, &s1, keep);
    }
    for &s in &s2 {
        b.spread(s, 2, &s4, keep * q);
        b.spread(s, 2, &s2, keep * (1.0 - q));
        b.spread(s, 0, &s2, keep);
        b.spread(s, 1, &s2, keep);
    }
    for (region, r) in [(&s3, params.s3_reward), (&s4, 1.0)] {
        for &s in region {
            for a in 0..3 {
                b.spread(s, a, region, keep * (1.0 - params.p_end));
                b.add(s, a, reset, keep * params.p_end);
                b.set_reward(s, a, r);
            }
        }
    }
    for s in 0..reset {
        for a in 0..3 {
            b.add(s, a, reset, params.p_term);
        }
    }
    for a in 0..3 {
        b.add(reset, a, 0, 1.0);
    }
    let mdp = b.finish(0, params.discount, reset)?;

    let half = n3.div_ceil(2);
    let mapping: Vec<usize> = (0..n)
        .map(|s| match s {
            _ if s == reset => 5,
            _ if s < n1 => 0,
            _ if s < n1 + n2 => 1,
            _ if s < n1 + n2 + half => 2,
            _ if s < n1 + n2 + n3 => 3,
            _ => 4,
        })
        .collect();
    let encoder = Encoder::new(mapping, 6)?;
    let e = params.epsilon;
    let third = 1.0 / 3.0;
    let baseline_latent = TabularPolicy::from_rows(vec![
        vec![1.0 - 2.0 * e, e, e],
        vec![e, e, 1.0 - 2.0 * e],
        vec![third; 3],
        vec![third; 3],
        vec![third; 3],
        vec![third; 3],
    ])?;
    let mut map = BTreeMap::from([
        ("epsilon".to_string(), e),
        ("drift".to_string(), q),
        ("p_term".to_string(), params.p_term),
        ("p_end".to_string(), params.p_end),
        ("s3_reward".to_string(), params.s3_reward),
        ("corrupt_reward".to_string(), params.corrupt_reward),
        ("discount".to_string(), params.discount),
    ]);
    for (i, &k) in params.region_sizes.iter().enumerate() {
        map.insert(format!("region_size_{}", i + 1), k as f64);
    }
    let mut spec = EnvSpec::assemble("fig1", map, mdp, encoder, baseline_latent)?;
    let corrupted =
        spec.latent
            .model()
            .map_rewards(|z, _, r| if z == 3 { params.corrupt_reward } else { r })?;
    spec.latent = spec.latent.with_model(corrupted)?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Params {
    pub epsilon: f64,
    pub zeta: f64,
    pub discount: f64,
    /// Keep s2 and s3 in separate latent states.
    pub split: bool,
}

impl Default for Fig2Params {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            zeta: 1e-4,
            discount: 0.9,
            split: false,
        }
    }
}

/// Ground state indices of the confounding example.
pub mod fig2_states {
    pub const S1: usize = 0;
    pub const S2: usize = 1;
    pub const S3: usize = 2;
    pub const S4: usize = 3;
    pub const RESET: usize = 4;
}

/// Confounding counterexample. Merged latent states are `[s̄1, s̄, s̄4, reset]`;
/// the split encoder is the identity.
pub fn build_fig2(params: &Fig2Params) -> Result<EnvSpec> {
    use fig2_states::*;
    let (e, zeta) = (params.epsilon, params.zeta);
    if !(e > 0.0 && e < 0.25) {
        return Err(Error::invalid(
            "fig2 params",
            format!("epsilon = {e} must lie in (0, 1/4)"),
        ));
    }
    if !(zeta > 0.0 && zeta < e) {
        return Err(Error::invalid(
            "fig2 params",
            format!("zeta = {zeta} must lie in (0, epsilon)"),
        ));
    }
    let mut b = Builder::new(5, 2);
    for a in 0..2 {
        b.add(S1, a, S2, 1.0 - e);
        b.add(S1, a, S3, e);
        b.add(S2, a, S4, 1.0);
        b.add(S3, a, S4, 1.0);
        b.add(S4, a, RESET, 1.0);
        b.add(RESET, a, S1, 1.0);
    }
    b.set_reward(S2, 1, 2.0);
    b.set_reward(S3, 1, -2.0 / e);
    let mdp = b.finish(S1, params.discount, RESET)?;
    let row = vec![1.0 - zeta, zeta];
    let (encoder, rows) = if params.split {
        (
            Encoder::identity(5),
            vec![
                vec![0.5, 0.5],
                row.clone(),
                row,
                vec![0.5, 0.5],
                vec![0.5, 0.5],
            ],
        )
    } else {
        (
            Encoder::new(vec![0, 1, 1, 2, 3], 4)?,
            vec![vec![0.5, 0.5], row, vec![0.5, 0.5], vec![0.5, 0.5]],
        )
    };
    let map = BTreeMap::from([
        ("epsilon".to_string(), e),
        ("zeta".to_string(), zeta),
        ("discount".to_string(), params.discount),
        ("split".to_string(), f64::from(u8::from(params.split))),
    ]);
    EnvSpec::assemble("fig2", map, mdp, encoder, TabularPolicy::from_rows(rows)?)
}

/// Deterministic latent policy that, in each block, plays the baseline's
/// greedy ground action at the block's most visited state.
pub fn block_greedy_update(spec: &EnvSpec) -> Result<TabularPolicy> {
    let q = evaluate_policy(&spec.mdp, &spec.baseline, false)?;
    let xi = stationary_distribution(&spec.mdp, &spec.baseline)?;
    let actions: Vec<usize> = (0..spec.encoder.n_latent())
        .map(|z| {
            let s = spec
                .encoder
                .block(z)
                .fold(None, |best: Option<usize>, s| match best {
                    Some(b) if xi.xi[b] >= xi.xi[s] => Some(b),
                    _ => Some(s),
                })
                .expect("encoder is surjective");
            argmax(q.q_row(s))
        })
        .collect();
    TabularPolicy::deterministic(spec.mdp.n_actions(), &actions)
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomParams {
    /// Total state count including the reset state.
    pub n_states: usize,
    pub n_actions: usize,
    pub seed: u64,
    pub branching: usize,
    pub discount: f64,
}

pub const MAX_RANDOM_STATES: usize = 20;
pub const MAX_RANDOM_ACTIONS: usize = 5;
const REPAIR_ROUNDS: usize = 64;

/// Discounts cycled through by the randomized suite.
pub const SUITE_DISCOUNTS: [f64; 3] = [0.9, 0.95, 0.99];

/// Parameters of instance `i` of the randomized suite seeded by `seed`:
/// 3 to 20 states, 2 to 5 actions, branching 1 to 3.
pub fn suite_params(seed: u64, i: usize) -> RandomParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
    RandomParams {
        n_states: rng.random_range(3..=MAX_RANDOM_STATES),
        n_actions: rng.random_range(2..=MAX_RANDOM_ACTIONS),
        seed: rng.random(),
        branching: rng.random_range(1..=3),
        discount: SUITE_DISCOUNTS[i % 3],
    }
}

/// Seeded episodic instance: sparse dynamics with a positive termination
/// probability everywhere, rewards in `[-1, 1]`, a random surjective encoder
/// giving the reset state its own latent, a full-support baseline and a
/// world model fitted under it.
pub fn random_episodic(params: &RandomParams) -> Result<EnvSpec> {
    let RandomParams {
        n_states: n,
        n_actions: na,
        seed,
        branching,
        discount,
    } = *params;
    if !(3..=MAX_RANDOM_STATES).contains(&n) || !(1..=MAX_RANDOM_ACTIONS).contains(&na) {
        return Err(Error::invalid(
            "random instance",
            format!("{n} states and {na} actions outside 3..={MAX_RANDOM_STATES} and 1..={MAX_RANDOM_ACTIONS}"),
        ));
    }
    if branching == 0 {
        return Err(Error::invalid(
            "random instance",
            "branching must be positive",
        ));
    }
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::invalid(
            "random instance",
            format!("discount = {discount}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reset = n - 1;
    let inner = n - 1;
    let k = branching.min(inner);
    let mut succ: Vec<Vec<(usize, f64)>> = (0..inner * na)
        .map(|_| {
            sample_indices(&mut rng, inner, k)
                .into_iter()
                .map(|t| (t, rng.random_range(0.1..1.0)))
                .collect()
        })
        .collect();
    let terminate: Vec<f64> = (0..inner * na)
        .map(|_| rng.random_range(0.05..0.3))
        .collect();
    let reward: Vec<f64> = (0..inner * na)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();

    // every state must be reachable from the initial state
    let mut repaired = false;
    for _ in 0..REPAIR_ROUNDS {
        let reach = reachable(&succ, na, inner);
        let Some(u) = (0..inner).find(|&s| !reach[s]) else {
            repaired = true;
            break;
        };
        let sources: Vec<usize> = (0..inner).filter(|&s| reach[s]).collect();
        let s = *sources
            .choose(&mut rng)
            .expect("initial state is reachable");
        let a = rng.random_range(0..na);
        succ[s * na + a].push((u, rng.random_range(0.1..1.0)));
    }
    if !repaired {
        return Err(Error::Numerical(format!(
            "reachability repair exceeded {REPAIR_ROUNDS} rounds"
        )));
    }

    let mut b = Builder::new(n, na);
    for s in 0..inner {
        for a in 0..na {
            let i = s * na + a;
            let total: f64 = succ[i].iter().map(|x| x.1).sum();
            for &(t, w) in &succ[i] {
                b.add(s, a, t, (1.0 - terminate[i]) * w / total);
            }
            b.add(s, a, reset, terminate[i]);
            b.set_reward(s, a, reward[i]);
        }
    }
    for a in 0..na {
        b.add(reset, a, 0, 1.0);
    }
    let mdp = b.finish(0, discount, reset)?;

    let n_blocks = rng.random_range(1..=inner);
    let mut order: Vec<usize> = (0..inner).collect();
    order.shuffle(&mut rng);
    let mut mapping = vec![0; n];
    for (i, &s) in order.iter().enumerate() {
        mapping[s] = if i < n_blocks {
            i
        } else {
            rng.random_range(0..n_blocks)
        };
    }
    mapping[reset] = n_blocks;
    let encoder = Encoder::new(mapping, n_blocks + 1)?;
    let rows: Vec<Vec<f64>> = (0..=n_blocks)
        .map(|_| (0..na).map(|_| rng.random_range(0.1..1.0)).collect())
        .collect();
    let map = BTreeMap::from([
        ("n_states".to_string(), n as f64),
        ("n_actions".to_string(), na as f64),
        ("seed".to_string(), seed as f64),
        ("branching".to_string(), branching as f64),
        ("discount".to_string(), discount),
    ]);
    EnvSpec::assemble("random", map, mdp, encoder, normalized_policy(rows)?)
}

fn normalized_policy(rows: Vec<Vec<f64>>) -> Result<TabularPolicy> {
    let rows = rows
        .into_iter()
        .map(|r| {
            let t: f64 = r.iter().sum();
            r.into_iter().map(|x| x / t).collect()
        })
        .collect();
    TabularPolicy::from_rows(rows)
}

fn reachable(succ: &[Vec<(usize, f64)>], na: usize, inner: usize) -> Vec<bool> {
    let mut seen = vec![false; inner];
    seen[0] = true;
    let mut stack = vec![0];
    while let Some(s) = stack.pop() {
        for a in 0..na {
            for &(t, _) in &succ[s * na + a] {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    seen
}

/// Latent candidate in the `c`-neighborhood of the baseline: the exact
/// constrained improvement against random action values.
pub fn random_candidate<R: Rng + ?Sized>(spec: &EnvSpec, c: f64, rng: &mut R) -> TabularPolicy {
    let na = spec.baseline_latent.n_actions();
    let probs: Vec<f64> = (0..spec.baseline_latent.n_states())
        .flat_map(|z| {
            let values: Vec<f64> = (0..na).map(|_| rng.random_range(-1.0..1.0)).collect();
            constrained_improve_state(&values, spec.baseline_latent.row(z), c)
        })
        .collect();
    let rows = probs.chunks(na).map(<[f64]>::to_vec).collect();
    normalized_policy(rows).expect("constrained rows are distributions")
}
