use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_distribution, FiniteMdp, TabularPolicy};
use crate::error::{Error, Result};

/// A probability vector over ground states (stationary measure, occupancy,
/// or any other weighting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub xi: Vec<f64>,
}

impl StationaryDist {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        check_distribution("distribution", &xi)?;
        Ok(Self { xi })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            xi: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.xi
    }

    pub fn first_zero(&self) -> Option<usize> {
        self.xi.iter().position(|&x| x <= 0.0)
    }
}

/// State-to-state transition matrix (row-major) of the chain induced by a policy.
pub fn induced_chain(mdp: &FiniteMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states();
    let mut chain = vec![0.0; n * n];
    for s in 0..n {
        let out = &mut chain[s * n..(s + 1) * n];
        for a in 0..mdp.n_actions() {
            let pi = policy.prob(s, a);
            if pi == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(mdp.row(s, a)) {
                *o += pi * p;
            }
        }
    }
    Ok(chain)
}

/// Induced chain where every step restarts at the initial state with
/// probability `1 - gamma`.
pub fn restart_augmented_chain(mdp: &FiniteMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    let g = mdp.discount();
    let mut chain = induced_chain(mdp, policy)?;
    for s in 0..n {
        for x in &mut chain[s * n..(s + 1) * n] {
            *x *= g;
        }
        chain[s * n + mdp.initial_state()] += 1.0 - g;
    }
    Ok(chain)
}

/// Closed communicating classes of the support graph of a row-major chain.
fn closed_classes(chain: &[f64], n: usize) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * 2);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for s in 0..n {
        for t in 0..n {
            if chain[s * n + t] > 0.0 {
                g.add_edge(nodes[s], nodes[t], ());
            }
        }
    }
    let mut class_of = vec![0usize; n];
    let sccs = tarjan_scc(&g);
    for (c, comp) in sccs.iter().enumerate() {
        for v in comp {
            class_of[v.index()] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, comp)| {
            comp.iter().all(|v| {
                let s = v.index();
                (0..n).all(|t| chain[s * n + t] == 0.0 || class_of[t] == *c)
            })
        })
        .map(|(_, comp)| {
            let mut states: Vec<usize> = comp.iter().map(|v| v.index()).collect();
            states.sort_unstable();
            states
        })
        .collect();
    closed.sort();
    closed
}

/// Unique stationary distribution of a row-stochastic chain.
///
/// Fails with the list of closed classes when there is more than one.
/// Transient states get mass zero; periodic chains are fine.
pub fn stationary_of_chain(chain: &[f64], n: usize) -> Result<Vec<f64>> {
    if chain.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "chain has {} entries for {n} states",
            chain.len()
        )));
    }
    let classes = closed_classes(chain, n);
    if classes.len() != 1 {
        return Err(Error::NonUniqueStationary { classes });
    }
    let class = &classes[0];
    let sol = gth(chain, n, class);
    let mut xi = vec![0.0; n];
    for (i, &s) in class.iter().enumerate() {
        xi[s] = sol[i];
    }
    Ok(xi)
}

/// Grassmann-Taksar-Heyman state reduction on an irreducible class. Only
/// sums of nonnegative products occur, so tiny masses keep full relative
/// accuracy instead of cancelling to zero.
fn gth(chain: &[f64], n: usize, class: &[usize]) -> Vec<f64> {
    let k = class.len();
    let mut a: Vec<f64> = class
        .iter()
        .flat_map(|&s| class.iter().map(move |&t| chain[s * n + t]))
        .collect();
    for m in (1..k).rev() {
        let out: f64 = a[m * k..m * k + m].iter().sum();
        for i in 0..m {
            a[i * k + m] /= out;
        }
        for i in 0..m {
            let w = a[i * k + m];
            if w == 0.0 {
                continue;
            }
            for j in 0..m {
                a[i * k + j] += w * a[m * k + j];
            }
        }
    }
    let mut x = vec![0.0; k];
    x[0] = 1.0;
    for m in 1..k {
        x[m] = (0..m).map(|i| x[i] * a[i * k + m]).sum();
    }
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    x
}

/// Stationary distribution of the chain induced by `policy`.
pub fn stationary_distribution(mdp: &FiniteMdp, policy: &TabularPolicy) -> Result<StationaryDist> {
    let chain = induced_chain(mdp, policy)?;
    Ok(StationaryDist {
        xi: stationary_of_chain(&chain, mdp.n_states())?,
    })
}

/// Normalized discounted occupancy `(1 - gamma) sum_t gamma^t P(s_t = s)` from
/// the initial state.
pub fn discounted_occupancy(mdp: &FiniteMdp, policy: &TabularPolicy) -> Result<StationaryDist> {
    let chain = restart_augmented_chain(mdp, policy)?;
    Ok(StationaryDist {
        xi: stationary_of_chain(&chain, mdp.n_states())?,
    })
}

/// Average episode length `1 / xi(reset)` under `policy`.
pub fn average_episode_length(mdp: &FiniteMdp, policy: &TabularPolicy) -> Result<f64> {
    let reset = mdp
        .reset_state()
        .ok_or_else(|| Error::invalid("episode length", "mdp has no reset state"))?;
    let xi = stationary_distribution(mdp, policy)?;
    if xi.xi[reset] <= 0.0 {
        return Err(Error::ResetNotRecurrent(reset));
    }
    Ok(1.0 / xi.xi[reset])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLengthEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub episodes: usize,
}

/// Monte Carlo episode length: simulate from the initial state until the
/// reset state is hit, counting the reset step itself.
pub fn episode_length_monte_carlo(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    episodes: usize,
    max_steps: usize,
    seed: u64,
) -> Result<EpisodeLengthEstimate> {
    let reset = mdp
        .reset_state()
        .ok_or_else(|| Error::invalid("episode length", "mdp has no reset state"))?;
    if episodes == 0 {
        return Err(Error::EmptyBatch);
    }
    let chain = induced_chain(mdp, policy)?;
    let n = mdp.n_states();
    let rows: Vec<WeightedIndex<f64>> = (0..n)
        .map(|s| WeightedIndex::new(&chain[s * n..(s + 1) * n]).expect("stochastic row"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..episodes {
        let mut s = mdp.initial_state();
        let mut len = 1usize;
        while s != reset {
            if len > max_steps {
                return Err(Error::ResetNotRecurrent(reset));
            }
            s = rows[s].sample(&mut rng);
            len += 1;
        }
        let l = len as f64;
        sum += l;
        sum_sq += l * l;
    }
    let m = episodes as f64;
    let mean = sum / m;
    let var = if episodes > 1 {
        ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(EpisodeLengthEstimate {
        mean,
        std_err: (var / m).sqrt(),
        episodes,
    })
}
