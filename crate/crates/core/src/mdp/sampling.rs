use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use super::{stationary_distribution, FiniteMdp, TabularPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionBatch {
    pub tuples: Vec<Transition>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Transition> {
        self.tuples.iter()
    }

    /// Checks indices against `mdp` and that rewards agree with it.
    pub fn validate(&self, mdp: &FiniteMdp) -> Result<()> {
        for (i, t) in self.tuples.iter().enumerate() {
            if t.s >= mdp.n_states() || t.s_next >= mdp.n_states() || t.a >= mdp.n_actions() {
                return Err(Error::invalid("batch", format!("tuple {i} out of range")));
            }
            if (t.r - mdp.r(t.s, t.a)).abs() > 1e-12 {
                return Err(Error::invalid(
                    "batch",
                    format!("tuple {i} reward mismatch"),
                ));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for t in &self.tuples {
            wr.serialize(t)?;
        }
        if self.tuples.is_empty() {
            wr.write_record(["s", "a", "r", "s_next"])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let tuples = rd
            .deserialize()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { tuples })
    }
}

fn row_samplers(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
) -> (Vec<WeightedIndex<f64>>, Vec<WeightedIndex<f64>>) {
    let actions = (0..mdp.n_states())
        .map(|s| WeightedIndex::new(policy.row(s)).expect("policy row is a distribution"))
        .collect();
    let next = (0..mdp.n_states() * mdp.n_actions())
        .map(|i| {
            let (s, a) = (i / mdp.n_actions(), i % mdp.n_actions());
            WeightedIndex::new(mdp.row(s, a)).expect("transition row is a distribution")
        })
        .collect();
    (actions, next)
}

/// I.i.d. transitions with `s ~ xi_pi`, `a ~ pi(.|s)`, `s' ~ P(.|s,a)`.
pub fn sample_transitions(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    count: usize,
    seed: u64,
) -> Result<TransitionBatch> {
    let xi = stationary_distribution(mdp, policy)?;
    if count == 0 {
        return Ok(TransitionBatch::default());
    }
    let states = WeightedIndex::new(&xi.xi).map_err(|e| Error::Numerical(e.to_string()))?;
    let (actions, next) = row_samplers(mdp, policy);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples = (0..count)
        .map(|_| {
            let s = states.sample(&mut rng);
            let a = actions[s].sample(&mut rng);
            let s_next = next[s * mdp.n_actions() + a].sample(&mut rng);
            Transition {
                s,
                a,
                r: mdp.r(s, a),
                s_next,
            }
        })
        .collect();
    Ok(TransitionBatch { tuples })
}

/// Sufficient statistics of an i.i.d. batch: how often each `(s, a, s')`
/// cell occurred. Only nonzero cells are stored, in row-major cell order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub total: u64,
    pub cells: Vec<(usize, usize, usize, u64)>,
}

impl TransitionCounts {
    pub fn from_batch(batch: &TransitionBatch) -> Self {
        let mut map = std::collections::BTreeMap::new();
        for t in batch.iter() {
            *map.entry((t.s, t.a, t.s_next)).or_insert(0u64) += 1;
        }
        Self {
            total: batch.len() as u64,
            cells: map.into_iter().map(|((s, a, n), k)| (s, a, n, k)).collect(),
        }
    }

    /// Fraction of samples whose source state is `s`.
    pub fn state_frequency(&self, s: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let k: u64 = self.cells.iter().filter(|c| c.0 == s).map(|c| c.3).sum();
        k as f64 / self.total as f64
    }
}

/// Draws the cell counts of `count` i.i.d. transitions from `xi_pi` exactly,
/// via sequential conditional binomials. Cost is independent of `count`.
pub fn sample_transition_counts(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    count: u64,
    seed: u64,
) -> Result<TransitionCounts> {
    let xi = stationary_distribution(mdp, policy)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut probs = Vec::new();
    for s in 0..ns {
        for a in 0..na {
            let w = xi.xi[s] * policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (t, &p) in mdp.row(s, a).iter().enumerate() {
                if p > 0.0 {
                    probs.push(((s, a, t), w * p));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = count;
    let mut mass: f64 = probs.iter().map(|x| x.1).sum();
    let mut cells = Vec::new();
    let last = probs.len().saturating_sub(1);
    for (i, &((s, a, t), p)) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let k = if i == last {
            remaining
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(remaining, q)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .sample(&mut rng)
        };
        mass -= p;
        remaining -= k;
        if k > 0 {
            cells.push((s, a, t, k));
        }
    }
    Ok(TransitionCounts {
        total: count,
        cells,
    })
}
