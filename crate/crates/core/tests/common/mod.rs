#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[allow(unused_imports)]
pub use spi_lab::envs::suite_params;
use spi_lab::latent::Metric;
use spi_lab::{FiniteMdp, TabularPolicy};

/// Dense two-phase tableau simplex with Bland's rule:
/// minimize `c.x` subject to `a x = b`, `x >= 0`. Returns `None` if infeasible.
pub fn lp_min(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let (m, n) = (a.len(), c.len());
    // columns: n originals, m artificials, rhs
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][width - 1] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // phase one: minimize the sum of artificials
    let mut obj = vec![0.0; width];
    obj[n..n + m].fill(1.0);
    run_phase(&mut t, &mut basis, &obj, n + m);
    let infeas: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &j)| j >= n)
        .map(|(i, _)| t[i][width - 1])
        .sum();
    if infeas > 1e-9 {
        return None;
    }
    // drive degenerate artificials out of the basis where possible
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-12) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(c);
    // artificials left in the basis sit on redundant rows at zero
    let allowed = n;
    run_phase(&mut t, &mut basis, &obj, allowed);
    Some(
        basis
            .iter()
            .enumerate()
            .filter(|(_, &j)| j < n)
            .map(|(i, &j)| c[j] * t[i][width - 1])
            .sum(),
    )
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    for x in t[row].iter_mut() {
        *x /= p;
    }
    let pr = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row {
            let f = r[col];
            if f != 0.0 {
                for (x, y) in r.iter_mut().zip(&pr) {
                    *x -= f * y;
                }
            }
        }
    }
    basis[row] = col;
}

fn run_phase(t: &mut [Vec<f64>], basis: &mut [usize], obj: &[f64], allowed: usize) {
    let m = basis.len();
    let width = obj.len();
    for _ in 0..100_000 {
        // reduced costs
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let rc = obj[j] - (0..m).map(|i| obj[basis[i]] * t[i][j]).sum::<f64>();
            rc < -1e-11
        });
        let Some(j) = entering else { return };
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..m {
            if t[i][j] > 1e-12 {
                let ratio = t[i][width - 1] / t[i][j];
                let better = match best {
                    None => true,
                    Some((r, _, bv)) => ratio < r - 1e-14 || (ratio <= r + 1e-14 && basis[i] < bv),
                };
                if better {
                    best = Some((ratio, i, basis[i]));
                }
            }
        }
        let Some((_, row, _)) = best else {
            panic!("unbounded oracle LP")
        };
        pivot(t, basis, row, j);
    }
    panic!("oracle LP did not terminate");
}

/// Transport cost through the generic LP.
pub fn wasserstein_oracle(mu: &[f64], nu: &[f64], metric: &Metric) -> f64 {
    let k = mu.len();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..k {
        let mut row = vec![0.0; k * k];
        for j in 0..k {
            row[i * k + j] = 1.0;
        }
        a.push(row);
        b.push(mu[i]);
    }
    for j in 0..k {
        let mut row = vec![0.0; k * k];
        for i in 0..k {
            row[i * k + j] = 1.0;
        }
        a.push(row);
        b.push(nu[j]);
    }
    lp_min(metric.as_slice(), &a, &b).expect("couplings exist")
}

/// Maximum of `values.p` over the IR box intersected with the simplex, via the LP.
pub fn box_improvement_oracle(values: &[f64], base: &[f64], c: f64) -> f64 {
    let support: Vec<usize> = (0..base.len()).filter(|&a| base[a] > 0.0).collect();
    let k = support.len();
    // variables y_a = p_a - (2-c) b_a and slacks s_a, with y_a + s_a = 2(c-1) b_a
    let mut a = Vec::new();
    let mut b = Vec::new();
    let lo: f64 = support.iter().map(|&i| (2.0 - c) * base[i]).sum();
    let mut row = vec![0.0; 2 * k];
    row[..k].iter_mut().for_each(|x| *x = 1.0);
    a.push(row);
    b.push(1.0 - lo);
    for (t, &i) in support.iter().enumerate() {
        let mut row = vec![0.0; 2 * k];
        row[t] = 1.0;
        row[k + t] = 1.0;
        a.push(row);
        b.push(2.0 * (c - 1.0) * base[i]);
    }
    let mut cost = vec![0.0; 2 * k];
    for (t, &i) in support.iter().enumerate() {
        cost[t] = -values[i];
    }
    let base_obj: f64 = support
        .iter()
        .map(|&i| (2.0 - c) * base[i] * values[i])
        .sum();
    base_obj - lp_min(&cost, &a, &b).expect("box is feasible")
}

/// Policy evaluation by fixed-point iteration to `tol`.
pub fn iterative_values(mdp: &FiniteMdp, policy: &TabularPolicy, tol: f64) -> Vec<f64> {
    let (n, na, g) = (mdp.n_states(), mdp.n_actions(), mdp.discount());
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let ev: f64 = mdp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                        policy.prob(s, a) * (mdp.r(s, a) + g * ev)
                    })
                    .sum()
            })
            .collect();
        let diff = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if diff * g / (1.0 - g) <= tol || diff == 0.0 {
            return v;
        }
    }
}

/// Optimal values by value iteration to `tol`.
pub fn optimal_values(mdp: &FiniteMdp, tol: f64) -> Vec<f64> {
    let (n, na, g) = (mdp.n_states(), mdp.n_actions(), mdp.discount());
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        mdp.r(s, a)
                            + g * mdp
                                .row(s, a)
                                .iter()
                                .zip(&v)
                                .map(|(p, x)| p * x)
                                .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let diff = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if diff * g / (1.0 - g) <= tol || diff == 0.0 {
            return v;
        }
    }
}

/// Stationary distribution by power iteration on the lazy chain `(P + I) / 2`.
pub fn power_stationary(mdp: &FiniteMdp, policy: &TabularPolicy, tol: f64) -> Vec<f64> {
    let n = mdp.n_states();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..10_000_000 {
        let mut y = vec![0.0; n];
        for s in 0..n {
            y[s] += 0.5 * x[s];
            for a in 0..mdp.n_actions() {
                let w = 0.5 * x[s] * policy.prob(s, a);
                for (t, p) in mdp.row(s, a).iter().enumerate() {
                    y[t] += w * p;
                }
            }
        }
        let diff = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum::<f64>();
        x = y;
        if diff < tol {
            break;
        }
    }
    x
}

pub fn random_dist<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|x| x / t).collect()
}

/// Random distribution with a few exact zeros.
pub fn sparse_dist<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let t: f64 = w.iter().sum();
        if t > 0.0 {
            return w.into_iter().map(|x| x / t).collect();
        }
    }
}

/// Random metric as shortest paths of a random complete graph.
pub fn random_metric<R: Rng>(rng: &mut R, k: usize) -> Metric {
    let mut d = vec![0.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let w = rng.random_range(0.2..2.0);
            d[i * k + j] = w;
            d[j * k + i] = w;
        }
    }
    for m in 0..k {
        for i in 0..k {
            for j in 0..k {
                let via = d[i * k + m] + d[m * k + j];
                if via < d[i * k + j] {
                    d[i * k + j] = via;
                }
            }
        }
    }
    Metric::new(k, d).unwrap()
}

/// Dense random MDP (non-episodic) with rewards in [-1, 1].
pub fn random_mdp<R: Rng>(rng: &mut R, n: usize, na: usize, discount: f64) -> FiniteMdp {
    let transition: Vec<f64> = (0..n * na).flat_map(|_| random_dist(rng, n)).collect();
    let reward: Vec<f64> = (0..n * na).map(|_| rng.random_range(-1.0..1.0)).collect();
    FiniteMdp::new(n, na, transition, reward, 0, discount, None).unwrap()
}

pub fn random_policy<R: Rng>(rng: &mut R, n: usize, na: usize) -> TabularPolicy {
    TabularPolicy::new(n, na, (0..n).flat_map(|_| random_dist(rng, na)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
