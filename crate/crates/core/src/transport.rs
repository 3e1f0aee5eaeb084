//! Exact balanced transportation problem by the transportation simplex
//! (northwest-corner start, MODI potentials, Bland's anti-cycling rule).

use std::collections::VecDeque;

use crate::error::{Error, Result};

const MAX_PIVOTS: usize = 1_000_000;

/// Minimum of `sum x_ij cost(i, j)` over couplings of `supply` and `demand`.
///
/// Both marginals must be nonnegative with (numerically) equal totals; zero
/// entries are allowed. `cost` is row-major `supply.len() x demand.len()`.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<f64> {
    let plan = transport_plan(supply, demand, cost)?;
    Ok(plan
        .iter()
        .map(|&(i, j, x)| x * cost[i * demand.len() + j])
        .sum())
}

/// Optimal basic plan as `(i, j, mass)` triples.
pub fn transport_plan(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
) -> Result<Vec<(usize, usize, f64)>> {
    let (m0, n0) = (supply.len(), demand.len());
    if cost.len() != m0 * n0 {
        return Err(Error::DimensionMismatch(format!(
            "cost has {} entries for a {m0}x{n0} problem",
            cost.len()
        )));
    }
    let rows: Vec<usize> = (0..m0).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n0).filter(|&j| demand[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Ok(Vec::new());
    }
    let a: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let total_a: f64 = a.iter().sum();
    let total_b: f64 = cols.iter().map(|&j| demand[j]).sum();
    if (total_a - total_b).abs() > 1e-9 * total_a.max(1.0) {
        return Err(Error::invalid(
            "transport problem",
            format!("unbalanced marginals {total_a} vs {total_b}"),
        ));
    }
    let b: Vec<f64> = cols
        .iter()
        .map(|&j| demand[j] * total_a / total_b)
        .collect();
    let c: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| cost[i * n0 + j]))
        .collect();
    let basis = Simplex::new(a, b, c).solve()?;
    Ok(basis
        .into_iter()
        .filter(|&(_, _, x)| x > 0.0)
        .map(|(i, j, x)| (rows[i], cols[j], x))
        .collect())
}

struct Simplex {
    m: usize,
    n: usize,
    c: Vec<f64>,
    /// flow per cell; `None` for nonbasic cells
    x: Vec<Option<f64>>,
}

impl Simplex {
    fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut x = vec![None; m * n];
        let (mut ra, mut rb) = (a, b);
        let (mut i, mut j) = (0, 0);
        // northwest corner: exactly m + n - 1 basic cells forming a spanning tree
        loop {
            let q = ra[i].min(rb[j]).max(0.0);
            x[i * n + j] = Some(q);
            if i == m - 1 && j == n - 1 {
                break;
            }
            if (ra[i] <= rb[j] && i < m - 1) || j == n - 1 {
                rb[j] -= q;
                ra[i] = 0.0;
                i += 1;
            } else {
                ra[i] -= q;
                rb[j] = 0.0;
                j += 1;
            }
        }
        Self { m, n, c, x }
    }

    /// Tree adjacency over nodes `0..m` (rows) and `m..m+n` (columns).
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let (m, n) = (self.m, self.n);
        let mut adj = vec![Vec::new(); m + n];
        for i in 0..m {
            for j in 0..n {
                if self.x[i * n + j].is_some() {
                    adj[i].push((m + j, i * n + j));
                    adj[m + j].push((i, i * n + j));
                }
            }
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<(usize, usize)>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (m, n) = (self.m, self.n);
        let mut pot = vec![f64::NAN; m + n];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for &(w, cell) in &adj[v] {
                if pot[w].is_nan() {
                    // u_i + v_j = c_ij
                    pot[w] = self.c[cell] - pot[v];
                    queue.push_back(w);
                }
            }
        }
        if pot.iter().any(|p| p.is_nan()) {
            return Err(Error::Numerical(
                "transport basis is not a spanning tree".into(),
            ));
        }
        Ok((pot[..m].to_vec(), pot[m..].to_vec()))
    }

    /// Cells on the tree path from node `from` to node `to`, in order.
    fn tree_path(adj: &[Vec<(usize, usize)>], from: usize, to: usize) -> Vec<usize> {
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; adj.len()];
        let mut seen = vec![false; adj.len()];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            if v == to {
                break;
            }
            for &(w, cell) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some((v, cell));
                    queue.push_back(w);
                }
            }
        }
        let mut path = Vec::new();
        let mut v = to;
        while let Some((p, cell)) = parent[v] {
            path.push(cell);
            v = p;
        }
        path.reverse();
        path
    }

    fn solve(mut self) -> Result<Vec<(usize, usize, f64)>> {
        let (m, n) = (self.m, self.n);
        let scale = self.c.iter().fold(1.0_f64, |s, c| s.max(c.abs()));
        let tol = 1e-12 * scale;
        for _ in 0..MAX_PIVOTS {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj)?;
            // Bland: first improving cell in index order
            let entering =
                (0..m * n).find(|&k| self.x[k].is_none() && self.c[k] - u[k / n] - v[k % n] < -tol);
            let Some(enter) = entering else {
                return Ok((0..m * n)
                    .filter_map(|k| self.x[k].map(|x| (k / n, k % n, x)))
                    .collect());
            };
            let (ei, ej) = (enter / n, enter % n);
            // cycle: enter (+), then the path from column ej back to row ei alternates -,+,...
            let path = Self::tree_path(&adj, m + ej, ei);
            let minus: Vec<usize> = path.iter().step_by(2).copied().collect();
            let theta = minus
                .iter()
                .map(|&k| self.x[k].expect("basic"))
                .fold(f64::INFINITY, f64::min);
            let leave = *minus
                .iter()
                .filter(|&&k| self.x[k].expect("basic") == theta)
                .min()
                .expect("cycle has a decreasing cell");
            for (t, &k) in path.iter().enumerate() {
                let x = self.x[k].as_mut().expect("basic");
                if t % 2 == 0 {
                    *x -= theta;
                } else {
                    *x += theta;
                }
            }
            self.x[leave] = None;
            self.x[enter] = Some(theta);
            for x in self.x.iter_mut().flatten() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
        }
        Err(Error::Numerical(
            "transportation simplex exceeded its pivot budget".into(),
        ))
    }
}
