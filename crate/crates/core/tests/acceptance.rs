//! Acceptance suite. Runs every criterion, prints one verdict line each and
//! exits nonzero if any fails.

mod common;

use std::time::Instant;

use common::*;
use rand::Rng;
use rayon::prelude::*;
use spi_lab::envs::{
    block_greedy_update, build_fig1, build_fig2, fig2_states, random_candidate, random_episodic,
    Fig1Params, Fig2Params,
};
use spi_lab::guarantees::*;
use spi_lab::latent::{compose, Encoder, LatentMdp, Metric};
use spi_lab::losses::{crude_transition_bound, exact_losses, wasserstein};
use spi_lab::mdp::{evaluate_policy, greedy_policy, stationary_distribution, value_iteration};
use spi_lab::neighborhood::{in_neighborhood, mirror_step};
use spi_lab::surrogate::{
    clipped_gradient, clipped_objective, imagined_returns, ppo_drift, ClippedSample,
    SoftmaxLatentPolicy,
};
use spi_lab::transport::transport_cost;
use spi_lab::{StationaryDist, TabularPolicy};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const SUITE_SEED: u64 = 42;
const SUITE_SIZE: usize = 300;

fn mirror_suite() -> Verdict {
    let c = 1.3;
    let iters: Vec<usize> = (0..SUITE_SIZE)
        .into_par_iter()
        .map(|i| -> Result<usize, String> {
            let spec = random_episodic(&suite_params(SUITE_SEED, i)).map_err(|e| e.to_string())?;
            let mdp = &spec.mdp;
            let v_star = optimal_values(mdp, 1e-12);
            let mut pi = TabularPolicy::uniform(mdp.n_states(), mdp.n_actions());
            let mut v = evaluate_policy(mdp, &pi, false).unwrap().v;
            for n in 0..=2000 {
                if max_abs_diff(&v, &v_star) <= 1e-6 {
                    return Ok(n);
                }
                let xi =
                    stationary_distribution(mdp, &pi).map_err(|e| format!("instance {i}: {e}"))?;
                let next =
                    mirror_step(mdp, &pi, c, &xi).map_err(|e| format!("instance {i}: {e}"))?;
                ensure(in_neighborhood(&pi, &next, c).unwrap(), || {
                    format!("instance {i}: step left N^c")
                })?;
                let v_next = evaluate_policy(mdp, &next, false).unwrap().v;
                let drop = v
                    .iter()
                    .zip(&v_next)
                    .map(|(a, b)| a - b)
                    .fold(f64::NEG_INFINITY, f64::max);
                ensure(drop <= 1e-10, || {
                    format!("instance {i}, iteration {n}: value dropped by {drop:e}")
                })?;
                pi = next;
                v = v_next;
            }
            Err(format!(
                "instance {i}: no convergence within 2000 iterations"
            ))
        })
        .collect::<Result<_, _>>()?;
    let max = iters.iter().max().copied().unwrap_or(0);
    let mean = iters.iter().sum::<usize>() as f64 / iters.len() as f64;
    Ok(format!(
        "{SUITE_SIZE} instances, iterations to 1e-6: mean {mean:.1}, max {max}"
    ))
}

fn bound_suite() -> Verdict {
    let slacks: Vec<[f64; 3]> = (0..SUITE_SIZE)
        .into_par_iter()
        .map(|i| -> Result<[f64; 3], String> {
            let spec = random_episodic(&suite_params(SUITE_SEED, i)).map_err(|e| e.to_string())?;
            let mut r = rng(1000 + i as u64);
            let g = spec.mdp.discount();
            let c = 1.0 + r.random_range(0.02..0.98) * (1.0 / g - 1.0);
            let cand = random_candidate(&spec, c, &mut r);
            let (m, e, l) = (&spec.mdp, &spec.encoder, &spec.latent);
            let reports = [
                verify_avd(m, e, l, &spec.baseline, &cand),
                verify_value_bound(m, e, l, &spec.baseline, &cand),
                verify_spi(m, e, l, &spec.baseline_latent, &cand),
            ];
            let mut out = [0.0; 3];
            for (k, rep) in reports.into_iter().enumerate() {
                let rep = rep.map_err(|e| format!("instance {i}: {e}"))?;
                ensure(rep.holds && rep.slack >= -1e-9, || {
                    format!("instance {i}: {} violated {rep:?}", rep.name)
                })?;
                out[k] = rep.slack;
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let min = |k: usize| slacks.iter().map(|s| s[k]).fold(f64::INFINITY, f64::min);
    Ok(format!(
        "{SUITE_SIZE} instances, 0 violations; min slack avd {:.3e}, value {:.3e}, spi {:.3e}",
        min(0),
        min(1),
        min(2)
    ))
}

fn representation_suite() -> Verdict {
    let rows: Vec<(usize, usize)> = (0..SUITE_SIZE)
        .into_par_iter()
        .map(|i| -> Result<(usize, usize), String> {
            let spec = random_episodic(&suite_params(SUITE_SEED, i)).map_err(|e| e.to_string())?;
            let mut r = rng(2000 + i as u64);
            let g = spec.mdp.discount();
            let c = 1.0 + r.random_range(0.02..0.98) * (1.0 / g - 1.0);
            let cand = random_candidate(&spec, c, &mut r);
            let span = 2.0 * spec.mdp.r_max().max(spec.latent.model().r_max()) / (1.0 - g);
            let (mut checked, mut informative) = (0, 0);
            for frac in [0.01, 0.1, 0.5] {
                let rep = verify_representation_quality(
                    &spec.mdp,
                    &spec.encoder,
                    &spec.latent,
                    &spec.baseline,
                    &cand,
                    frac * span,
                    10_000,
                    r.random(),
                )
                .map_err(|e| format!("instance {i}: {e}"))?;
                let exact = rep.component("exact_violation").expect("enumerable");
                let sampled = rep.component("sampled_violation").unwrap();
                let se = rep.component("binomial_se").unwrap();
                let delta = rep.rhs;
                ensure(exact <= delta, || {
                    format!("instance {i}: exact {exact} > delta {delta}")
                })?;
                ensure(sampled <= delta + 3.0 * se, || {
                    format!("instance {i}: sampled {sampled} > {delta} + 3 SE")
                })?;
                checked += 1;
                informative += usize::from(!rep.vacuous);
            }
            Ok((checked, informative))
        })
        .collect::<Result<_, _>>()?;
    let checked: usize = rows.iter().map(|r| r.0).sum();
    let informative: usize = rows.iter().map(|r| r.1).sum();
    let spec = build_fig2(&Fig2Params::default()).map_err(|e| e.to_string())?;
    let a2 = TabularPolicy::deterministic(2, &[1; 4]).unwrap();
    let ground = compose(&a2, &spec.encoder).unwrap();
    let rep = verify_representation_quality(
        &spec.mdp,
        &spec.encoder,
        &spec.latent,
        &ground,
        &a2,
        0.05,
        10_000,
        9,
    )
    .map_err(|e| e.to_string())?;
    ensure(rep.holds, || format!("fig2: {rep:?}"))?;
    Ok(format!(
        "{checked} checks, {informative} with delta < 1, 0 violations; fig2 exact {:.3e} <= delta {:.3e}",
        rep.component("exact_violation").unwrap(),
        rep.rhs
    ))
}

/// Independent statement of the two sample-size formulas.
fn t_case1(rs: f64, d: f64, e: f64, l: f64, k: f64, g: f64, kv: f64) -> u64 {
    let num = l * k * (1.0 / g + kv);
    (-(rs * (d / 2.0).ln()) * num.powi(2) / e.powi(2)).ceil() as u64
}

#[allow(clippy::too_many_arguments)]
fn t_case2(rs: f64, d: f64, e: f64, k: f64, g: f64, kv: f64, lr: f64, lp: f64, xi: f64) -> u64 {
    let bracket = (k / xi) * (lr / g + kv * lp) + e + k * (1.0 / g + kv);
    let a = 1.0 / xi.powi(2);
    let b = (bracket / (e * xi)).powi(2);
    (-(rs * (d / 3.0).ln()) / 2.0 * if a > b { a } else { b }).ceil() as u64
}

fn pac_suite() -> Verdict {
    let mut r = rng(31);
    for _ in 0..2000 {
        let (rs, d, e) = (
            r.random_range(1.0..16.0),
            r.random_range(0.01..0.5),
            r.random_range(0.01..0.5),
        );
        let (k, g, kv) = (
            r.random_range(1.0..50.0),
            r.random_range(0.5..0.99),
            r.random_range(0.0..40.0),
        );
        let l = r.random_range(1.5..30.0);
        let (lr, lp, xi) = (
            r.random_range(0.0..1.0),
            r.random_range(0.0..1.0),
            r.random_range(0.01..0.9),
        );
        let got1 = required_t_case1(rs, d, e, l, k, g, kv).map_err(|e| e.to_string())?;
        ensure(got1 == t_case1(rs, d, e, l, k, g, kv), || {
            "case 1 sample size disagrees".into()
        })?;
        let got2 = required_t_case2(rs, d, e, k, g, kv, lr, lp, xi).map_err(|e| e.to_string())?;
        ensure(got2 == t_case2(rs, d, e, k, g, kv, lr, lp, xi), || {
            "case 2 sample size disagrees".into()
        })?;
    }
    let instances = 8;
    let results: Vec<(f64, f64)> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64), String> {
            let spec =
                random_episodic(&suite_params(SUITE_SEED + 1, i)).map_err(|e| e.to_string())?;
            let mut r = rng(3000 + i as u64);
            let g = spec.mdp.discount();
            let cand = random_candidate(&spec, 1.0 + 0.5 * (1.0 / g - 1.0), &mut r);
            let (m, e, l) = (&spec.mdp, &spec.encoder, &spec.latent);
            let ael = spi_lab::mdp::average_episode_length(m, &spec.baseline).unwrap();
            let mut cov = [0.0; 2];
            for (k, bound) in [Some(1.5 * ael), None].into_iter().enumerate() {
                let cfg = PacConfig {
                    epsilon: 0.05,
                    delta: 0.1,
                    ael_upper_bound: bound,
                    seed: r.random(),
                    trials: 200,
                };
                let rep = pac_verify(m, e, l, &spec.baseline_latent, &cand, &cfg)
                    .map_err(|e| format!("instance {i}: {e}"))?;
                let coverage = rep.component("coverage").unwrap();
                let se = (0.1f64 * 0.9 / 200.0).sqrt();
                ensure(rep.holds && coverage >= 0.9 - 3.0 * se, || {
                    format!("instance {i}: {rep:?}")
                })?;
                cov[k] = coverage;
            }
            Ok((cov[0], cov[1]))
        })
        .collect::<Result<_, _>>()?;
    let min1 = results.iter().map(|r| r.0).fold(1.0, f64::min);
    let min2 = results.iter().map(|r| r.1).fold(1.0, f64::min);
    Ok(format!(
        "2000 sample-size cross-checks exact; {instances} instances x 200 trials, min coverage case1 {min1:.3}, case2 {min2:.3}"
    ))
}

fn loss_suite() -> Verdict {
    let mut r = rng(55);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let k = r.random_range(2..=8);
        let metric = random_metric(&mut r, k);
        let (mu, nu) = (sparse_dist(&mut r, k), sparse_dist(&mut r, k));
        let got = wasserstein(&mu, &nu, &metric).map_err(|e| e.to_string())?;
        let want = wasserstein_oracle(&mu, &nu, &metric);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || {
            format!("pair {i}: {got} vs LP {want}")
        })?;
        let disc = Metric::discrete(k);
        let half_l1 = 0.5 * mu.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum::<f64>();
        ensure(wasserstein(&mu, &nu, &disc).unwrap() == half_l1, || {
            format!("pair {i}: discrete metric")
        })?;
        let lp = transport_cost(&mu, &nu, disc.as_slice()).unwrap();
        ensure((lp - half_l1).abs() <= 1e-12, || {
            format!("pair {i}: simplex under the discrete metric")
        })?;
    }
    let mut strict = 0;
    for i in 0..200 {
        let n = r.random_range(2..=8);
        let na = r.random_range(1..=3);
        let mdp = random_mdp(&mut r, n, na, 0.9);
        let k = r.random_range(1..=n);
        let mut mapping: Vec<usize> = (0..n)
            .map(|s| if s < k { s } else { r.random_range(0..k) })
            .collect();
        mapping.rotate_left(r.random_range(0..n));
        let enc = Encoder::new(mapping, k).unwrap();
        let model = random_mdp(&mut r, k, na, 0.9);
        let latent = LatentMdp::new(model, random_metric(&mut r, k)).unwrap();
        let w = StationaryDist::new(random_dist(&mut r, n)).unwrap();
        let pi = random_policy(&mut r, n, na);
        let l_p = exact_losses(&mdp, &enc, &latent, &w, &pi).unwrap().l_p;
        let crude = crude_transition_bound(&mdp, &enc, &latent, &w, &pi).unwrap();
        ensure(crude >= l_p - 1e-12, || {
            format!("triple {i}: crude {crude} < L_P {l_p}")
        })?;
        strict += usize::from(crude > l_p + 1e-9);
    }
    ensure(strict > 0, || "crude bound never strict".into())?;
    Ok(format!("1000 pairs, max |W - LP| {worst:.2e}; discrete = half L1 exactly; crude >= L_P on 200 triples ({strict} strict)"))
}

fn surrogate_suite() -> Verdict {
    let mut r = rng(66);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 50 {
        let (k, na) = (r.random_range(1..=4), r.random_range(2..=4));
        let eps = r.random_range(0.05..0.3);
        let old = SoftmaxLatentPolicy::new(
            k,
            na,
            (0..k * na).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let logits: Vec<f64> = old
            .logits
            .iter()
            .map(|x| x + r.random_range(-0.4..0.4))
            .collect();
        let policy = SoftmaxLatentPolicy::new(k, na, logits).unwrap();
        let samples: Vec<ClippedSample> = (0..r.random_range(5..40))
            .map(|_| {
                let z = r.random_range(0..k);
                let a = r.random_range(0..na);
                ClippedSample {
                    latent: z,
                    action: a,
                    utility: r.random_range(-2.0..2.0),
                    old_prob: old.probs_row(z)[a],
                }
            })
            .collect();
        // stay away from the clipping kinks, where the objective is not differentiable
        let near_kink = samples.iter().any(|t| {
            let ratio = policy.probs_row(t.latent)[t.action] / t.old_prob;
            (ratio - 1.0 - eps).abs() < 1e-4 || (ratio - 1.0 + eps).abs() < 1e-4
        });
        if near_kink {
            continue;
        }
        let grad = clipped_gradient(&policy, &samples, eps).map_err(|e| e.to_string())?;
        let h = 1e-6;
        let fd: Vec<f64> = (0..policy.logits.len())
            .map(|j| {
                let mut up = policy.clone();
                up.logits[j] += h;
                let mut dn = policy.clone();
                dn.logits[j] -= h;
                (clipped_objective(&up, &samples, eps) - clipped_objective(&dn, &samples, eps))
                    / (2.0 * h)
            })
            .collect();
        let scale = grad.iter().chain(&fd).fold(0.0f64, |m, x| m.max(x.abs()));
        let err = if scale == 0.0 {
            0.0
        } else {
            max_abs_diff(&grad, &fd) / scale
        };
        worst = worst.max(err);
        ensure(err < 1e-5, || {
            format!("gradient instance {done}: relative error {err:e}")
        })?;
        done += 1;
    }
    for i in 0..1000 {
        let (n, na) = (r.random_range(1..=5), r.random_range(1..=4));
        let eps = r.random_range(0.05..0.5);
        let base = random_policy(&mut r, n, na);
        let values: Vec<f64> = (0..n * na).map(|_| r.random_range(-3.0..3.0)).collect();
        let wild = random_policy(&mut r, n, na);
        // candidate with every ratio inside [1 - eps, 1 + eps]
        let mut inband = Vec::new();
        for s in 0..n {
            let row = spi_lab::neighborhood::constrained_improve_state(
                &(0..na).map(|_| r.random::<f64>()).collect::<Vec<_>>(),
                base.row(s),
                1.0 + 0.999 * eps,
            );
            inband.extend(row);
        }
        let inband = TabularPolicy::new(n, na, inband).unwrap();
        for s in 0..n {
            let d0 = ppo_drift(&base, &inband, &values, s, eps).unwrap();
            ensure(d0 == 0.0, || {
                format!("drift instance {i}: {d0} inside the band")
            })?;
            let d = ppo_drift(&base, &wild, &values, s, eps).unwrap();
            ensure(d >= 0.0, || {
                format!("drift instance {i}: negative drift {d}")
            })?;
        }
    }
    Ok(format!("50 gradient checks, max relative error {worst:.2e}; drift 0 in band and >= 0 on 1000 instances"))
}

fn counterexamples() -> Verdict {
    // out-of-trajectory
    let p1 = Fig1Params::default();
    let spec = build_fig1(&p1).map_err(|e| e.to_string())?;
    let planned =
        greedy_policy(&value_iteration(spec.latent.model(), false, 1e-12, 100_000).unwrap());
    ensure(planned.prob(0, 1) == 1.0, || {
        "latent plan does not pick a2 at the first region".into()
    })?;
    let grounded = compose(&planned, &spec.encoder).unwrap();
    let s_i = spec.mdp.initial_state();
    let j_plan = evaluate_policy(&spec.mdp, &grounded, false).unwrap().v[s_i];
    let j_base = evaluate_policy(&spec.mdp, &spec.baseline, false).unwrap().v[s_i];
    ensure(j_plan < j_base, || {
        format!("fig1: planned return {j_plan} not below baseline {j_base}")
    })?;
    let xi = stationary_distribution(&spec.mdp, &spec.baseline).unwrap();
    let losses = exact_losses(&spec.mdp, &spec.encoder, &spec.latent, &xi, &spec.baseline).unwrap();
    let r_max = spec.mdp.r_max().max(spec.latent.model().r_max());
    ensure(losses.l_r < 0.05 * r_max, || {
        format!("fig1: L_R = {} not negligible", losses.l_r)
    })?;
    let ael = 1.0 / xi.xi[spec.mdp.reset_state().unwrap()];
    let err = p1.corrupt_reward - p1.s3_reward;
    let s3_part: f64 = (0..spec.mdp.n_states())
        .filter(|&s| spec.encoder.map(s) == 3)
        .map(|s| {
            xi.xi[s]
                * (0..3)
                    .map(|a| {
                        spec.baseline.prob(s, a) * (spec.mdp.r(s, a) - spec.latent.r(3, a)).abs()
                    })
                    .sum::<f64>()
        })
        .sum();
    ensure(s3_part < p1.epsilon * err * ael, || {
        format!("fig1: S3 share {s3_part}")
    })?;

    // confounding
    let p2 = Fig2Params::default();
    let merged = build_fig2(&p2).map_err(|e| e.to_string())?;
    let split = build_fig2(&Fig2Params {
        split: true,
        ..p2.clone()
    })
    .map_err(|e| e.to_string())?;
    let value_s1 = |spec: &spi_lab::envs::EnvSpec, latent: &TabularPolicy| {
        let g = compose(latent, &spec.encoder).unwrap();
        evaluate_policy(&spec.mdp, &g, false).unwrap().v[fig2_states::S1]
    };
    let base_merged = value_s1(&merged, &merged.baseline_latent);
    let base_split = value_s1(&split, &split.baseline_latent);
    let up_merged = value_s1(&merged, &block_greedy_update(&merged).unwrap());
    let up_split = value_s1(&split, &block_greedy_update(&split).unwrap());
    let g = p2.discount;
    let analytic = -2.0 * p2.epsilon * g / (1.0 - g.powi(4));
    ensure(up_merged < 0.0 && up_merged < base_merged, || {
        format!("fig2 merged: {up_merged} vs {base_merged}")
    })?;
    ensure((up_merged - analytic).abs() < 1e-12, || {
        format!("fig2 merged: {up_merged} vs analytic {analytic}")
    })?;
    ensure(up_split > base_split, || {
        format!("fig2 split: {up_split} vs {base_split}")
    })?;
    Ok(format!(
        "fig1 planned {j_plan:.4} < baseline {j_base:.4} with L_R {:.2e}; fig2 merged update {up_merged:.4} < 0, split update {up_split:.4} > {base_split:.4}",
        losses.l_r
    ))
}

fn imagination_suite() -> Verdict {
    let mut r = rng(88);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let (k, na) = (r.random_range(2..=8), r.random_range(1..=4));
        let g = 0.9;
        let model = random_mdp(&mut r, k, na, g);
        let latent = LatentMdp::new(model, Metric::discrete(k)).unwrap();
        let pi = random_policy(&mut r, k, na);
        let starts = random_dist(&mut r, k);
        let r_max = latent.model().r_max().max(1e-12);
        let horizon = ((1e-6 * (1.0 - g) / r_max).ln() / g.ln()).ceil() as usize;
        let exact: f64 = evaluate_policy(latent.model(), &pi, false)
            .unwrap()
            .v
            .iter()
            .zip(&starts)
            .map(|(v, p)| v * p)
            .sum();
        let est = imagined_returns(&latent, &pi, &starts, horizon, 20_000, r.random())
            .map_err(|e| e.to_string())?;
        let z = (est.mean - exact).abs() / est.std_err;
        worst = worst.max(z);
        ensure(z <= 3.0, || {
            format!("model {i}: {} vs exact {exact} ({z:.2} SE)", est.mean)
        })?;
    }
    Ok(format!("20 latent models, worst deviation {worst:.2} SE"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("mirror-learning monotonicity and convergence", mirror_suite),
        (
            "value-difference, return and improvement bounds",
            bound_suite,
        ),
        ("representation-quality bound", representation_suite),
        ("PAC coverage and sample sizes", pac_suite),
        ("loss machinery", loss_suite),
        ("surrogate machinery", surrogate_suite),
        ("counterexample reproduction", counterexamples),
        ("imagined returns", imagination_suite),
    ];
    let threads = std::env::var("SPI_LAB_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .ok();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
