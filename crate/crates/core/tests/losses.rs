mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use spi_lab::envs::{build_fig1, build_fig2, Fig1Params, Fig2Params};
use spi_lab::latent::{fit_latent_model, Encoder, LatentMdp, Metric};
use spi_lab::losses::*;
use spi_lab::mdp::{sample_transitions, stationary_distribution, TransitionCounts};
use spi_lab::{Error, FiniteMdp, StationaryDist, TabularPolicy};

#[test]
fn wasserstein_examples() {
    let d = Metric::discrete(3);
    let mu = [0.5, 0.5, 0.0];
    assert_eq!(wasserstein(&mu, &mu, &d).unwrap(), 0.0);
    assert_eq!(wasserstein(&mu, &[0.0, 0.5, 0.5], &d).unwrap(), 0.5);
    assert!((wasserstein_oracle(&mu, &[0.0, 0.5, 0.5], &d) - 0.5).abs() < 1e-12);
    let mut r = rng(1);
    let m = random_metric(&mut r, 5);
    for x in 0..5 {
        for y in 0..5 {
            let (mut p, mut q) = (vec![0.0; 5], vec![0.0; 5]);
            p[x] = 1.0;
            q[y] = 1.0;
            assert_eq!(wasserstein(&p, &q, &m).unwrap(), m.d(x, y));
        }
    }
    assert!(matches!(
        wasserstein(&mu, &[1.0, 0.0], &d),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn wasserstein_matches_the_lp_oracle() {
    let mut r = rng(2);
    for _ in 0..200 {
        let k = r.random_range(2..9);
        let m = random_metric(&mut r, k);
        let (p, q) = (sparse_dist(&mut r, k), sparse_dist(&mut r, k));
        let w = wasserstein(&p, &q, &m).unwrap();
        let o = wasserstein_oracle(&p, &q, &m);
        assert!((w - o).abs() <= 1e-10 * (1.0 + o), "{w} vs {o}");
    }
}

fn exact_instance(seed: u64) -> (FiniteMdp, Encoder, TabularPolicy, StationaryDist) {
    let mut r = rng(seed);
    let mdp = random_mdp(&mut r, 6, 3, 0.9);
    let pi = random_policy(&mut r, 6, 3);
    let xi = stationary_distribution(&mdp, &pi).unwrap();
    (mdp, Encoder::identity(6), pi, xi)
}

#[test]
fn exact_abstraction_and_reward_shift() {
    let (mdp, enc, pi, xi) = exact_instance(3);
    let latent = LatentMdp::new(mdp.clone(), Metric::discrete(6)).unwrap();
    let rep = exact_losses(&mdp, &enc, &latent, &xi, &pi).unwrap();
    assert_eq!((rep.l_r, rep.l_p), (0.0, 0.0));
    assert_eq!(rep.source, LossSource::ExactStationary);
    let shifted = latent
        .with_model(mdp.map_rewards(|_, _, x| x - 0.37).unwrap())
        .unwrap();
    let rep = exact_losses(&mdp, &enc, &shifted, &xi, &pi).unwrap();
    assert!((rep.l_r - 0.37).abs() < 1e-12);
    assert_eq!(rep.l_p, 0.0);
}

#[test]
fn fig1_losses_are_negligible() {
    let spec = build_fig1(&Fig1Params::default()).unwrap();
    let xi = stationary_distribution(&spec.mdp, &spec.baseline).unwrap();
    let rep = exact_losses(&spec.mdp, &spec.encoder, &spec.latent, &xi, &spec.baseline).unwrap();
    let r_max = spec.mdp.r_max().max(spec.latent.model().r_max());
    assert!(rep.l_r < 0.05 * r_max, "{rep:?}");
    assert!(rep.l_p < 1e-12, "{rep:?}");
    assert!(rep.l_r <= 2.0 * r_max && rep.l_p <= spec.latent.metric().max_entry());
}

#[test]
fn empirical_losses_examples() {
    let spec = build_fig2(&Fig2Params::default()).unwrap();
    let empty = spi_lab::TransitionBatch::default();
    assert!(matches!(
        empirical_losses(&empty, &spec.encoder, &spec.latent),
        Err(Error::EmptyBatch)
    ));
    // deterministic model equal to its own abstraction
    let t = vec![
        0., 1., 0., 0., 0., 1., 0., 0., 1., 1., 0., 0., 1., 0., 0., 0., 1., 0.,
    ];
    let det = FiniteMdp::new(3, 2, t, vec![0.5, -1.0, 0.0, 2.0, 1.0, 0.3], 0, 0.9, None).unwrap();
    let id = Encoder::identity(3);
    let latent = LatentMdp::new(det.clone(), Metric::discrete(3)).unwrap();
    let batch = sample_transitions(&det, &TabularPolicy::uniform(3, 2), 500, 2).unwrap();
    let rep = empirical_losses(&batch, &id, &latent).unwrap();
    assert_eq!((rep.l_r, rep.l_p), (0.0, 0.0));
    let doubled = Metric::new(3, vec![0., 2., 2., 2., 0., 2., 2., 2., 0.]).unwrap();
    let curved = LatentMdp::new(det, doubled).unwrap();
    assert!(empirical_losses(&batch, &id, &curved).is_err());
}

#[test]
fn fig2_empirical_within_hoeffding() {
    let spec = build_fig2(&Fig2Params::default()).unwrap();
    let xi = stationary_distribution(&spec.mdp, &spec.baseline).unwrap();
    let exact = exact_losses(&spec.mdp, &spec.encoder, &spec.latent, &xi, &spec.baseline).unwrap();
    let t = 100_000;
    let batch = sample_transitions(&spec.mdp, &spec.baseline, t, 17).unwrap();
    let emp = empirical_losses(&batch, &spec.encoder, &spec.latent).unwrap();
    assert_eq!(emp.sample_count, t as u64);
    let r_max = spec.mdp.r_max().max(spec.latent.model().r_max());
    // a variable confined to [0, b] has standard deviation at most b / 2
    let sd = |b: f64| b / (2.0 * (t as f64).sqrt());
    assert!(
        (emp.l_r - exact.l_r).abs() <= 3.0 * sd(2.0 * r_max),
        "{emp:?} vs {exact:?}"
    );
    assert!(
        (emp.l_p - exact.l_p).abs() <= 3.0 * sd(1.0),
        "{emp:?} vs {exact:?}"
    );
    let counts = TransitionCounts::from_batch(&batch);
    let from_counts =
        empirical_losses_from_counts(&counts, &spec.mdp, &spec.encoder, &spec.latent).unwrap();
    assert!((from_counts.l_r - emp.l_r).abs() < 1e-12 && (from_counts.l_p - emp.l_p).abs() < 1e-12);
}

#[test]
fn empirical_error_shrinks_like_root_t() {
    let spec = spi_lab::envs::random_episodic(&suite_params(8, 2)).unwrap();
    let xi = stationary_distribution(&spec.mdp, &spec.baseline).unwrap();
    let exact = exact_losses(&spec.mdp, &spec.encoder, &spec.latent, &xi, &spec.baseline).unwrap();
    // the sampled transition estimator targets the crude bound, which equals
    // L_P only when latent rows are point masses
    let crude = crude_transition_bound(&spec.mdp, &spec.encoder, &spec.latent, &xi, &spec.baseline)
        .unwrap();
    assert!(crude >= exact.l_p);
    let seeds = 24;
    let mut scaled = Vec::new();
    let mut errors = Vec::new();
    for k in 0..4 {
        let t = 4usize.pow(k) * 1000;
        let mean_err: f64 = (0..seeds)
            .map(|seed| {
                let b = sample_transitions(&spec.mdp, &spec.baseline, t, 1000 * k as u64 + seed)
                    .unwrap();
                let e = empirical_losses(&b, &spec.encoder, &spec.latent).unwrap();
                (e.l_r - exact.l_r).abs() + (e.l_p - crude).abs()
            })
            .sum::<f64>()
            / seeds as f64;
        errors.push(mean_err);
        scaled.push(mean_err * (t as f64).sqrt());
    }
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    let (lo, hi) = scaled
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi / lo < 2.0, "error times root T drifts: {scaled:?}");
}

#[test]
fn crude_bound_examples() {
    // deterministic dynamics, exact latent: both vanish
    let t = vec![0., 1., 1., 0.];
    let mdp = FiniteMdp::new(2, 1, t, vec![0.0, 1.0], 0, 0.9, None).unwrap();
    let latent = LatentMdp::new(mdp.clone(), Metric::discrete(2)).unwrap();
    let pi = TabularPolicy::uniform(2, 1);
    let xi = stationary_distribution(&mdp, &pi).unwrap();
    let id = Encoder::identity(2);
    assert_eq!(
        crude_transition_bound(&mdp, &id, &latent, &xi, &pi).unwrap(),
        0.0
    );
    assert_eq!(exact_losses(&mdp, &id, &latent, &xi, &pi).unwrap().l_p, 0.0);
    // latent model points the other way: point masses a distance 1 apart
    let swapped = FiniteMdp::new(2, 1, vec![1., 0., 0., 1.], vec![0.0, 1.0], 0, 0.9, None).unwrap();
    let wrong = LatentMdp::new(swapped, Metric::discrete(2)).unwrap();
    assert_eq!(
        crude_transition_bound(&mdp, &id, &wrong, &xi, &pi).unwrap(),
        1.0
    );
    assert_eq!(exact_losses(&mdp, &id, &wrong, &xi, &pi).unwrap().l_p, 1.0);
}

#[test]
fn crude_bound_dominates_on_random_triples() {
    let mut r = rng(4);
    let mut strict = 0;
    for _ in 0..200 {
        let n = r.random_range(2..9);
        let k = r.random_range(1..=n);
        let mdp = random_mdp(&mut r, n, 2, 0.9);
        let mapping: Vec<usize> = (0..n)
            .map(|s| if s < k { s } else { r.random_range(0..k) })
            .collect();
        let enc = Encoder::new(mapping, k).unwrap();
        let model = random_mdp(&mut r, k, 2, 0.9);
        let latent = LatentMdp::new(model, random_metric(&mut r, k)).unwrap();
        let pi = random_policy(&mut r, n, 2);
        let xi = stationary_distribution(&mdp, &pi).unwrap();
        let crude = crude_transition_bound(&mdp, &enc, &latent, &xi, &pi).unwrap();
        let l_p = exact_losses(&mdp, &enc, &latent, &xi, &pi).unwrap().l_p;
        assert!(crude >= l_p - 1e-12, "{crude} < {l_p}");
        strict += usize::from(crude > l_p + 1e-9);
    }
    assert!(strict > 0);
}

#[test]
fn fitted_model_losses_are_consistent() {
    let spec = spi_lab::envs::random_episodic(&suite_params(9, 7)).unwrap();
    let xi = stationary_distribution(&spec.mdp, &spec.baseline).unwrap();
    let refit = fit_latent_model(&spec.mdp, &spec.encoder, &xi).unwrap();
    assert_eq!(refit, spec.latent);
    let rep = exact_losses(&spec.mdp, &spec.encoder, &spec.latent, &xi, &spec.baseline).unwrap();
    let back: LossReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    assert_eq!(back, rep);
    assert!(rep.to_json().unwrap().contains("exact-stationary"));
}

fn arb_triple() -> impl Strategy<Value = (Metric, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..8, any::<u64>()).prop_map(|(k, seed)| {
        let mut r = rng(seed);
        let m = random_metric(&mut r, k);
        (
            m,
            sparse_dist(&mut r, k),
            sparse_dist(&mut r, k),
            sparse_dist(&mut r, k),
        )
    })
}

proptest! {
    #[test]
    fn wasserstein_is_a_metric((m, p, q, u) in arb_triple()) {
        let pq = wasserstein(&p, &q, &m).unwrap();
        let qp = wasserstein(&q, &p, &m).unwrap();
        let qu = wasserstein(&q, &u, &m).unwrap();
        let pu = wasserstein(&p, &u, &m).unwrap();
        prop_assert!((pq - qp).abs() <= 1e-10);
        prop_assert!(pu <= pq + qu + 1e-10);
        prop_assert_eq!(wasserstein(&p, &p, &m).unwrap(), 0.0);
        let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        if l1 > 1e-9 {
            prop_assert!(pq > 0.0);
        }
    }

    #[test]
    fn discrete_metric_is_half_l1(k in 1usize..10, seed in any::<u64>()) {
        let mut r = rng(seed);
        let (p, q) = (sparse_dist(&mut r, k), sparse_dist(&mut r, k));
        let half: f64 = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        prop_assert_eq!(wasserstein(&p, &q, &Metric::discrete(k)).unwrap(), half);
        prop_assert!((wasserstein_oracle(&p, &q, &Metric::discrete(k)) - half).abs() <= 1e-12);
    }
}
