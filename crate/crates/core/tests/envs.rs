mod common;

use common::*;
use spi_lab::envs::*;
use spi_lab::guarantees::{verify_avd, verify_spi, verify_value_bound};
use spi_lab::latent::{compose, lipschitz_constants};
use spi_lab::mdp::{evaluate_policy, greedy_policy, stationary_distribution, value_iteration};
use spi_lab::neighborhood::in_neighborhood;
use spi_lab::TabularPolicy;

fn ground_return(spec: &EnvSpec, latent_policy: &TabularPolicy) -> f64 {
    let g = compose(latent_policy, &spec.encoder).unwrap();
    evaluate_policy(&spec.mdp, &g, false).unwrap().v[spec.mdp.initial_state()]
}

#[test]
fn fig1_latent_plan_takes_the_hallucinated_branch() {
    let spec = build_fig1(&Fig1Params::default()).unwrap();
    let plan =
        greedy_policy(&value_iteration(spec.latent.model(), false, 1e-12, 1_000_000).unwrap());
    assert_eq!(plan.row(0), &[0.0, 1.0, 0.0]);
    assert!(ground_return(&spec, &plan) < ground_return(&spec, &spec.baseline_latent));
    assert!(spec.baseline_latent.prob(0, 1) <= Fig1Params::default().epsilon);
}

#[test]
fn fig1_region_structure() {
    let p = Fig1Params::default();
    let spec = build_fig1(&p).unwrap();
    let n: usize = p.region_sizes.iter().sum::<usize>() + 1;
    assert_eq!(spec.mdp.n_states(), n);
    assert_eq!(spec.encoder.n_latent(), 6);
    assert_eq!(spec.latent.r(3, 0), p.corrupt_reward);
    let mut bad = p.clone();
    bad.region_sizes[2] = 1;
    assert!(build_fig1(&bad).is_err());
    bad = p.clone();
    bad.region_sizes[0] = 0;
    assert!(build_fig1(&bad).is_err());
}

#[test]
fn fig2_baseline_values_merge() {
    use fig2_states::*;
    let p = Fig2Params::default();
    let spec = build_fig2(&p).unwrap();
    let v = evaluate_policy(&spec.mdp, &spec.baseline, false).unwrap().v;
    let r_max = spec.mdp.r_max();
    assert!((v[S2] - v[S3]).abs() < 10.0 * p.zeta * r_max / (1.0 - p.discount));
    assert_eq!(spec.mdp.p(S1, 0, S2), 1.0 - p.epsilon);
    assert_eq!(spec.mdp.p(S1, 1, S3), p.epsilon);
}

#[test]
fn fig2_always_a2_loses_and_splitting_helps() {
    let p = Fig2Params::default();
    let merged = build_fig2(&p).unwrap();
    let a2 = TabularPolicy::deterministic(2, &[1; 4]).unwrap();
    assert!(ground_return(&merged, &a2) < ground_return(&merged, &merged.baseline_latent));
    let split = build_fig2(&Fig2Params { split: true, ..p }).unwrap();
    let plan =
        greedy_policy(&value_iteration(split.latent.model(), false, 1e-12, 1_000_000).unwrap());
    assert!(ground_return(&split, &plan) > ground_return(&split, &split.baseline_latent));
}

#[test]
fn fig2_parameter_ranges() {
    assert!(build_fig2(&Fig2Params {
        epsilon: 0.3,
        ..Default::default()
    })
    .is_err());
    assert!(build_fig2(&Fig2Params {
        zeta: 0.2,
        ..Default::default()
    })
    .is_err());
    assert!(build_fig2(&Fig2Params {
        zeta: 0.0,
        ..Default::default()
    })
    .is_err());
}

#[test]
fn generation_is_deterministic() {
    for i in 0..10 {
        let p = suite_params(1, i);
        let a = random_episodic(&p).unwrap();
        let b = random_episodic(&p).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
    assert_eq!(
        build_fig1(&Fig1Params::default()).unwrap(),
        build_fig1(&Fig1Params::default()).unwrap()
    );
}

#[test]
fn suite_feeds_the_verifiers() {
    let mut r = rng(42);
    for i in 0..300 {
        let spec = random_episodic(&suite_params(42, i)).unwrap();
        let (m, e, l) = (&spec.mdp, &spec.encoder, &spec.latent);
        assert!(m.n_states() <= MAX_RANDOM_STATES && m.n_actions() <= MAX_RANDOM_ACTIONS);
        assert!(spec.baseline.has_full_support());
        let xi = stationary_distribution(m, &spec.baseline).unwrap();
        assert!(xi.first_zero().is_none(), "instance {i}");
        assert!(m.reward().iter().all(|x| (-1.0..=1.0).contains(x)));
        assert!(lipschitz_constants(l, &spec.baseline_latent)
            .unwrap()
            .k_v
            .is_finite());
        let g = m.discount();
        let cand = random_candidate(&spec, 1.0 + 0.5 * (1.0 / g - 1.0), &mut r);
        assert!(in_neighborhood(&spec.baseline_latent, &cand, 1.0 / g).unwrap());
        verify_avd(m, e, l, &spec.baseline, &cand).unwrap();
        verify_value_bound(m, e, l, &spec.baseline, &cand).unwrap();
        verify_spi(m, e, l, &spec.baseline_latent, &cand).unwrap();
    }
}

#[test]
fn greedy_update_on_fig2() {
    let spec = build_fig2(&Fig2Params::default()).unwrap();
    let up = block_greedy_update(&spec).unwrap();
    assert_eq!(up.row(1), &[0.0, 1.0]);
    let params = EnvSpec::from_json(&spec.to_json().unwrap()).unwrap().params;
    assert_eq!(params["epsilon"], 0.1);
}
