//! Checkable versions of the value-difference, return, improvement,
//! representation and PAC bounds. Every verifier computes both sides
//! exactly (or by the documented sampling scheme) and reports the verdict.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::digest_f64s;
use crate::error::{Error, Result};
use crate::latent::{compose, lipschitz_constants, Encoder, LatentMdp};
use crate::losses::{empirical_losses_from_counts, exact_losses, LossReport};
use crate::mdp::{
    evaluate_policy, sample_transition_counts, stationary_distribution, FiniteMdp, StationaryDist,
    TabularPolicy,
};
use crate::neighborhood::{extremal_ir, in_neighborhood_unchecked, IrSummary};

/// Absolute tolerance of every inequality verdict.
pub const VERDICT_TOL: f64 = 1e-9;

/// Largest state count for which pair probabilities are enumerated.
pub const ENUMERATION_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
    pub vacuous: bool,
    pub inputs_digest: String,
    pub components: BTreeMap<String, f64>,
}

impl BoundReport {
    fn new(
        name: &str,
        lhs: f64,
        rhs: f64,
        vacuous: bool,
        digest: String,
        components: BTreeMap<String, f64>,
    ) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs <= rhs + VERDICT_TOL,
            slack: rhs - lhs,
            vacuous,
            inputs_digest: digest,
            components,
        }
    }

    pub fn component(&self, key: &str) -> Option<f64> {
        self.components.get(key).copied()
    }
}

fn inputs_digest(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    policies: &[&TabularPolicy],
) -> String {
    let mut parts: Vec<f64> = vec![mdp.discount(), mdp.initial_state() as f64];
    parts.extend_from_slice(mdp.transition());
    parts.extend_from_slice(mdp.reward());
    parts.extend(encoder.mapping().iter().map(|&z| z as f64));
    parts.extend_from_slice(latent.model().transition());
    parts.extend_from_slice(latent.model().reward());
    parts.extend_from_slice(latent.metric().as_slice());
    for p in policies {
        parts.extend_from_slice(p.probs());
    }
    digest_f64s(&parts)[..16].to_string()
}

/// Everything the bounds share for one (baseline, candidate) pair.
struct Setup {
    gamma: f64,
    ir: IrSummary,
    xi_b: StationaryDist,
    losses: LossReport,
    k_v: f64,
    k_p: f64,
    ground_v: Vec<f64>,
    latent_v: Vec<f64>,
    r_max: f64,
}

impl Setup {
    fn new(
        mdp: &FiniteMdp,
        encoder: &Encoder,
        latent: &LatentMdp,
        baseline: &TabularPolicy,
        latent_policy: &TabularPolicy,
        check: &'static str,
    ) -> Result<Self> {
        latent.check_pair(mdp, encoder)?;
        if (latent.discount() - mdp.discount()).abs() > 0.0 {
            return Err(Error::precondition(
                check,
                "latent and ground discounts differ",
            ));
        }
        let gamma = mdp.discount();
        let candidate = compose(latent_policy, encoder)?;
        let ir = extremal_ir(baseline, &candidate)?;
        if !in_neighborhood_unchecked(&ir, 1.0 / gamma) {
            return Err(Error::precondition(
                check,
                format!(
                    "candidate outside the 1/gamma neighborhood of the baseline (inf IR {}, sup IR {}, supports match: {})",
                    ir.inf_ir, ir.sup_ir, ir.support_match
                ),
            ));
        }
        if ir.sup_ir * gamma >= 1.0 {
            return Err(Error::precondition(
                check,
                format!("SIR {} is not below 1/gamma", ir.sup_ir),
            ));
        }
        let lip = lipschitz_constants(latent, latent_policy)?;
        if !lip.k_v.is_finite() {
            return Err(Error::precondition(
                check,
                format!("Lipschitz precondition fails: K_P = {} >= 1/gamma", lip.k_p),
            ));
        }
        let xi_b = stationary_distribution(mdp, baseline)?;
        let losses = exact_losses(mdp, encoder, latent, &xi_b, baseline)?;
        let ground_v = evaluate_policy(mdp, &candidate, false)?.v;
        let latent_v = evaluate_policy(latent.model(), latent_policy, false)?.v;
        Ok(Self {
            gamma,
            ir,
            xi_b,
            losses,
            k_v: lip.k_v,
            k_p: lip.k_p,
            ground_v,
            latent_v,
            r_max: mdp.r_max().max(latent.model().r_max()),
        })
    }

    fn value_range(&self) -> f64 {
        2.0 * self.r_max / (1.0 - self.gamma)
    }

    fn denom(&self) -> f64 {
        1.0 / self.ir.sup_ir - self.gamma
    }

    fn components(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("SIR".to_string(), self.ir.sup_ir),
            ("K_V".to_string(), self.k_v),
            ("K_P".to_string(), self.k_p),
            ("L_R".to_string(), self.losses.l_r),
            ("L_P".to_string(), self.losses.l_p),
        ])
    }
}

/// Requires an episodic ground model whose reset and initial states line up
/// with those of the world model. Returns the ground reset state.
fn check_episodic(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    check: &'static str,
) -> Result<usize> {
    let reset = mdp
        .reset_state()
        .ok_or_else(|| Error::precondition(check, "ground mdp is not episodic"))?;
    let z_reset = encoder
        .aligned_reset(mdp)
        .map_err(|e| Error::precondition(check, e.to_string()))?;
    if latent.model().reset_state() != Some(z_reset) {
        return Err(Error::precondition(
            check,
            format!(
                "world model reset {:?} is not the encoded reset {z_reset}",
                latent.model().reset_state()
            ),
        ));
    }
    if latent.model().initial_state() != encoder.map(mdp.initial_state()) {
        return Err(Error::precondition(
            check,
            "world model initial state is not the encoded initial state",
        ));
    }
    Ok(reset)
}

/// `E_{ξ_b}|V^π̄(s) - V̄^π̄(φ(s))| <= (L_R + γ K_V L_P) / (1/SIR - γ)`.
pub fn verify_avd(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    baseline: &TabularPolicy,
    latent_policy: &TabularPolicy,
) -> Result<BoundReport> {
    let st = Setup::new(
        mdp,
        encoder,
        latent,
        baseline,
        latent_policy,
        "average value difference",
    )?;
    let lhs: f64 = (0..mdp.n_states())
        .map(|s| st.xi_b.xi[s] * (st.ground_v[s] - st.latent_v[encoder.map(s)]).abs())
        .sum();
    let rhs = (st.losses.l_r + st.gamma * st.k_v * st.losses.l_p) / st.denom();
    Ok(BoundReport::new(
        "avd",
        lhs,
        rhs,
        rhs >= st.value_range(),
        inputs_digest(mdp, encoder, latent, &[baseline, latent_policy]),
        st.components(),
    ))
}

fn value_bound_parts(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    baseline: &TabularPolicy,
    latent_policy: &TabularPolicy,
) -> Result<(Setup, f64)> {
    let reset = check_episodic(mdp, encoder, latent, "value bound")?;
    let st = Setup::new(mdp, encoder, latent, baseline, latent_policy, "value bound")?;
    let xi_reset = st.xi_b.xi[reset];
    if xi_reset <= 0.0 {
        return Err(Error::ResetNotRecurrent(reset));
    }
    Ok((st, 1.0 / xi_reset))
}

/// `|J_M(π̄∘φ) - J_M̄(π̄)| <= AEL (L_R/γ + K_V L_P) / (1/SIR - γ)`.
pub fn verify_value_bound(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    baseline: &TabularPolicy,
    latent_policy: &TabularPolicy,
) -> Result<BoundReport> {
    let (st, ael) = value_bound_parts(mdp, encoder, latent, baseline, latent_policy)?;
    let lhs =
        (st.ground_v[mdp.initial_state()] - st.latent_v[latent.model().initial_state()]).abs();
    let rhs = ael * (st.losses.l_r / st.gamma + st.k_v * st.losses.l_p) / st.denom();
    let mut components = st.components();
    components.insert("AEL".into(), ael);
    let report = BoundReport::new(
        "value_bound",
        lhs,
        rhs,
        rhs >= st.value_range(),
        inputs_digest(mdp, encoder, latent, &[baseline, latent_policy]),
        components,
    );
    if st.gamma <= 0.5 {
        log::info!(
            "value bound outside its discount range (gamma = {}): held = {}, slack = {}",
            st.gamma,
            report.holds,
            report.slack
        );
        return Err(Error::precondition(
            "value bound",
            format!("discount {} must exceed 1/2", st.gamma),
        ));
    }
    Ok(report)
}

/// Exact improvement error `ζ` and its ingredients for a latent baseline/candidate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiTerms {
    pub zeta: f64,
    pub ael: f64,
    pub kappa: f64,
    pub k_v: f64,
    pub sir: f64,
    pub l_r: f64,
    pub l_p: f64,
    pub ground_gain: f64,
    pub latent_gain: f64,
    pub r_max: f64,
    pub gamma: f64,
}

pub fn spi_terms(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    baseline_latent: &TabularPolicy,
    candidate_latent: &TabularPolicy,
) -> Result<SpiTerms> {
    let baseline = compose(baseline_latent, encoder)?;
    let (st, ael) = value_bound_parts(mdp, encoder, latent, &baseline, candidate_latent)?;
    if st.gamma <= 0.5 {
        return Err(Error::precondition(
            "improvement bound",
            format!("discount {} must exceed 1/2", st.gamma),
        ));
    }
    // the baseline's own value bound enters the proof, so both constants must be covered
    let k_v_base = lipschitz_constants(latent, baseline_latent)?.k_v;
    if !k_v_base.is_finite() {
        return Err(Error::precondition(
            "improvement bound",
            "Lipschitz precondition fails for the baseline",
        ));
    }
    let k_v = st.k_v.max(k_v_base);
    let kappa = 1.0 / st.denom() + 1.0 / (1.0 - st.gamma);
    let zeta = ael * (st.losses.l_r / st.gamma + k_v * st.losses.l_p) * kappa;
    let s_i = mdp.initial_state();
    let z_i = latent.model().initial_state();
    let base_ground = evaluate_policy(mdp, &baseline, false)?.v[s_i];
    let base_latent = evaluate_policy(latent.model(), baseline_latent, false)?.v[z_i];
    Ok(SpiTerms {
        zeta,
        ael,
        kappa,
        k_v,
        sir: st.ir.sup_ir,
        l_r: st.losses.l_r,
        l_p: st.losses.l_p,
        ground_gain: st.ground_v[s_i] - base_ground,
        latent_gain: st.latent_v[z_i] - base_latent,
        r_max: st.r_max,
        gamma: st.gamma,
    })
}

/// Checks `J_M(π̄∘φ) - J_M(π_b) >= J_M̄(π̄) - J_M̄(π̄_b) - ζ`, reported as
/// `latent gain - ground gain <= ζ`.
pub fn verify_spi(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    baseline_latent: &TabularPolicy,
    candidate_latent: &TabularPolicy,
) -> Result<BoundReport> {
    let t = spi_terms(mdp, encoder, latent, baseline_latent, candidate_latent)?;
    let components = BTreeMap::from([
        ("SIR".to_string(), t.sir),
        ("K_V".to_string(), t.k_v),
        ("AEL".to_string(), t.ael),
        ("L_R".to_string(), t.l_r),
        ("L_P".to_string(), t.l_p),
        ("zeta".to_string(), t.zeta),
        ("kappa".to_string(), t.kappa),
        ("ground_gain".to_string(), t.ground_gain),
        ("latent_gain".to_string(), t.latent_gain),
    ]);
    Ok(BoundReport::new(
        "spi",
        t.latent_gain - t.ground_gain,
        t.zeta,
        t.zeta >= 4.0 * t.r_max / (1.0 - t.gamma),
        inputs_digest(mdp, encoder, latent, &[baseline_latent, candidate_latent]),
        components,
    ))
}

/// Probability, under independent pairs from `ξ_b`, that ground values are
/// further apart than `K_V d(φ(s1), φ(s2)) + ε`. Checked against
/// `δ = 4 (L_R + γ K_V L_P) / (ε (1/SIR - γ))` exactly (small state spaces)
/// and by sampling `trials` pairs.
#[allow(clippy::too_many_arguments)]
pub fn verify_representation_quality(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    baseline: &TabularPolicy,
    latent_policy: &TabularPolicy,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(
            "representation check",
            format!("epsilon = {epsilon}"),
        ));
    }
    let st = Setup::new(
        mdp,
        encoder,
        latent,
        baseline,
        latent_policy,
        "representation quality",
    )?;
    let delta = 4.0 * (st.losses.l_r + st.gamma * st.k_v * st.losses.l_p) / (epsilon * st.denom());
    let n = mdp.n_states();
    let metric = latent.metric();
    let violates = |s1: usize, s2: usize| {
        (st.ground_v[s1] - st.ground_v[s2]).abs()
            > st.k_v * metric.d(encoder.map(s1), encoder.map(s2)) + epsilon
    };
    let xi = &st.xi_b.xi;
    let exact = (n <= ENUMERATION_LIMIT).then(|| {
        let mut p = 0.0;
        for s1 in 0..n {
            for s2 in 0..n {
                if violates(s1, s2) {
                    p += xi[s1] * xi[s2];
                }
            }
        }
        p
    });
    let mut sampled = f64::NAN;
    let mut se = 0.0;
    if trials > 0 {
        let dist = WeightedIndex::new(xi).map_err(|e| Error::Numerical(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hits = (0..trials)
            .filter(|_| {
                let s1 = dist.sample(&mut rng);
                let s2 = dist.sample(&mut rng);
                violates(s1, s2)
            })
            .count();
        sampled = hits as f64 / trials as f64;
        let d = delta.clamp(0.0, 1.0);
        se = (d * (1.0 - d) / trials as f64).sqrt();
    }
    let vacuous = delta >= 1.0;
    let mut components = st.components();
    components.insert("delta".into(), delta);
    components.insert("epsilon".into(), epsilon);
    components.insert("sampled_violation".into(), sampled);
    components.insert("binomial_se".into(), se);
    if let Some(p) = exact {
        components.insert("exact_violation".into(), p);
    }
    let lhs = exact.unwrap_or(sampled);
    let mut report = BoundReport::new(
        "representation",
        lhs,
        delta,
        vacuous,
        inputs_digest(mdp, encoder, latent, &[baseline, latent_policy]),
        components,
    );
    let sampled_ok = trials == 0 || sampled <= delta + 3.0 * se + VERDICT_TOL;
    report.holds = vacuous || (report.holds && sampled_ok);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// Known upper bound on the average episode length (first case);
    /// `None` estimates the reset frequency from the samples instead.
    pub ael_upper_bound: Option<f64>,
    pub seed: u64,
    pub trials: usize,
}

impl Default for PacConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            delta: 0.1,
            ael_upper_bound: None,
            seed: 0,
            trials: 200,
        }
    }
}

impl PacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(
                "pac config",
                format!("epsilon = {}", self.epsilon),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(
                "pac config",
                format!("delta = {}", self.delta),
            ));
        }
        if let Some(l) = self.ael_upper_bound {
            if !(l > 1.0) {
                return Err(Error::invalid(
                    "pac config",
                    format!("episode length bound {l} must exceed 1"),
                ));
            }
        }
        if self.trials == 0 {
            return Err(Error::invalid("pac config", "trials must be positive"));
        }
        Ok(())
    }
}

/// `R* = max{1, 4 r_max^2}`.
pub fn r_star(r_max: f64) -> f64 {
    (4.0 * r_max * r_max).max(1.0)
}

fn ceil_count(x: f64) -> Result<u64> {
    if !x.is_finite() || x < 0.0 || x >= u64::MAX as f64 {
        return Err(Error::Numerical(format!(
            "required sample count {x} is not representable"
        )));
    }
    Ok(x.ceil() as u64)
}

/// Sample count with a known episode length bound `l`:
/// `ceil(-R* ln(δ/2) (l κ (1/γ + K_V))^2 / ε^2)`.
pub fn required_t_case1(
    r_star: f64,
    delta: f64,
    epsilon: f64,
    l: f64,
    kappa: f64,
    gamma: f64,
    k_v: f64,
) -> Result<u64> {
    let scale = l * kappa * (1.0 / gamma + k_v);
    ceil_count(-r_star * (delta / 2.0).ln() * scale * scale / (epsilon * epsilon))
}

/// Sample count when the reset frequency `xi_hat` is estimated:
/// `ceil(-R* ln(δ/3)/2 · max{1/ξ̂², ((κ/ξ̂)(L̂_R/γ + K_V L̂_P) + ε + κ(1/γ + K_V))² / (ε ξ̂)²})`.
#[allow(clippy::too_many_arguments)]
pub fn required_t_case2(
    r_star: f64,
    delta: f64,
    epsilon: f64,
    kappa: f64,
    gamma: f64,
    k_v: f64,
    l_r_hat: f64,
    l_p_hat: f64,
    xi_hat: f64,
) -> Result<u64> {
    if !(xi_hat > 0.0) {
        return Err(Error::Numerical("reset frequency estimate is zero".into()));
    }
    let inner = (kappa / xi_hat) * (l_r_hat / gamma + k_v * l_p_hat)
        + epsilon
        + kappa * (1.0 / gamma + k_v);
    let second = (inner / (epsilon * xi_hat)).powi(2);
    let first = 1.0 / (xi_hat * xi_hat);
    ceil_count(-r_star * (delta / 3.0).ln() / 2.0 * first.max(second))
}

/// One PAC estimate from a fresh sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacTrial {
    pub samples: u64,
    pub zeta_hat: f64,
    pub l_r_hat: f64,
    pub l_p_hat: f64,
    pub xi_reset_hat: f64,
}

const PAC_RETRIES: usize = 40;

/// Draws samples under the baseline and forms `ζ̂` for one trial.
pub fn pac_trial(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    baseline_latent: &TabularPolicy,
    terms: &SpiTerms,
    config: &PacConfig,
    seed: u64,
) -> Result<PacTrial> {
    let baseline = compose(baseline_latent, encoder)?;
    let reset = mdp.reset_state().expect("checked by spi_terms");
    let rs = r_star(terms.r_max);
    let (g, k_v, kappa, eps) = (terms.gamma, terms.k_v, terms.kappa, config.epsilon);
    let mut sub_seed = seed;
    let mut draw = |t: u64| -> Result<(LossReport, f64)> {
        let counts = sample_transition_counts(mdp, &baseline, t, sub_seed)?;
        sub_seed = sub_seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let xi_hat = counts.state_frequency(reset);
        Ok((
            empirical_losses_from_counts(&counts, mdp, encoder, latent)?,
            xi_hat,
        ))
    };
    if let Some(l) = config.ael_upper_bound {
        let t = required_t_case1(rs, config.delta, eps, l, kappa, g, k_v)?;
        let (rep, xi_hat) = draw(t)?;
        return Ok(PacTrial {
            samples: t,
            zeta_hat: l * (rep.l_r / g + k_v * rep.l_p) * kappa + eps,
            l_r_hat: rep.l_r,
            l_p_hat: rep.l_p,
            xi_reset_hat: xi_hat,
        });
    }
    let mut t = ceil_count(-rs * (config.delta / 3.0).ln() / (eps * eps))?;
    for _ in 0..PAC_RETRIES {
        let (rep, xi_hat) = draw(t)?;
        if xi_hat == 0.0 {
            t = t.saturating_mul(2);
            continue;
        }
        let need = required_t_case2(
            rs,
            config.delta,
            eps,
            kappa,
            g,
            k_v,
            rep.l_r,
            rep.l_p,
            xi_hat,
        )?;
        if t >= need {
            return Ok(PacTrial {
                samples: t,
                zeta_hat: (rep.l_r / g + k_v * rep.l_p) * kappa / xi_hat + eps,
                l_r_hat: rep.l_r,
                l_p_hat: rep.l_p,
                xi_reset_hat: xi_hat,
            });
        }
        t = need;
    }
    Err(Error::Numerical(format!(
        "sample size did not stabilize after {PAC_RETRIES} redraws (last T = {t})"
    )))
}

/// Repeats independent PAC trials and checks that `ζ̂ >= ζ` holds with
/// frequency at least `1 - δ - 3 SE`.
pub fn pac_verify(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    latent: &LatentMdp,
    baseline_latent: &TabularPolicy,
    candidate_latent: &TabularPolicy,
    config: &PacConfig,
) -> Result<BoundReport> {
    config.validate()?;
    if !latent.metric().is_discrete() {
        return Err(Error::precondition(
            "pac bound",
            "requires the discrete latent metric",
        ));
    }
    let terms = spi_terms(mdp, encoder, latent, baseline_latent, candidate_latent)?;
    if let Some(l) = config.ael_upper_bound {
        if l < terms.ael {
            return Err(Error::precondition(
                "pac bound",
                format!(
                    "episode length bound {l} is below the true value {}",
                    terms.ael
                ),
            ));
        }
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
    let mut covered = 0usize;
    let (mut zeta_hat_sum, mut max_t) = (0.0, 0u64);
    for _ in 0..config.trials {
        let seed = rand::Rng::random::<u64>(&mut seeder);
        let trial = pac_trial(mdp, encoder, latent, baseline_latent, &terms, config, seed)?;
        if trial.zeta_hat >= terms.zeta {
            covered += 1;
        }
        zeta_hat_sum += trial.zeta_hat;
        max_t = max_t.max(trial.samples);
    }
    let n = config.trials as f64;
    let miss = 1.0 - covered as f64 / n;
    let se = (config.delta * (1.0 - config.delta) / n).sqrt();
    let name = if config.ael_upper_bound.is_some() {
        "pac_case1"
    } else {
        "pac_case2"
    };
    let components = BTreeMap::from([
        ("zeta".to_string(), terms.zeta),
        ("mean_zeta_hat".to_string(), zeta_hat_sum / n),
        ("coverage".to_string(), 1.0 - miss),
        ("kappa".to_string(), terms.kappa),
        ("K_V".to_string(), terms.k_v),
        ("R_star".to_string(), r_star(terms.r_max)),
        ("AEL".to_string(), terms.ael),
        ("max_T".to_string(), max_t as f64),
        ("delta".to_string(), config.delta),
        ("epsilon".to_string(), config.epsilon),
    ]);
    Ok(BoundReport::new(
        name,
        miss,
        config.delta + 3.0 * se,
        false,
        inputs_digest(mdp, encoder, latent, &[baseline_latent, candidate_latent]),
        components,
    ))
}
