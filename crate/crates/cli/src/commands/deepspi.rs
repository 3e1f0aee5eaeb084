use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;
use spi_lab::guarantees::{verify_avd, verify_spi, verify_value_bound, BoundReport};
use spi_lab::latent::{compose, fit_latent_model, LatentMdp};
use spi_lab::losses::exact_losses;
use spi_lab::mdp::{evaluate_policy, sample_transitions, stationary_distribution};
use spi_lab::neighborhood::{extremal_ir, in_neighborhood_unchecked};
use spi_lab::surrogate::{clipped_update, SoftmaxLatentPolicy, SurrogateConfig};
use spi_lab::TabularPolicy;

use super::fail_on;
use crate::config::{export, resolve, RunDir};
use crate::envsel;
use crate::trace::{RunTrace, TraceRow};
use crate::{CliResult, Ctx, Failure};

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    /// fig1, fig2, random, or an environment JSON file.
    #[arg(long)]
    pub env: Option<String>,
    /// Environment parameters, `key=value,...`.
    #[arg(long)]
    pub params: Option<String>,
    /// Number of policy updates.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Transitions sampled per update.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Clip range of the importance ratio.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Reward-loss penalty coefficient.
    #[arg(long)]
    pub alpha_r: Option<f64>,
    /// Transition-loss penalty coefficient.
    #[arg(long)]
    pub alpha_p: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub minibatches: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra copy of the trace CSV.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

struct Prev {
    latent_policy: TabularPolicy,
    ground_policy: TabularPolicy,
    model: LatentMdp,
}

fn slack_of(r: &BoundReport, violations: &mut Vec<String>, n: usize) -> f64 {
    if !r.holds {
        violations.push(format!(
            "update {n}: {} bound violated (lhs {} > rhs {})",
            r.name, r.lhs, r.rhs
        ));
    }
    r.slack
}

pub fn run(ctx: &Ctx, args: Args) -> CliResult<()> {
    let mut s = resolve(ctx.config.as_deref(), &args)?;
    let d = SurrogateConfig::default();
    s.env.get_or_insert_with(|| "fig2".into());
    let steps = *s.steps.get_or_insert(30);
    let batch = *s.batch.get_or_insert(2000);
    let base_cfg = SurrogateConfig {
        epsilon_clip: *s.clip.get_or_insert(d.epsilon_clip),
        alpha_r: *s.alpha_r.get_or_insert(d.alpha_r),
        alpha_p: *s.alpha_p.get_or_insert(d.alpha_p),
        learning_rate: *s.learning_rate.get_or_insert(d.learning_rate),
        epochs: *s.epochs.get_or_insert(d.epochs),
        minibatches: *s.minibatches.get_or_insert(d.minibatches),
        seed: *s.seed.get_or_insert(0),
    };
    base_cfg.validate()?;
    if batch == 0 {
        return Err(Failure::Config("`batch` must be positive".into()));
    }
    let spec = envsel::load(s.env.as_deref().unwrap(), s.params.as_deref())?;
    let (mdp, enc) = (&spec.mdp, &spec.encoder);
    let gamma = mdp.discount();
    if gamma <= 0.5 {
        return Err(Failure::Config(format!(
            "auditing needs a discount above 1/2, got {gamma}"
        )));
    }
    let c_audit = 1.0 / gamma;
    let run = RunDir::create(ctx, "deepspi", &s)?;

    let mut policy = SoftmaxLatentPolicy::from_tabular(&spec.baseline_latent)?;
    let mut trace = RunTrace::default();
    let mut violations = Vec::new();
    let mut prev: Option<Prev> = None;
    let (mut audited, mut outside) = (0usize, 0usize);
    let mut min_spi = f64::INFINITY;
    for n in 0..=steps {
        let latent_policy = policy.to_tabular();
        let ground_policy = compose(&latent_policy, enc)?;
        let xi = stationary_distribution(mdp, &ground_policy)?;
        let model = fit_latent_model(mdp, enc, &xi)?;
        let j = evaluate_policy(mdp, &ground_policy, false)?.v[mdp.initial_state()];
        let j_latent =
            evaluate_policy(model.model(), &latent_policy, false)?.v[model.model().initial_state()];
        let losses = exact_losses(mdp, enc, &model, &xi, &ground_policy)?;
        let mut row = TraceRow {
            iteration: n,
            j,
            j_latent: Some(j_latent),
            l_r: Some(losses.l_r),
            l_p: Some(losses.l_p),
            audit: "initial".into(),
            ..Default::default()
        };
        if let Some(p) = &prev {
            let ir = extremal_ir(&p.latent_policy, &latent_policy)?;
            row.sir = Some(ir.sup_ir);
            let eps = base_cfg.epsilon_clip;
            let in_band = ir.support_match && ir.sup_ir <= 1.0 + eps && ir.inf_ir >= 1.0 - eps;
            if in_neighborhood_unchecked(&ir, c_audit) {
                let avd = verify_avd(mdp, enc, &p.model, &p.ground_policy, &latent_policy)?;
                let value =
                    verify_value_bound(mdp, enc, &p.model, &p.ground_policy, &latent_policy)?;
                let spi = verify_spi(mdp, enc, &p.model, &p.latent_policy, &latent_policy)?;
                row.slack_avd = Some(slack_of(&avd, &mut violations, n));
                row.slack_value = Some(slack_of(&value, &mut violations, n));
                row.slack_spi = Some(slack_of(&spi, &mut violations, n));
                min_spi = min_spi.min(spi.slack);
                audited += 1;
                row.audit = if in_band {
                    "drift-band"
                } else {
                    "in-neighborhood"
                }
                .into();
            } else {
                outside += 1;
                row.audit = "outside".into();
            }
        }
        trace.push(row)?;
        if n == steps {
            break;
        }
        let step_seed = base_cfg.seed.wrapping_add(n as u64);
        let data = sample_transitions(mdp, &ground_policy, batch, step_seed)?;
        let cfg = SurrogateConfig {
            seed: step_seed,
            ..base_cfg.clone()
        };
        let next = clipped_update(mdp, enc, &model, &policy, &data, &cfg)?;
        prev = Some(Prev {
            latent_policy,
            ground_policy,
            model,
        });
        policy = next;
    }

    let csv = trace.to_csv()?;
    run.write("trace.csv", &csv)?;
    export(args.out.as_deref(), &csv)?;
    let verdict = match (audited, violations.is_empty()) {
        (_, false) => "violated",
        (0, true) => "not-audited",
        _ => "holds",
    };
    let (first, last) = (&trace.rows[0], trace.rows.last().expect("nonempty"));
    run.write_json(
        "summary.json",
        &json!({
            "env": spec.name,
            "steps": steps,
            "J_initial": first.j,
            "J_final": last.j,
            "audited_updates": audited,
            "updates_outside_neighborhood": outside,
            "min_slack_spi": (audited > 0).then_some(min_spi),
            "verify_spi": verdict,
            "final_policy": policy.to_tabular(),
            "violations": violations,
        }),
    )?;
    println!("J {:.6} -> {:.6} over {steps} updates", first.j, last.j);
    println!(
        "{audited} updates audited, {outside} outside N^(1/gamma); verify_spi verdict: {verdict}"
    );
    println!("run directory {}", run.path.display());
    fail_on(violations)
}
