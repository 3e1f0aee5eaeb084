use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;
use spi_lab::latent::compose;
use spi_lab::mdp::evaluate_policy;
use spi_lab::surrogate::imagined_returns;
use spi_lab::TabularPolicy;

use super::read_json;
use crate::config::{export, resolve, RunDir};
use crate::envsel;
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
    /// Latent policy JSON; defaults to the latent baseline.
    #[arg(long)]
    pub policy: Option<String>,
    /// Rollout length; by default long enough that the discounted tail is below 1e-6.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra copy of the summary JSON.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Smallest `h` with `γ^h r_max / (1 - γ) <= tail`.
fn default_horizon(gamma: f64, r_max: f64, tail: f64) -> usize {
    if r_max == 0.0 {
        return 1;
    }
    ((tail * (1.0 - gamma) / r_max).ln() / gamma.ln())
        .ceil()
        .max(1.0) as usize
}

pub fn run(ctx: &Ctx, args: Args) -> CliResult<()> {
    let mut s = resolve(ctx.config.as_deref(), &args)?;
    let env = s.env.get_or_insert_with(|| "fig1".into()).clone();
    let count = *s.rollouts.get_or_insert(10_000);
    let seed = *s.seed.get_or_insert(0);
    let spec = envsel::load(&env, s.params.as_deref())?;
    let model = spec.latent.model();
    let horizon = *s
        .horizon
        .get_or_insert_with(|| default_horizon(model.discount(), model.r_max(), 1e-6));
    if count == 0 {
        return Err(Failure::Config("`rollouts` must be positive".into()));
    }
    let policy: TabularPolicy = match s.policy.as_deref() {
        Some(path) => read_json(path)?,
        None => spec.baseline_latent.clone(),
    };
    let run = RunDir::create(ctx, "dream-eval", &s)?;

    let z0 = model.initial_state();
    let mut starts = vec![0.0; spec.latent.n_latent()];
    starts[z0] = 1.0;
    let est = imagined_returns(&spec.latent, &policy, &starts, horizon, count, seed)?;
    let exact = evaluate_policy(model, &policy, false)?.v[z0];
    let ground = evaluate_policy(&spec.mdp, &compose(&policy, &spec.encoder)?, false)?.v
        [spec.mdp.initial_state()];
    let z = if est.std_err > 0.0 {
        (est.mean - exact) / est.std_err
    } else {
        0.0
    };
    let summary = json!({
        "env": spec.name,
        "horizon": horizon,
        "rollouts": count,
        "imagined_mean": est.mean,
        "imagined_std_err": est.std_err,
        "latent_exact": exact,
        "ground_exact": ground,
        "z_score": z,
        "within_3se": z.abs() <= 3.0,
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    run.write("summary.json", &text)?;
    export(args.out.as_deref(), &text)?;
    println!(
        "imagined {:.6} +- {:.6} vs latent value {exact:.6} (z = {z:.2})",
        est.mean, est.std_err
    );
    println!("ground return of the composed policy {ground:.6}");
    println!("run directory {}", run.path.display());
    Ok(())
}
