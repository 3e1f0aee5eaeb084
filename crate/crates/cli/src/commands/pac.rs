use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spi_lab::envs::random_candidate;
use spi_lab::guarantees::{pac_verify, PacConfig};

use super::{check_c, fail_on, stream};
use crate::config::{export, resolve, RunDir};
use crate::envsel;
use crate::{CliResult, Ctx};

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    /// fig1, fig2, random, or an environment JSON file.
    #[arg(long)]
    pub env: Option<String>,
    /// Environment parameters, `key=value,...`.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Known upper bound on the average episode length; omit to estimate
    /// the reset frequency from the samples.
    #[arg(long)]
    pub ael_bound: Option<f64>,
    /// Independent repetitions behind the coverage verdict.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighborhood constant of the random candidate; defaults halfway to 1/γ.
    #[arg(long)]
    pub c: Option<f64>,
    /// Extra copy of the report JSON.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, args: Args) -> CliResult<()> {
    let mut s = resolve(ctx.config.as_deref(), &args)?;
    let d = PacConfig::default();
    let env = s.env.get_or_insert_with(|| "random".into()).clone();
    let cfg = PacConfig {
        epsilon: *s.epsilon.get_or_insert(d.epsilon),
        delta: *s.delta.get_or_insert(d.delta),
        ael_upper_bound: s.ael_bound,
        seed: *s.seed.get_or_insert(d.seed),
        trials: *s.trials.get_or_insert(d.trials),
    };
    cfg.validate()?;
    let spec = envsel::load(&env, s.params.as_deref())?;
    let g = spec.mdp.discount();
    let c = *s.c.get_or_insert(1.0 + 0.5 * (1.0 / g - 1.0).min(1.0));
    check_c(c)?;
    let run = RunDir::create(ctx, "pac", &s)?;

    let candidate = random_candidate(&spec, c, &mut stream(cfg.seed, u64::MAX));
    let rep = pac_verify(
        &spec.mdp,
        &spec.encoder,
        &spec.latent,
        &spec.baseline_latent,
        &candidate,
        &cfg,
    )?;
    let text = serde_json::to_string_pretty(&rep)? + "\n";
    run.write("report.json", &text)?;
    export(args.out.as_deref(), &text)?;
    let get = |k: &str| rep.component(k).unwrap_or(f64::NAN);
    println!(
        "{}: coverage {:.3} over {} trials (miss {:.3} <= {:.3}: {})",
        rep.name,
        get("coverage"),
        cfg.trials,
        rep.lhs,
        rep.rhs,
        rep.holds
    );
    println!(
        "zeta {:.6}, mean zeta-hat {:.6}, largest T {}",
        get("zeta"),
        get("mean_zeta_hat"),
        get("max_T")
    );
    println!("run directory {}", run.path.display());
    let violations = if rep.holds {
        Vec::new()
    } else {
        vec![format!(
            "{} coverage {} below 1 - delta - 3 SE",
            rep.name,
            get("coverage")
        )]
    };
    fail_on(violations)
}
