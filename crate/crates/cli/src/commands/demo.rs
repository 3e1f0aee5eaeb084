use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use spi_lab::envs::{block_greedy_update, build_fig1, build_fig2, fig2_states, EnvSpec};
use spi_lab::latent::compose;
use spi_lab::losses::exact_losses;
use spi_lab::mdp::{evaluate_policy, greedy_policy, stationary_distribution, value_iteration};
use spi_lab::TabularPolicy;

use crate::config::{export, need, resolve, RunDir};
use crate::envsel::{fig1_params, fig2_params, parse_params};
use crate::{CliResult, Ctx, Failure};

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    /// fig1 (out-of-trajectory) or fig2 (confounding update).
    pub which: Option<String>,
    /// Environment parameters, `key=value,...`.
    #[arg(long)]
    pub params: Option<String>,
    /// Extra copy of the environment JSON.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn ground_value(spec: &EnvSpec, latent_policy: &TabularPolicy, s: usize) -> CliResult<f64> {
    Ok(evaluate_policy(&spec.mdp, &compose(latent_policy, &spec.encoder)?, false)?.v[s])
}

fn fig1(spec: &EnvSpec) -> CliResult<(Value, Vec<String>)> {
    let s0 = spec.mdp.initial_state();
    let planned = greedy_policy(&value_iteration(
        spec.latent.model(),
        false,
        1e-12,
        10_000_000,
    )?);
    let z0 = spec.latent.model().initial_state();
    let latent_plan = evaluate_policy(spec.latent.model(), &planned, false)?.v[z0];
    let j_plan = ground_value(spec, &planned, s0)?;
    let j_base = ground_value(spec, &spec.baseline_latent, s0)?;
    let xi = stationary_distribution(&spec.mdp, &spec.baseline)?;
    let losses = exact_losses(&spec.mdp, &spec.encoder, &spec.latent, &xi, &spec.baseline)?;
    let r_max = spec.mdp.r_max().max(spec.latent.model().r_max());
    let lines = vec![
        format!("baseline ground return {j_base:.6}"),
        format!("latent-optimal plan: latent return {latent_plan:.6}, ground return {j_plan:.6}"),
        format!(
            "local losses under the baseline: L_R = {:.3e}, L_P = {:.3e} (r_max = {r_max})",
            losses.l_r, losses.l_p
        ),
        format!(
            "the plan {} the ground return by {:.6}",
            if j_plan < j_base {
                "degrades"
            } else {
                "does not degrade"
            },
            (j_base - j_plan).abs()
        ),
    ];
    let summary = json!({
        "J_baseline": j_base,
        "J_plan_ground": j_plan,
        "J_plan_latent": latent_plan,
        "L_R": losses.l_r,
        "L_P": losses.l_p,
        "r_max": r_max,
        "plan_degrades": j_plan < j_base,
    });
    Ok((summary, lines))
}

fn fig2(spec: &EnvSpec, split: &EnvSpec) -> CliResult<(Value, Vec<String>)> {
    use fig2_states::*;
    let base = ground_value(spec, &spec.baseline_latent, S1)?;
    let merged = ground_value(spec, &block_greedy_update(spec)?, S1)?;
    let split_base = ground_value(split, &split.baseline_latent, S1)?;
    let split_up = ground_value(split, &block_greedy_update(split)?, S1)?;
    let v = evaluate_policy(&spec.mdp, &spec.baseline, false)?.v;
    let lines = vec![
        format!(
            "baseline V(s1) = {base:.6}; |V(s2) - V(s3)| = {:.3e}",
            (v[S2] - v[S3]).abs()
        ),
        format!("greedy update on the merged encoder: V(s1) = {merged:.6}"),
        format!(
            "greedy update on the split encoder:  V(s1) = {split_up:.6} (baseline {split_base:.6})"
        ),
    ];
    let summary = json!({
        "V_s1_baseline": base,
        "V_s1_merged_update": merged,
        "V_s1_split_baseline": split_base,
        "V_s1_split_update": split_up,
        "merged_update_negative": merged < 0.0,
        "split_update_improves": split_up > split_base,
    });
    Ok((summary, lines))
}

pub fn run(ctx: &Ctx, args: Args) -> CliResult<()> {
    let s = resolve(ctx.config.as_deref(), &args)?;
    let which = need(s.which.clone(), "which")?;
    let params = parse_params(s.params.as_deref())?;
    let (spec, (summary, lines)) = match which.as_str() {
        "fig1" => {
            let spec = build_fig1(&fig1_params(&params)?)?;
            let out = fig1(&spec)?;
            (spec, out)
        }
        "fig2" => {
            let p = fig2_params(&params)?;
            let spec = build_fig2(&p)?;
            let split = build_fig2(&spi_lab::envs::Fig2Params { split: true, ..p })?;
            let out = fig2(&spec, &split)?;
            (spec, out)
        }
        other => {
            return Err(Failure::Config(format!(
                "unknown demo `{other}`; expected fig1 or fig2"
            )))
        }
    };
    let run = RunDir::create(ctx, "demo", &s)?;
    let text = spec.to_json()? + "\n";
    run.write("env.json", &text)?;
    export(args.out.as_deref(), &text)?;
    run.write_json("summary.json", &summary)?;
    for line in lines {
        println!("{line}");
    }
    println!("run directory {}", run.path.display());
    Ok(())
}
