use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;
use spi_lab::mdp::{average_episode_length, evaluate_policy, greedy_policy, value_iteration};

use super::{check_positive, ground_problem};
use crate::config::{export, resolve, RunDir};
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
    /// MDP JSON file, instead of an environment.
    #[arg(long)]
    pub mdp: Option<String>,
    /// Policy JSON file to evaluate; defaults to the environment baseline.
    #[arg(long)]
    pub policy: Option<String>,
    /// Value-iteration tolerance in sup norm.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Extra copy of the summary JSON.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, args: Args) -> CliResult<()> {
    let mut s = resolve(ctx.config.as_deref(), &args)?;
    let tol = *s.tol.get_or_insert(1e-10);
    check_positive("tol", tol)?;
    let (mdp, policy) = ground_problem(
        s.env.as_deref(),
        s.params.as_deref(),
        s.mdp.as_deref(),
        s.policy.as_deref(),
    )?;
    let run = RunDir::create(ctx, "solve", &s)?;

    let opt = value_iteration(&mdp, false, tol, 10_000_000)?;
    let greedy = greedy_policy(&opt);
    let actions: Vec<usize> = greedy
        .rows()
        .map(|r| r.iter().position(|&p| p == 1.0).unwrap_or(0))
        .collect();
    let tables = evaluate_policy(&mdp, &policy, false)?;
    let init = mdp.initial_state();
    let ael = match mdp.reset_state() {
        Some(_) => Some(average_episode_length(&mdp, &policy)?),
        None => None,
    };
    let summary = json!({
        "n_states": mdp.n_states(),
        "n_actions": mdp.n_actions(),
        "discount": mdp.discount(),
        "optimal_values": opt.v,
        "greedy_actions": actions,
        "J_star": opt.v[init],
        "policy": {
            "values": tables.v,
            "J": tables.v[init],
            "AEL": ael,
            "fingerprint": policy.fingerprint(),
        },
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    run.write("summary.json", &text)?;
    export(args.out.as_deref(), &text)?;
    println!("J* = {:.6}  J(policy) = {:.6}", opt.v[init], tables.v[init]);
    println!("greedy actions {actions:?}");
    if let Some(l) = ael {
        println!("average episode length {l:.4}");
    }
    println!("run directory {}", run.path.display());
    Ok(())
}
