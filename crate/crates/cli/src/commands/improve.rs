use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use spi_lab::mdp::{evaluate_policy, stationary_distribution, value_iteration};
use spi_lab::neighborhood::{extremal_ir, in_neighborhood_unchecked, mirror_step};
use spi_lab::{FiniteMdp, TabularPolicy};

use super::{check_c, check_positive, fail_on, ground_problem};
use crate::config::{export, resolve, RunDir};
use crate::envsel;
use crate::trace::{RunTrace, TraceRow};
use crate::{CliResult, Ctx, Failure};

const MONOTONE_TOL: f64 = 1e-10;

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
    /// Full-support starting policy (JSON); defaults to the baseline.
    #[arg(long)]
    pub policy: Option<String>,
    /// Neighborhood constant, strictly between 1 and 2.
    #[arg(long)]
    pub c: Option<f64>,
    /// Iteration budget.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Stop once the sup-norm gap to the optimal values is this small.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Run this many instances of the randomized suite instead of one environment.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Seed of the randomized suite.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra copy of the trace CSV (the summary JSON in suite mode).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

struct Outcome {
    trace: RunTrace,
    converged: bool,
    violations: Vec<String>,
}

fn mirror_loop(
    mdp: &FiniteMdp,
    start: TabularPolicy,
    c: f64,
    iters: usize,
    tol: f64,
) -> CliResult<Outcome> {
    let v_star = value_iteration(mdp, false, 1e-12, 10_000_000)?.v;
    let init = mdp.initial_state();
    let mut pi = start;
    let mut v = evaluate_policy(mdp, &pi, false)?.v;
    let mut out = Outcome {
        trace: RunTrace::default(),
        converged: false,
        violations: Vec::new(),
    };
    let mut sir = None;
    let mut audit = "initial".to_string();
    for n in 0..=iters {
        let gap = v
            .iter()
            .zip(&v_star)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        out.trace.push(TraceRow {
            iteration: n,
            j: v[init],
            sir,
            v_gap: Some(gap),
            audit: audit.clone(),
            ..Default::default()
        })?;
        if gap <= tol {
            out.converged = true;
            break;
        }
        if n == iters {
            break;
        }
        let xi = stationary_distribution(mdp, &pi)?;
        let next = mirror_step(mdp, &pi, c, &xi)?;
        let ir = extremal_ir(&pi, &next)?;
        audit = if in_neighborhood_unchecked(&ir, c) {
            "in-neighborhood".into()
        } else {
            out.violations
                .push(format!("iteration {}: update left the neighborhood", n + 1));
            "outside".into()
        };
        sir = Some(ir.sup_ir);
        let v_next = evaluate_policy(mdp, &next, false)?.v;
        if let Some(s) = (0..v.len()).find(|&s| v_next[s] < v[s] - MONOTONE_TOL) {
            out.violations.push(format!(
                "iteration {}: value of state {s} fell from {} to {}",
                n + 1,
                v[s],
                v_next[s]
            ));
        }
        pi = next;
        v = v_next;
    }
    Ok(out)
}

pub fn run(ctx: &Ctx, args: Args) -> CliResult<()> {
    let mut s = resolve(ctx.config.as_deref(), &args)?;
    let c = *s.c.get_or_insert(1.3);
    let iters = *s.iters.get_or_insert(2000);
    let tol = *s.tol.get_or_insert(1e-6);
    check_c(c)?;
    check_positive("tol", tol)?;
    if let Some(n) = s.instances {
        if s.env.as_deref().is_some_and(|e| e != "random") || s.mdp.is_some() || s.policy.is_some()
        {
            return Err(Failure::Config(
                "--instances runs the randomized suite only".into(),
            ));
        }
        let seed = *s.seed.get_or_insert(42);
        return run_suite(ctx, &s, &args, n, seed, c, iters, tol);
    }
    if s.seed.is_some() {
        return Err(Failure::Config(
            "--seed selects a suite; use it with --instances".into(),
        ));
    }
    let (mdp, start) = ground_problem(
        s.env.as_deref(),
        s.params.as_deref(),
        s.mdp.as_deref(),
        s.policy.as_deref(),
    )?;
    let run = RunDir::create(ctx, "improve", &s)?;
    let o = mirror_loop(&mdp, start, c, iters, tol)?;
    let csv = o.trace.to_csv()?;
    run.write("trace.csv", &csv)?;
    export(args.out.as_deref(), &csv)?;
    let (first, last) = (&o.trace.rows[0], o.trace.rows.last().expect("nonempty"));
    run.write_json(
        "summary.json",
        &json!({
            "iterations": last.iteration,
            "converged": o.converged,
            "J_initial": first.j,
            "J_final": last.j,
            "final_gap": last.v_gap,
            "violations": o.violations,
        }),
    )?;
    println!(
        "J {:.6} -> {:.6} in {} iterations (gap {:.3e}, converged {})",
        first.j,
        last.j,
        last.iteration,
        last.v_gap.unwrap_or(f64::NAN),
        o.converged
    );
    println!("run directory {}", run.path.display());
    fail_on(o.violations)
}

#[allow(clippy::too_many_arguments)]
fn run_suite(
    ctx: &Ctx,
    s: &Args,
    args: &Args,
    n: usize,
    seed: u64,
    c: f64,
    iters: usize,
    tol: f64,
) -> CliResult<()> {
    let run = RunDir::create(ctx, "improve", s)?;
    let outcomes: Vec<Outcome> = (0..n)
        .into_par_iter()
        .map(|i| {
            let params = format!("suite_seed={seed},instance={i}");
            let spec = envsel::load("random", Some(&params))?;
            mirror_loop(&spec.mdp, spec.baseline, c, iters, tol)
        })
        .collect::<CliResult<_>>()?;
    let mut violations = Vec::new();
    let mut instances = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        run.write(&format!("traces/instance-{i:04}.csv"), &o.trace.to_csv()?)?;
        violations.extend(o.violations.iter().map(|v| format!("instance {i}, {v}")));
        let last = o.trace.rows.last().expect("nonempty");
        instances.push(json!({
            "instance": i,
            "iterations": last.iteration,
            "converged": o.converged,
            "J_initial": o.trace.rows[0].j,
            "J_final": last.j,
        }));
    }
    let converged = outcomes.iter().filter(|o| o.converged).count();
    let summary = json!({
        "instances": n,
        "converged": converged,
        "max_iterations": outcomes.iter().map(|o| o.trace.rows.last().unwrap().iteration).max(),
        "violations": violations,
        "per_instance": instances,
    });
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    run.write("summary.json", &text)?;
    export(args.out.as_deref(), &text)?;
    println!(
        "{n} instances, {converged} converged, {} violations",
        violations.len()
    );
    println!("run directory {}", run.path.display());
    fail_on(violations)
}
