use std::path::PathBuf;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use spi_lab::envs::random_candidate;
use spi_lab::guarantees::{
    verify_avd, verify_representation_quality, verify_spi, verify_value_bound, BoundReport,
};

use super::{check_positive, fail_on, stream};
use crate::config::{export, resolve, RunDir};
use crate::trace::{BoundRow, BOUNDS_HEADER};
use crate::{envsel, CliResult, Ctx, Failure};

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    /// Instance family; only `random` is available.
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Representation-check tolerance as a fraction of the value range.
    #[arg(long)]
    pub rep_fraction: Option<f64>,
    /// State pairs sampled by the representation check.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Also write every report in full under `details/`.
    #[arg(long)]
    #[serde(default)]
    pub verbose: bool,
    /// Extra copy of the bounds CSV.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn instance_reports(
    seed: u64,
    i: usize,
    rep_fraction: f64,
    pairs: usize,
) -> CliResult<Vec<BoundReport>> {
    let spec = envsel::load("random", Some(&format!("suite_seed={seed},instance={i}")))?;
    let mut r = stream(seed, i as u64);
    let g = spec.mdp.discount();
    let c = 1.0 + r.random_range(0.02..0.98) * (1.0 / g - 1.0);
    let cand = random_candidate(&spec, c, &mut r);
    let (m, e, l) = (&spec.mdp, &spec.encoder, &spec.latent);
    let span = 2.0 * m.r_max().max(l.model().r_max()) / (1.0 - g);
    Ok(vec![
        verify_avd(m, e, l, &spec.baseline, &cand)?,
        verify_value_bound(m, e, l, &spec.baseline, &cand)?,
        verify_spi(m, e, l, &spec.baseline_latent, &cand)?,
        verify_representation_quality(
            m,
            e,
            l,
            &spec.baseline,
            &cand,
            rep_fraction * span,
            pairs,
            r.random(),
        )?,
    ])
}

pub fn run(ctx: &Ctx, args: Args) -> CliResult<()> {
    let mut s = resolve(ctx.config.as_deref(), &args)?;
    let suite = s.suite.get_or_insert_with(|| "random".into()).clone();
    let n = *s.instances.get_or_insert(300);
    let seed = *s.seed.get_or_insert(42);
    let rep_fraction = *s.rep_fraction.get_or_insert(0.1);
    let pairs = *s.pairs.get_or_insert(10_000);
    if suite != "random" {
        return Err(Failure::Config(format!(
            "unknown suite `{suite}`; only `random` is available"
        )));
    }
    check_positive("rep-fraction", rep_fraction)?;
    let run = RunDir::create(ctx, "verify", &s)?;

    let reports: Vec<Vec<BoundReport>> = (0..n)
        .into_par_iter()
        .map(|i| {
            instance_reports(seed, i, rep_fraction, pairs)
                .map_err(|f| f.context(&format!("instance {i}")))
        })
        .collect::<CliResult<_>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    if reports.is_empty() {
        w.write_record(BOUNDS_HEADER)?;
    }
    let mut violations = Vec::new();
    for (i, reps) in reports.iter().enumerate() {
        for rep in reps {
            if !rep.holds {
                violations.push(format!(
                    "instance {i}: {} (lhs {} > rhs {})",
                    rep.name, rep.lhs, rep.rhs
                ));
            }
            w.serialize(BoundRow {
                instance: i,
                theorem: rep.name.clone(),
                lhs: rep.lhs,
                rhs: rep.rhs,
                slack: rep.slack,
                holds: rep.holds,
                vacuous: rep.vacuous,
                inputs_digest: rep.inputs_digest.clone(),
            })?;
        }
        if s.verbose {
            run.write_json(&format!("details/instance-{i:04}.json"), reps)?;
        }
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Failure::Config(e.to_string()))?)
        .expect("utf-8");
    run.write("bounds.csv", &csv)?;
    export(args.out.as_deref(), &csv)?;

    let mut per_theorem = serde_json::Map::new();
    for name in ["avd", "value_bound", "spi", "representation"] {
        let rows: Vec<&BoundReport> = reports
            .iter()
            .flatten()
            .filter(|r| r.name == name)
            .collect();
        per_theorem.insert(
            name.into(),
            json!({
                "checked": rows.len(),
                "holds": rows.iter().filter(|r| r.holds).count(),
                "vacuous": rows.iter().filter(|r| r.vacuous).count(),
                "min_slack": rows.iter().map(|r| r.slack).reduce(f64::min),
            }),
        );
        println!(
            "{name:>15}: {} checked, {} hold, {} vacuous",
            rows.len(),
            rows.iter().filter(|r| r.holds).count(),
            rows.iter().filter(|r| r.vacuous).count()
        );
    }
    run.write_json(
        "summary.json",
        &json!({ "instances": n, "seed": seed, "theorems": per_theorem, "violations": violations }),
    )?;
    println!("run directory {}", run.path.display());
    fail_on(violations)
}
