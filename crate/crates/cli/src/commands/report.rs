use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::fail_on;
use crate::config::{check_path, export, resolve, RunDir};
use crate::trace::{BoundRow, TraceRow, BOUNDS_HEADER, TRACE_HEADER};
use crate::{CliResult, Ctx, Failure};

const SLACK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    /// Trace or bounds CSV files sharing one schema.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// Extra copy of the summary JSON.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Extra copy of the plot-ready CSV.
    #[arg(long)]
    #[serde(skip)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Schema {
    Trace,
    Bounds,
}

impl Schema {
    fn name(self) -> &'static str {
        match self {
            Schema::Trace => "trace",
            Schema::Bounds => "bounds",
        }
    }
}

fn schema_of(path: &PathBuf) -> CliResult<(Schema, csv::Reader<std::fs::File>)> {
    check_path(path)?;
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let schema = if header == TRACE_HEADER {
        Schema::Trace
    } else if header == BOUNDS_HEADER {
        Schema::Bounds
    } else {
        return Err(Failure::Config(format!(
            "{}: unrecognized header {header:?}",
            path.display()
        )));
    };
    Ok((schema, r))
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    })
}

/// min/median slack and hold/violation counts of one column.
fn slack_stats(xs: Vec<f64>) -> Value {
    json!({
        "checked": xs.len(),
        "holds": xs.iter().filter(|&&x| x >= -SLACK_TOL).count(),
        "violations": xs.iter().filter(|&&x| x < -SLACK_TOL).count(),
        "min_slack": xs.iter().copied().reduce(f64::min),
        "median_slack": median(xs),
    })
}

fn trace_slacks(rows: &[&TraceRow]) -> Value {
    let col =
        |f: fn(&TraceRow) -> Option<f64>| slack_stats(rows.iter().filter_map(|r| f(r)).collect());
    json!({
        "avd": col(|r| r.slack_avd),
        "value_bound": col(|r| r.slack_value),
        "spi": col(|r| r.slack_spi),
    })
}

fn trace_aggregate(rows: &[TraceRow]) -> Value {
    let refs: Vec<&TraceRow> = rows.iter().collect();
    let mut audits = BTreeMap::<&str, usize>::new();
    for r in rows {
        *audits.entry(r.audit.as_str()).or_default() += 1;
    }
    let monotone = rows.windows(2).all(|w| w[1].j >= w[0].j - 1e-10);
    json!({
        "rows": rows.len(),
        "J_first": rows.first().map(|r| r.j),
        "J_last": rows.last().map(|r| r.j),
        "improvement": rows.first().zip(rows.last()).map(|(a, b)| b.j - a.j),
        "J_nondecreasing": monotone,
        "audits": audits,
        "slack": trace_slacks(&refs),
    })
}

fn count_violations(slack: &Value) -> usize {
    slack.as_object().map_or(0, |m| {
        m.values()
            .map(|v| v["violations"].as_u64().unwrap_or(0) as usize)
            .sum()
    })
}

pub fn run(ctx: &Ctx, args: Args) -> CliResult<()> {
    let s = resolve(ctx.config.as_deref(), &args)?;
    let run = RunDir::create(ctx, "report", &s)?;
    let mut plot = csv::Writer::from_writer(Vec::new());
    let mut violations = Vec::new();
    let summary = if s.inputs.is_empty() {
        json!({ "inputs": 0 })
    } else {
        let mut readers = Vec::new();
        for path in &s.inputs {
            let (schema, r) = schema_of(path)?;
            if let Some((first, _, _)) = readers.first() {
                if *first != schema {
                    return Err(Failure::Config(format!(
                        "schema mismatch: {} is a {} table, expected {}",
                        path.display(),
                        schema.name(),
                        Schema::name(*first)
                    )));
                }
            }
            readers.push((schema, path.display().to_string(), r));
        }
        match readers[0].0 {
            Schema::Trace => {
                plot.write_record(["file", "iteration", "J", "J_latent", "L_R", "L_P"])?;
                let mut files = Vec::new();
                let mut all = Vec::new();
                let mut improvements = Vec::new();
                let mut monotone = 0;
                for (_, name, mut r) in readers {
                    let rows: Vec<TraceRow> = r.deserialize().collect::<Result<_, _>>()?;
                    for row in &rows {
                        let cell = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
                        plot.write_record([
                            name.clone(),
                            row.iteration.to_string(),
                            row.j.to_string(),
                            cell(row.j_latent),
                            cell(row.l_r),
                            cell(row.l_p),
                        ])?;
                    }
                    let agg = trace_aggregate(&rows);
                    if let Some(d) = agg["improvement"].as_f64() {
                        improvements.push(d);
                    }
                    monotone += usize::from(agg["J_nondecreasing"] == Value::Bool(true));
                    let bad = count_violations(&agg["slack"]);
                    if bad > 0 {
                        violations.push(format!("{name}: {bad} negative slacks"));
                    }
                    let mut entry = Map::new();
                    entry.insert("file".into(), name.into());
                    entry.insert("aggregate".into(), agg);
                    files.push(Value::Object(entry));
                    all.extend(rows);
                }
                let refs: Vec<&TraceRow> = all.iter().collect();
                json!({
                    "inputs": files.len(),
                    "schema": "trace",
                    "files": files,
                    "total": {
                        "rows": all.len(),
                        "nondecreasing_traces": monotone,
                        "min_improvement": improvements.iter().copied().reduce(f64::min),
                        "median_improvement": median(improvements),
                        "slack": trace_slacks(&refs),
                    },
                })
            }
            Schema::Bounds => {
                plot.write_record(["file", "instance", "theorem", "slack"])?;
                let n = readers.len();
                let mut by_theorem = BTreeMap::<String, Vec<BoundRow>>::new();
                for (_, name, mut r) in readers {
                    for row in r.deserialize::<BoundRow>() {
                        let row = row?;
                        plot.write_record([
                            name.clone(),
                            row.instance.to_string(),
                            row.theorem.clone(),
                            row.slack.to_string(),
                        ])?;
                        if !row.holds {
                            violations.push(format!(
                                "{name}: instance {} violates {}",
                                row.instance, row.theorem
                            ));
                        }
                        by_theorem.entry(row.theorem.clone()).or_default().push(row);
                    }
                }
                let theorems: Map<String, Value> = by_theorem
                    .into_iter()
                    .map(|(k, rows)| {
                        let slacks: Vec<f64> = rows.iter().map(|r| r.slack).collect();
                        let v = json!({
                            "checked": rows.len(),
                            "holds": rows.iter().filter(|r| r.holds).count(),
                            "violations": rows.iter().filter(|r| !r.holds).count(),
                            "vacuous": rows.iter().filter(|r| r.vacuous).count(),
                            "min_slack": slacks.iter().copied().reduce(f64::min),
                            "median_slack": median(slacks),
                        });
                        (k, v)
                    })
                    .collect();
                json!({ "inputs": n, "schema": "bounds", "theorems": theorems })
            }
        }
    };
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    run.write("summary.json", &text)?;
    export(args.out.as_deref(), &text)?;
    if !s.inputs.is_empty() {
        let csv = String::from_utf8(
            plot.into_inner()
                .map_err(|e| Failure::Config(e.to_string()))?,
        )
        .expect("utf-8");
        run.write("plot.csv", &csv)?;
        export(args.plot.as_deref(), &csv)?;
    }
    print!("{text}");
    fail_on(violations)
}
