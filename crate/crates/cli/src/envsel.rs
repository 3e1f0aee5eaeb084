//! `--env` / `--params` resolution into an [`EnvSpec`].

use std::collections::BTreeMap;
use std::path::Path;

use spi_lab::envs::{
    build_fig1, build_fig2, random_episodic, suite_params, EnvSpec, Fig1Params, Fig2Params,
};

use crate::config::check_path;
use crate::{CliResult, Failure};

const FIG1_KEYS: &[&str] = &[
    "epsilon",
    "drift",
    "p_term",
    "p_end",
    "s3_reward",
    "corrupt_reward",
    "discount",
    "n1",
    "n2",
    "n3",
    "n4",
];
const FIG2_KEYS: &[&str] = &["epsilon", "zeta", "discount", "split"];
const RANDOM_KEYS: &[&str] = &[
    "suite_seed",
    "instance",
    "n_states",
    "n_actions",
    "seed",
    "branching",
    "discount",
];

/// Parses `k=v,k=v`. Keys must be distinct.
pub fn parse_params(text: Option<&str>) -> CliResult<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in text
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        let (k, v) = item.split_once('=').ok_or_else(|| {
            Failure::Config(format!("parameter `{item}` is not of the form key=value"))
        })?;
        let value: f64 = match v.trim() {
            "true" => 1.0,
            "false" => 0.0,
            s => s.parse().map_err(|_| {
                Failure::Config(format!("parameter `{k}` has non-numeric value `{v}`"))
            })?,
        };
        if out.insert(k.trim().to_string(), value).is_some() {
            return Err(Failure::Config(format!("parameter `{k}` given twice")));
        }
    }
    Ok(out)
}

fn check_keys(env: &str, params: &BTreeMap<String, f64>, allowed: &[&str]) -> CliResult<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Failure::Config(format!(
            "unknown {env} parameter `{k}`; expected one of {}",
            allowed.join(", ")
        ))),
        None => Ok(()),
    }
}

fn count(key: &str, v: f64) -> CliResult<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Failure::Config(format!(
            "parameter `{key}` = {v} must be a nonnegative integer"
        )))
    }
}

pub fn fig1_params(params: &BTreeMap<String, f64>) -> CliResult<Fig1Params> {
    check_keys("fig1", params, FIG1_KEYS)?;
    let mut p = Fig1Params::default();
    for (k, &v) in params {
        match k.as_str() {
            "epsilon" => p.epsilon = v,
            "drift" => p.drift = v,
            "p_term" => p.p_term = v,
            "p_end" => p.p_end = v,
            "s3_reward" => p.s3_reward = v,
            "corrupt_reward" => p.corrupt_reward = v,
            "discount" => p.discount = v,
            region => {
                let i = region[1..].parse::<usize>().expect("checked key") - 1;
                p.region_sizes[i] = count(k, v)?;
            }
        }
    }
    Ok(p)
}

pub fn fig2_params(params: &BTreeMap<String, f64>) -> CliResult<Fig2Params> {
    check_keys("fig2", params, FIG2_KEYS)?;
    let mut p = Fig2Params::default();
    for (k, &v) in params {
        match k.as_str() {
            "epsilon" => p.epsilon = v,
            "zeta" => p.zeta = v,
            "discount" => p.discount = v,
            _ => p.split = v != 0.0,
        }
    }
    Ok(p)
}

/// Instance `instance` of the suite seeded by `suite_seed` (both default 0),
/// with any explicitly given generator fields overriding the drawn ones.
pub fn random_spec(params: &BTreeMap<String, f64>) -> CliResult<EnvSpec> {
    check_keys("random", params, RANDOM_KEYS)?;
    let get = |k: &str| params.get(k).copied();
    let suite_seed = count("suite_seed", get("suite_seed").unwrap_or(0.0))? as u64;
    let mut p = suite_params(
        suite_seed,
        count("instance", get("instance").unwrap_or(0.0))?,
    );
    if let Some(v) = get("n_states") {
        p.n_states = count("n_states", v)?;
    }
    if let Some(v) = get("n_actions") {
        p.n_actions = count("n_actions", v)?;
    }
    if let Some(v) = get("seed") {
        p.seed = count("seed", v)? as u64;
    }
    if let Some(v) = get("branching") {
        p.branching = count("branching", v)?;
    }
    if let Some(v) = get("discount") {
        p.discount = v;
    }
    Ok(random_episodic(&p)?)
}

/// `fig1`, `fig2`, `random` or the path of an environment JSON file.
pub fn load(env: &str, params: Option<&str>) -> CliResult<EnvSpec> {
    let parsed = parse_params(params)?;
    match env {
        "fig1" => Ok(build_fig1(&fig1_params(&parsed)?)?),
        "fig2" => Ok(build_fig2(&fig2_params(&parsed)?)?),
        "random" => random_spec(&parsed),
        path => {
            if !parsed.is_empty() {
                return Err(Failure::Config(
                    "--params only applies to built-in environments".into(),
                ));
            }
            let path = Path::new(path);
            check_path(path).map_err(|_| {
                Failure::Config(format!(
                    "environment `{}` is neither fig1, fig2, random nor an existing file",
                    path.display()
                ))
            })?;
            Ok(EnvSpec::from_json(&std::fs::read_to_string(path)?)?)
        }
    }
}
