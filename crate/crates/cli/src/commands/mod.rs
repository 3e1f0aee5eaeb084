pub mod deepspi;
pub mod demo;
pub mod dream;
pub mod improve;
pub mod pac;
pub mod report;
pub mod solve;
pub mod verify;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spi_lab::envs::EnvSpec;
use spi_lab::{FiniteMdp, TabularPolicy};

use crate::config::check_path;
use crate::{envsel, CliResult, Failure};

/// Independent stream `i` of a seeded run.
pub fn stream(seed: u64, i: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(i);
    r
}

pub fn check_c(c: f64) -> CliResult<()> {
    if c > 1.0 && c < 2.0 {
        Ok(())
    } else {
        Err(spi_lab::Error::NeighborhoodConstant(c).into())
    }
}

pub fn check_positive(key: &str, x: f64) -> CliResult<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Failure::Config(format!("`{key}` = {x} must be positive")))
    }
}

pub fn fail_on(violations: Vec<String>) -> CliResult<()> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(violations.join("; ")))
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &str) -> CliResult<T> {
    let path = std::path::Path::new(path);
    check_path(path)?;
    serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Ground MDP and starting policy from either `--mdp` (with optional
/// `--policy`, default uniform) or an environment and its baseline.
pub fn ground_problem(
    env: Option<&str>,
    params: Option<&str>,
    mdp: Option<&str>,
    policy: Option<&str>,
) -> CliResult<(FiniteMdp, TabularPolicy)> {
    let (mdp, default_policy) = match (env, mdp) {
        (Some(_), Some(_)) => {
            return Err(Failure::Config(
                "give either an environment or an MDP file, not both".into(),
            ))
        }
        (None, Some(path)) => {
            let m: FiniteMdp = read_json(path)?;
            let u = TabularPolicy::uniform(m.n_states(), m.n_actions());
            (m, u)
        }
        (env, None) => {
            let EnvSpec { mdp, baseline, .. } = envsel::load(env.unwrap_or("random"), params)?;
            (mdp, baseline)
        }
    };
    let policy = match policy {
        Some(path) => read_json(path)?,
        None => default_policy,
    };
    Ok((mdp, policy))
}
