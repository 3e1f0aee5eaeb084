//! Exact finite-MDP laboratory for safe policy improvement with latent world
//! models: losses, importance-ratio neighborhoods, mirror-learning updates,
//! clipped surrogates and checkable versions of the value and improvement
//! bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod digest;
pub mod envs;
pub mod error;
pub mod guarantees;
pub mod latent;
pub mod losses;
pub mod mdp;
pub mod neighborhood;
pub mod surrogate;
pub mod transport;

pub use error::{Error, Result};
pub use mdp::{FiniteMdp, StationaryDist, TabularPolicy, TransitionBatch, ValueTables};
