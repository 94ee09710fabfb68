//! Online clustering of bandits and related learners: robust clustering under
//! misspecification and corruption, conversational key-terms, non-stationary
//! heteroscedastic bandits and dueling feedback, plus an experiment harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cbmum;
pub mod conbandit;
pub mod dueling;
pub mod env;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod locud;
pub mod nonstat;
pub mod policy;

pub use env::{gen_env, EnvKind, EnvSpec, Environment, FeedbackEvent, Observation, Round};
pub use error::{Error, Result};
pub use graph::UserGraph;
pub use linalg::{Matrix, RidgeState, Vector};
pub use policy::{ArmPool, Context, DuelingPolicy, Policy};
