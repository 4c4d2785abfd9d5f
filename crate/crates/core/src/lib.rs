//! Headless character-control sandbox for reinforcement learning.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controller;
pub mod curiosity;
pub mod env;
pub mod error;
pub mod harness;
pub mod math;
pub mod neural;
pub mod ppo;
pub mod rewards;
pub mod rng;
pub mod run;
pub mod sensors;
pub mod world;

pub use error::{Error, Result};
pub use run::{NetworkConfig, RunConfig};
