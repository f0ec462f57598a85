#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod datagen;
pub mod dcr;
pub mod error;
pub mod htenet;
pub mod metrics;
pub mod numerics;

pub use error::{Error, Result};
