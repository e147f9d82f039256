#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Random allocation of files on an infinite linear storage.

pub mod allocator;
pub mod arrivals;
pub mod cli;
pub mod config;
pub mod error;
pub mod fluctuation;
pub mod numerics;
pub mod observables;
pub mod replica;
pub mod rng;
pub mod scaling;
pub mod stats;

pub use error::{Error, Result};
