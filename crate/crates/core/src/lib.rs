#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod container;
pub mod corpus;
pub mod denoiser;
pub mod encoders;
pub mod error;
pub mod numerics;
pub mod objectives;
pub mod pipeline;
pub mod sampler;
pub mod schedule;

pub use error::{Error, FormatError, Result};
