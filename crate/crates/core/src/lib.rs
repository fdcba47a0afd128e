// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exit_analytics;
pub mod inversion;
pub mod levy_model;
mod numerics;
pub mod phi_kernel;
pub mod quadrature;
pub mod simulator;
pub mod stats;
pub mod validation;
