//! Sensitivity analysis for matched pairs with continuous or ordinal
//! treatment doses under generalized Rosenbaum bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod dgp;
pub mod error;
pub mod exact;
pub mod expr;
pub mod gamma;
pub mod mc;
pub mod normal;
pub mod pairs;
pub mod scores;
pub mod sharp;
pub mod sim;
pub mod weak_null;

pub use error::{Error, Result};
