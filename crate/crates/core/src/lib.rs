// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod autodiff;
pub mod config;
pub mod corpus;
pub mod gan;
pub mod rng;
pub mod synth;
pub mod train;
pub mod vocab;
