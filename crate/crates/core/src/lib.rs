// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod systems;
pub mod preprocess;
pub mod datagen;
pub mod nn;
pub mod eval;
pub mod config;
pub mod experiment;
