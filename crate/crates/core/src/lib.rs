// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod knowledge;
pub mod model;
pub mod pnm;
pub mod rng;
pub mod synthdata;
pub mod train;
