// `!(x > 0.0)` is used throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod colorimetry;
pub mod compensation;
pub mod error;
pub mod fitting;
pub mod kernels;
pub mod lhei;
pub mod plane;
pub mod retina;
pub mod stimuli;
