//! Reverse-mode differentiation over scalar primitives, plus an
//! independent central-difference checker.

mod check;
mod real;
mod tape;
mod tensor;

pub use check::{
    finite_diff, finite_diff_vec, relative_error, relative_error_params, DEFAULT_STEP,
};
pub use real::Real;
pub use tape::{Bound, GradientMap, Tape, Var};
pub use tensor::{ParamSet, Tensor};
