//! Reverse-mode automatic differentiation over [`Tensor`](crate::Tensor).

mod gradcheck;
mod ops;
mod tape;

pub use gradcheck::{grad_check, grad_check_many, GradCheckReport};
pub use ops::concat;
pub use tape::{Backward, Gradients, Tape, Var};

#[cfg(test)]
mod tests;
