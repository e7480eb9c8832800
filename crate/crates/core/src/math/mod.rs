//! Numerical kernels: special functions, stable reductions and small dense
//! linear algebra. Everything here is a pure function of its inputs.

mod cholesky;
mod matrix;
mod special;

pub use cholesky::{cholesky, log_wishart_normalizer, CholeskyFactor};
pub(crate) use cholesky::log_wishart_normalizer_parts;
pub use matrix::{dot, Matrix};
pub use special::{digamma, ln_gamma, ln_multigamma, log_sum_exp};
pub(crate) use special::{digamma_unchecked, log_sum_exp_unchecked};
