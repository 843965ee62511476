//! Dense `f64` numerics shared by every other module.

mod adam;
mod eigen;
mod grad;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamState};
pub use eigen::symmetric_eigen;
pub use grad::finite_diff_grad;
pub use matrix::{matmul, DenseMatrix};
pub use rng::RngStream;

/// Relative gradient error with the `max(|a|, |b|, 1e-8)` denominator used by
/// every gradient check in the crate.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Returns `Err(NonFinite)` naming the first offending index.
pub fn ensure_finite(values: &[f64], context: &'static str) -> crate::Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(crate::Error::NonFinite {
            context,
            index: Some(i),
        }),
        None => Ok(()),
    }
}
