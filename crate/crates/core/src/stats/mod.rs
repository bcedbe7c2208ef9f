//! Closed-form statistics: the `f`/`psi` bound family, Student-t quantiles,
//! and the high-confidence upper bounds used by the fairness test and by
//! candidate selection.

mod bounds;
mod psi;
pub mod special;
mod student_t;

pub use bounds::{upper_bound, BoundMethod, BoundResult, ConfidenceBoundSpec};
pub use psi::{helper_f, psi, psi_binary, psi_inverse, psi_multinomial};
pub use student_t::{t_cdf, t_pdf, t_quantile};

pub(crate) use psi::validate_priors;
