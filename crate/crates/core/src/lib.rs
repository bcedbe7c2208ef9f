//! Fair representation learning with high-confidence guarantees.
//!
//! The toolkit trains stochastic encoders whose latent representations are
//! certified, with probability at least `1 - delta`, to keep the demographic
//! parity violation of *every* downstream classifier below a user-chosen
//! `epsilon`. The certificate chains three pieces:
//!
//! 1. a closed-form function `psi` relating mutual information `I(Z;S)` to a
//!    bound on demographic parity (see [`stats`]),
//! 2. a tractable surrogate for `I(Z;S)` — the expected KL divergence between
//!    the encoder posterior and the standard-normal prior (see
//!    [`representation`]),
//! 3. a one-sided confidence upper bound (Student's t or Hoeffding) on that
//!    surrogate, evaluated once on held-out data (see [`frg`]).
//!
//! Training either satisfies the resulting constraint and returns a certified
//! model, or explicitly refuses with "No Solution Found" (NSF). The [`eval`]
//! module measures what the certificate promises: demographic parity and AUC
//! of downstream models over many resampled trials.

pub mod data;
pub mod error;
pub mod eval;
pub mod frg;
pub mod neural;
pub mod representation;
pub mod stats;
pub mod util;

pub use error::CoreError;

/// Library result type.
pub type Result<T> = std::result::Result<T, CoreError>;
