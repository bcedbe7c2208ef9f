//! The certification pipeline: split, constrained candidate selection,
//! one-shot fairness test, and explicit refusal (NSF) when confidence
//! cannot be established.

mod calibrate;
mod candidate;
mod fairness;
mod io;

pub use calibrate::{
    calibrate_adjustment, CalibrationConfig, CalibrationOutcome, CalibrationSelection,
    SweepRecord,
};
pub use candidate::{candidate_selection, TracePoint};
pub use fairness::{fairness_test, fairness_test_invocations};
pub use io::{load_output, save_output, ModelMetadata};

use serde::{Deserialize, Serialize};

use crate::data::{split_candidate_fairness, Dataset, SplitSpec};
use crate::error::CoreError;
use crate::representation::{RepresentationConfig, RepresentationModel};
use crate::stats::{psi, psi_inverse, BoundMethod, BoundResult, ConfidenceBoundSpec};
use crate::util::sha256_hex;
use crate::Result;

/// Whether the run provides the formal guarantee or the calibrated
/// practical variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Threshold is exactly `psi(epsilon)`; a Solution certifies the full
    /// downstream demographic-parity bound with confidence `1 - delta`.
    Guarantee,
    /// Threshold is `psi(epsilon) + adjustment`; a Solution certifies only
    /// the surrogate-level bound (the chain to demographic parity is
    /// heuristic).
    Practical,
}

/// Configuration of one certification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrgConfig {
    /// Demographic-parity budget, in [0, 1].
    pub epsilon: f64,
    /// Allowed failure probability, in (0, 1).
    pub delta: f64,
    pub mode: Mode,
    /// Calibrated slack added to `psi(epsilon)` in practical mode; must be
    /// zero in guarantee mode.
    #[serde(default)]
    pub adjustment: f64,
    /// Concentration tool for the confidence bounds.
    #[serde(default = "default_bound_method")]
    pub bound_method: BoundMethod,
    /// Sample range, required when `bound_method` is Hoeffding.
    #[serde(default)]
    pub hoeffding_range: Option<(f64, f64)>,
    #[serde(default)]
    pub lambda_init: f64,
    /// Dual ascent step for the Lagrange multiplier (zero disables the
    /// constraint entirely, reducing candidate selection to the plain VAE).
    pub lambda_step: f64,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub step_size: f64,
    pub representation: RepresentationConfig,
    pub seed: u64,
    /// Replace the inflated confidence bound in the training constraint by
    /// the plain sample mean (the ablation variant). The fairness test is
    /// unchanged.
    #[serde(default)]
    pub ablation: bool,
}

fn default_bound_method() -> BoundMethod {
    BoundMethod::StudentT
}

fn default_batch_size() -> usize {
    256
}

impl FrgConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || !(0.0..=1.0).contains(&self.epsilon) {
            return Err(CoreError::config(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CoreError::config(format!(
                "delta {} outside (0, 1)",
                self.delta
            )));
        }
        if self.adjustment < 0.0 || !self.adjustment.is_finite() {
            return Err(CoreError::config("adjustment must be >= 0".to_string()));
        }
        if self.mode == Mode::Guarantee && self.adjustment != 0.0 {
            return Err(CoreError::config(
                "guarantee mode requires adjustment = 0 (the threshold is exactly psi(epsilon))"
                    .to_string(),
            ));
        }
        if self.lambda_init < 0.0 || self.lambda_step < 0.0 {
            return Err(CoreError::config(
                "lambda_init and lambda_step must be >= 0".to_string(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CoreError::config(
                "epochs and batch_size must be >= 1".to_string(),
            ));
        }
        self.bound_spec(false).validate()?;
        self.representation.validate()
    }

    /// The adjustment actually applied: forced to zero under the guarantee.
    pub fn effective_adjustment(&self) -> f64 {
        match self.mode {
            Mode::Guarantee => 0.0,
            Mode::Practical => self.adjustment,
        }
    }

    /// Confidence-bound spec at this config's delta.
    pub fn bound_spec(&self, inflated: bool) -> ConfidenceBoundSpec {
        ConfidenceBoundSpec {
            method: self.bound_method,
            delta: self.delta,
            inflated,
            hoeffding_range: self.hoeffding_range,
        }
    }

    /// Stable fingerprint of the full configuration.
    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// `psi(epsilon) + adjustment`: the constant the mutual-information
/// surrogate is compared against. The tested statistic is
/// `mean per-example KL - this threshold`.
pub fn g_tilde_threshold(config: &FrgConfig, priors: &[f64]) -> Result<f64> {
    Ok(psi(config.epsilon, priors)? + config.effective_adjustment())
}

/// Diagnostics attached to a refusal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NsfDiagnostics {
    /// The failing confidence bound value (`> 0`).
    pub u_value: f64,
    pub certificate: BoundResult,
    pub threshold: f64,
}

/// Result of a certification run: a certified model or an explicit refusal.
pub enum FrgOutput {
    Solution {
        model: RepresentationModel,
        /// The passing bound on `mean KL - threshold` computed on the
        /// fairness-test split (`upper <= 0`).
        certificate: BoundResult,
        threshold: f64,
        /// Guarantee mode only: the demographic-parity bound implied by the
        /// certificate via the inverse of psi.
        implied_dp_bound: Option<f64>,
        /// True when the run carries the formal guarantee; practical-mode
        /// certificates are surrogate-level only.
        guaranteed: bool,
        config_fingerprint: String,
    },
    Nsf {
        reason: String,
        diagnostics: NsfDiagnostics,
        config_fingerprint: String,
    },
}

impl FrgOutput {
    pub fn is_solution(&self) -> bool {
        matches!(self, FrgOutput::Solution { .. })
    }

    pub fn config_fingerprint(&self) -> &str {
        match self {
            FrgOutput::Solution {
                config_fingerprint, ..
            }
            | FrgOutput::Nsf {
                config_fingerprint, ..
            } => config_fingerprint,
        }
    }
}

/// Run the full pipeline on one dataset: split, optimize a candidate under
/// the inflated constraint, then test it exactly once on held-out data.
///
/// Group priors for the threshold are estimated from the full input dataset.
/// The fairness test runs exactly once per invocation; a failed test yields
/// NSF, never a retry.
pub fn run_frg(
    d: &Dataset,
    split: &SplitSpec,
    config: &FrgConfig,
) -> Result<(FrgOutput, Vec<TracePoint>)> {
    config.validate()?;
    let priors = d.group_priors().to_vec();
    let (d_c, d_f) = split_candidate_fairness(d, split)?;
    let (model, trace) = candidate_selection(&d_c, config, &priors)?;
    let (pass, certificate) = fairness_test(&model, &d_f, config, &priors)?;
    let threshold = g_tilde_threshold(config, &priors)?;
    let fingerprint = config.fingerprint();
    let output = if pass {
        let implied_dp_bound = match config.mode {
            Mode::Guarantee => {
                // certified upper bound on the surrogate itself
                let i1_upper = (certificate.upper + threshold).max(0.0);
                Some(psi_inverse(i1_upper, &priors)?)
            }
            Mode::Practical => None,
        };
        FrgOutput::Solution {
            model,
            certificate,
            threshold,
            implied_dp_bound,
            guaranteed: config.mode == Mode::Guarantee,
            config_fingerprint: fingerprint,
        }
    } else {
        FrgOutput::Nsf {
            reason: format!(
                "fairness test failed: U = {:.6} > 0 over m = {} held-out estimates \
                 (threshold {:.6})",
                certificate.upper, certificate.m, threshold
            ),
            diagnostics: NsfDiagnostics {
                u_value: certificate.upper,
                certificate,
                threshold,
            },
            config_fingerprint: fingerprint,
        }
    };
    Ok((output, trace))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub(crate) fn tiny_rep_config(seed: u64) -> RepresentationConfig {
        RepresentationConfig {
            latent_dim: 3,
            encoder_hidden: vec![8],
            decoder_hidden: vec![8],
            init_scale: 1.0,
            seed,
        }
    }

    pub(crate) fn quick_config(epsilon: f64, delta: f64, seed: u64) -> FrgConfig {
        FrgConfig {
            epsilon,
            delta,
            mode: Mode::Guarantee,
            adjustment: 0.0,
            bound_method: BoundMethod::StudentT,
            hoeffding_range: None,
            lambda_init: 0.0,
            lambda_step: 1.0,
            epochs: 8,
            batch_size: 64,
            step_size: 2e-3,
            representation: tiny_rep_config(seed),
            seed,
            ablation: false,
        }
    }
}
