//! One-sided high-confidence upper bounds on a mean from i.i.d. samples.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::stats::student_t::t_quantile;
use crate::Result;

/// Which concentration tool backs the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    StudentT,
    Hoeffding,
}

/// Configuration of a `1 - delta` one-sided upper bound.
///
/// `inflated` doubles the interval width; candidate selection uses the
/// inflated variant to offset the repeated reuse of the same data during
/// optimization, while the fairness test uses the plain one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBoundSpec {
    pub method: BoundMethod,
    pub delta: f64,
    #[serde(default)]
    pub inflated: bool,
    /// Required for Hoeffding: (lower, upper) bounds on individual samples.
    #[serde(default)]
    pub hoeffding_range: Option<(f64, f64)>,
}

impl ConfidenceBoundSpec {
    pub fn student_t(delta: f64) -> Self {
        ConfidenceBoundSpec {
            method: BoundMethod::StudentT,
            delta,
            inflated: false,
            hoeffding_range: None,
        }
    }

    pub fn hoeffding(delta: f64, lo: f64, hi: f64) -> Self {
        ConfidenceBoundSpec {
            method: BoundMethod::Hoeffding,
            delta,
            inflated: false,
            hoeffding_range: Some((lo, hi)),
        }
    }

    pub fn with_inflated(mut self, inflated: bool) -> Self {
        self.inflated = inflated;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() || self.delta <= 0.0 || self.delta >= 1.0 {
            return Err(CoreError::config(format!(
                "delta={} outside (0, 1)",
                self.delta
            )));
        }
        match (self.method, self.hoeffding_range) {
            (BoundMethod::Hoeffding, None) => Err(CoreError::config(
                "hoeffding_range is required for the Hoeffding bound".to_string(),
            )),
            (BoundMethod::Hoeffding, Some((lo, hi))) if lo >= hi => Err(CoreError::config(
                format!("hoeffding_range ({lo}, {hi}) must satisfy lower < upper"),
            )),
            (BoundMethod::StudentT, Some(_)) => Err(CoreError::config(
                "hoeffding_range is only meaningful for the Hoeffding bound".to_string(),
            )),
            _ => Ok(()),
        }
    }
}

/// The computed bound together with the statistics behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    /// One-sided `1 - delta` upper bound on the mean; always
    /// `sample_mean + width`.
    pub upper: f64,
    pub sample_mean: f64,
    /// Sample standard deviation (Bessel-corrected).
    pub sample_std: f64,
    /// Number of samples.
    pub m: usize,
    /// Applied interval width, inflation factor included. Stored separately
    /// so that "inflation doubles the width" holds bit-exactly.
    pub width: f64,
}

/// Compute the one-sided `1 - delta` upper confidence bound on the mean of
/// `samples`.
///
/// Student-t: `mean + w * (std / sqrt(m)) * t_{1-delta, m-1}`.
/// Hoeffding: `mean + w * (hi - lo) * sqrt(ln(1/delta) / (2m))`.
/// `w = 2` when inflated, else `1`. Constant samples under Student-t yield
/// `upper == mean` (the interval width is literally zero).
pub fn upper_bound(samples: &[f64], spec: &ConfidenceBoundSpec) -> Result<BoundResult> {
    spec.validate()?;
    let m = samples.len();
    if m == 0 {
        return Err(CoreError::domain("upper_bound: no samples".to_string()));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(CoreError::domain(format!(
            "upper_bound: non-finite sample {bad}"
        )));
    }
    let mf = m as f64;
    let mean = samples.iter().sum::<f64>() / mf;
    let std = if m >= 2 {
        let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (mf - 1.0)).sqrt()
    } else {
        0.0
    };
    let w = if spec.inflated { 2.0 } else { 1.0 };
    let width = match spec.method {
        BoundMethod::StudentT => {
            if m < 2 {
                return Err(CoreError::domain(
                    "upper_bound: Student-t needs at least 2 samples (m=1 would be unbounded)"
                        .to_string(),
                ));
            }
            if std == 0.0 {
                0.0
            } else {
                (std / mf.sqrt()) * t_quantile(1.0 - spec.delta, m - 1)?
            }
        }
        BoundMethod::Hoeffding => {
            let (lo, hi) = spec.hoeffding_range.expect("validated above");
            if let Some(bad) = samples.iter().find(|&&v| v < lo || v > hi) {
                return Err(CoreError::domain(format!(
                    "upper_bound: sample {bad} outside hoeffding_range ({lo}, {hi})"
                )));
            }
            (hi - lo) * ((1.0 / spec.delta).ln() / (2.0 * mf)).sqrt()
        }
    };
    let applied = w * width;
    Ok(BoundResult {
        upper: mean + applied,
        sample_mean: mean,
        sample_std: std,
        m,
        width: applied,
    })
}
