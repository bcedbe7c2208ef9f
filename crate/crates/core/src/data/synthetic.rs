//! Synthetic binary-feature datasets with controllable sensitive-attribute
//! leakage.
//!
//! Generative process, in order, all driven by one seed:
//!
//! 1. per-feature base logits `b_j ~ N(0, 0.5)`;
//! 2. per-group offset vectors `o_kj ~ N(0, 1)`;
//! 3. label weights `w_j ~ N(0, weight_scale)`;
//! 4. for each row: `s_i ~ categorical(priors)`,
//!    `x_ij ~ Bernoulli(sigmoid(b_j + 3 * leakage * o_{s_i, j}))`,
//!    `y_i ~ Bernoulli(sigmoid(sum_j w_j (x_ij - 0.5) + bias))`.
//!
//! `leakage = 0` makes X statistically independent of S; `leakage = 1` makes
//! group membership strongly recoverable from X.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind};
use crate::error::CoreError;
use crate::neural::sigmoid;
use crate::Result;

/// Gain applied to the group offsets at full leakage.
const OFFSET_GAIN: f64 = 3.0;

/// Parameters of the logistic ground-truth labeler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRule {
    pub weight_scale: f64,
    pub bias: f64,
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule {
            weight_scale: 1.5,
            bias: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    /// Target group priors; uniform when empty.
    #[serde(default)]
    pub priors: Vec<f64>,
    /// How strongly S is encoded in X, in [0, 1].
    pub leakage: f64,
    #[serde(default)]
    pub label_rule: LabelRule,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, k: usize, leakage: f64, seed: u64) -> Self {
        SyntheticSpec {
            n,
            d,
            k,
            priors: Vec::new(),
            leakage,
            label_rule: LabelRule::default(),
            seed,
        }
    }

    fn resolved_priors(&self) -> Vec<f64> {
        if self.priors.is_empty() {
            vec![1.0 / self.k as f64; self.k]
        } else {
            self.priors.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(CoreError::config("need at least 2 groups".to_string()));
        }
        if self.d < 1 {
            return Err(CoreError::config("need at least 1 feature".to_string()));
        }
        if self.n < self.k * 2 {
            return Err(CoreError::config(format!(
                "n={} too small for {} groups",
                self.n, self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.leakage) {
            return Err(CoreError::config(format!(
                "leakage {} outside [0, 1]",
                self.leakage
            )));
        }
        if !self.priors.is_empty() {
            if self.priors.len() != self.k {
                return Err(CoreError::config("priors length != k".to_string()));
            }
            crate::stats::validate_priors(&self.priors)?;
        }
        Ok(())
    }
}

/// Deterministic synthetic dataset with one label task named `"label"`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal_half = Normal::new(0.0, 0.5).unwrap();
    let normal_unit = Normal::new(0.0, 1.0).unwrap();
    let normal_w = Normal::new(0.0, spec.label_rule.weight_scale).unwrap();

    let base: Vec<f64> = (0..spec.d).map(|_| normal_half.sample(&mut rng)).collect();
    let offsets: Vec<Vec<f64>> = (0..spec.k)
        .map(|_| (0..spec.d).map(|_| normal_unit.sample(&mut rng)).collect())
        .collect();
    let weights: Vec<f64> = (0..spec.d).map(|_| normal_w.sample(&mut rng)).collect();
    let priors = spec.resolved_priors();

    let mut features = Array2::zeros((spec.n, spec.d));
    let mut sensitive = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        // ensure every group appears even at tiny n
        let s = if i < spec.k {
            i
        } else {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = spec.k - 1;
            for (k, &p) in priors.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            chosen
        };
        sensitive.push(s);
        let mut score = spec.label_rule.bias;
        for j in 0..spec.d {
            let p = sigmoid(base[j] + OFFSET_GAIN * spec.leakage * offsets[s][j]);
            let x = f64::from(rng.gen::<f64>() < p);
            features[[i, j]] = x;
            score += weights[j] * (x - 0.5);
        }
        labels.push(u8::from(rng.gen::<f64>() < sigmoid(score)));
    }

    let mut label_map = BTreeMap::new();
    label_map.insert("label".to_string(), labels);
    Dataset::new(features, sensitive, label_map, spec.k, FeatureKind::Binary)
}
