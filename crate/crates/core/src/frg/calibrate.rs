//! Calibration of the practical-mode adjustment.
//!
//! The practical threshold `psi(epsilon) + adjustment` needs an adjustment
//! that under-estimates the slack between the tractable surrogate and the
//! quantity `psi` actually bounds. The procedure: sweep a penalty weight on
//! the surrogate term, training one model per weight on the candidate
//! split; keep the models whose downstream demographic parity lands inside
//! `[epsilon - c, epsilon]`; order the kept surrogate values ascending and
//! pick the k-th percentile (exact ties broken by the best downstream AUC);
//! the adjustment is that surrogate value minus `psi(epsilon)`. An empty
//! qualifying set is the refusal outcome: the pipeline should report NSF
//! rather than guess.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::CoreError;
use crate::eval::{auc, delta_dp, embed, train_downstream, DownstreamConfig, EmbedMode};
use crate::neural::{Optimizer, OptimizerConfig};
use crate::representation::{
    run_epoch, Likelihood, RepresentationConfig, RepresentationModel,
};
use crate::stats::psi;
use crate::util::derive_seed;
use crate::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Width of the target band below epsilon: models qualify when their
    /// demographic parity lies in `[epsilon - c, epsilon]`.
    pub c: f64,
    /// Percentile (0..=100) of the ascending qualifying surrogate values.
    pub k_percentile: f64,
    /// Penalty weights to sweep; one model is trained per entry.
    pub sweep: Vec<f64>,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub step_size: f64,
    pub representation: RepresentationConfig,
    pub downstream: DownstreamConfig,
    /// Which label task drives the demographic-parity and AUC measurements.
    pub task: String,
    pub seed: u64,
}

fn default_batch() -> usize {
    256
}

impl CalibrationConfig {
    pub fn validate(&self, epsilon: f64) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(CoreError::config("empty calibration sweep".to_string()));
        }
        if !(0.0..=epsilon).contains(&self.c) {
            return Err(CoreError::config(format!(
                "band width c={} outside [0, epsilon={epsilon}]",
                self.c
            )));
        }
        if !(0.0..=100.0).contains(&self.k_percentile) {
            return Err(CoreError::config(format!(
                "k_percentile {} outside [0, 100]",
                self.k_percentile
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CoreError::config(
                "epochs and batch_size must be >= 1".to_string(),
            ));
        }
        self.representation.validate()?;
        self.downstream.validate()
    }
}

/// One row of the sweep table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub penalty: f64,
    pub delta_dp: f64,
    pub i1: f64,
    pub auc: f64,
    pub qualified: bool,
}

/// The chosen sweep entry and the resulting adjustment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSelection {
    /// Index into the sweep records.
    pub index: usize,
    pub i1: f64,
    pub psi_epsilon: f64,
    /// `i1 - psi_epsilon`, clamped at zero.
    pub adjustment: f64,
}

/// Full calibration outcome. `selection` is `None` when no swept model
/// landed in the target band — the refusal case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub records: Vec<SweepRecord>,
    pub selection: Option<CalibrationSelection>,
}

impl CalibrationOutcome {
    pub fn adjustment(&self) -> Option<f64> {
        self.selection.as_ref().map(|s| s.adjustment)
    }
}

/// Train one surrogate-penalized model: the objective is the ELBO plus
/// `penalty * mean KL`, a fixed-weight stand-in for a multiplier-constrained
/// trainer that only needs to span a range of (demographic parity,
/// surrogate) operating points.
fn train_penalized(
    d: &Dataset,
    penalty: f64,
    config: &CalibrationConfig,
    seed: u64,
) -> Result<RepresentationModel> {
    let mut rep = config.representation.clone();
    rep.seed = derive_seed(seed, 0);
    let mut model = RepresentationModel::new(
        d.dim(),
        d.n_groups(),
        Likelihood::for_features(d.feature_kind()),
        rep,
    )?;
    let mut optimizer = Optimizer::new(OptimizerConfig::with_step_size(config.step_size))?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    for _ in 0..config.epochs {
        run_epoch(
            &mut model,
            d,
            config.batch_size,
            &mut shuffle_rng,
            &mut noise_rng,
            |m, x, s, noise| {
                m.zero_grad();
                let fp = m.forward_pass(x, s, noise)?;
                let w = ndarray::Array1::from_elem(x.nrows(), penalty / x.nrows() as f64);
                m.backward_pass(&fp, x, s, Some(&w))?;
                let mut params = m.params_mut();
                optimizer.step(&mut params)
            },
        )?;
    }
    Ok(model)
}

/// Run the sweep and select the adjustment. Demographic parity, surrogate,
/// and AUC are all measured on the candidate split itself (the held-out
/// fairness split stays untouched, reserved for the single test).
pub fn calibrate_adjustment(
    d_c: &Dataset,
    epsilon: f64,
    calib: &CalibrationConfig,
) -> Result<CalibrationOutcome> {
    calib.validate(epsilon)?;
    let y = d_c.label(&calib.task).ok_or_else(|| {
        CoreError::data(format!(
            "calibration needs labels for task '{}' on the candidate split",
            calib.task
        ))
    })?;
    let y = y.to_vec();
    let psi_epsilon = psi(epsilon, d_c.group_priors())?;

    let mut records = Vec::with_capacity(calib.sweep.len());
    for (i, &penalty) in calib.sweep.iter().enumerate() {
        if penalty < 0.0 || !penalty.is_finite() {
            return Err(CoreError::config(format!(
                "sweep penalty {penalty} must be finite and >= 0"
            )));
        }
        let model = train_penalized(d_c, penalty, calib, derive_seed(calib.seed, i as u64))?;
        let z = embed(&model, d_c, EmbedMode::Mean, derive_seed(calib.seed, 900 + i as u64))?;
        let mut ds_cfg = calib.downstream.clone();
        ds_cfg.seed = derive_seed(calib.seed, 500 + i as u64);
        let downstream = train_downstream(&z, &y, &ds_cfg)?;
        let preds = downstream.predict(&z)?;
        let dp = delta_dp(&preds, d_c.sensitive(), d_c.n_groups())?;
        let scores = downstream.scores(&z)?;
        let task_auc = auc(&scores, &y)?;
        let (i1, _) = model.estimate_i1(d_c)?;
        let qualified = dp >= epsilon - calib.c && dp <= epsilon;
        records.push(SweepRecord {
            penalty,
            delta_dp: dp,
            i1,
            auc: task_auc,
            qualified,
        });
    }

    let mut qualifying: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].qualified)
        .collect();
    if qualifying.is_empty() {
        return Ok(CalibrationOutcome {
            records,
            selection: None,
        });
    }
    // ascending surrogate order; nearest-rank percentile over q entries
    qualifying.sort_by(|&a, &b| records[a].i1.partial_cmp(&records[b].i1).unwrap());
    let q = qualifying.len();
    let pos = ((calib.k_percentile / 100.0) * (q - 1) as f64).round() as usize;
    let chosen_i1 = records[qualifying[pos]].i1;
    // exact surrogate ties break toward the best downstream performance
    let index = qualifying
        .iter()
        .copied()
        .filter(|&i| records[i].i1 == chosen_i1)
        .max_by(|&a, &b| records[a].auc.partial_cmp(&records[b].auc).unwrap())
        .unwrap();
    let chosen = records[index].i1;
    let adjustment = (chosen - psi_epsilon).max(0.0);
    Ok(CalibrationOutcome {
        records,
        selection: Some(CalibrationSelection {
            index,
            i1: chosen,
            psi_epsilon,
            adjustment,
        }),
    })
}
