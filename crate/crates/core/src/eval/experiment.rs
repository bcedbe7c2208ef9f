//! The multi-trial evaluation protocol.
//!
//! Hold out a stratified test split, build bootstrap-resampled training
//! datasets at several fractions, run each method once per training
//! dataset, then measure every returned representation on the common test
//! split: train a downstream classifier per task on the trial's training
//! embeddings and record its demographic parity and AUC on the test
//! embeddings. Refusals (NSF) are recorded as non-violating and enter the
//! solution rate instead.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{resample_trials, split_candidate_fairness, Dataset, SplitSpec};
use crate::error::CoreError;
use crate::eval::downstream::{embed, train_downstream, DownstreamConfig, EmbedMode};
use crate::eval::metrics::{auc, delta_dp};
use crate::frg::{run_frg, FrgConfig, FrgOutput, Mode};
use crate::representation::{vae_train, RepresentationConfig, RepresentationModel, TrainConfig};
use crate::stats::{BoundMethod, BoundResult};
use crate::util::derive_seed;
use crate::Result;

/// The algorithms the protocol compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// Full pipeline, threshold exactly `psi(epsilon)`.
    FrgGuarantee,
    /// Full pipeline with the calibrated adjustment.
    FrgPractical,
    /// Practical threshold but the training constraint is the plain mean.
    FrgAblation,
    /// Unconstrained autoencoder baseline (never refuses).
    Vae,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::FrgGuarantee => "frg_guarantee",
            MethodKind::FrgPractical => "frg_practical",
            MethodKind::FrgAblation => "frg_ablation",
            MethodKind::Vae => "vae",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub methods: Vec<MethodKind>,
    pub epsilon: f64,
    pub delta: f64,
    /// Practical-mode slack (`threshold = psi(epsilon) + adjustment`);
    /// ignored by the guarantee method.
    #[serde(default)]
    pub adjustment: f64,
    /// Share of the data held out as the common test set.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub n_resamples: usize,
    pub fractions: Vec<f64>,
    /// Candidate share of each trial's inner split.
    #[serde(default = "default_candidate_fraction")]
    pub candidate_fraction: f64,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub step_size: f64,
    #[serde(default)]
    pub lambda_init: f64,
    pub lambda_step: f64,
    pub representation: RepresentationConfig,
    pub downstream: DownstreamConfig,
    /// Label tasks to evaluate; all dataset labels when empty.
    #[serde(default)]
    pub tasks: Vec<String>,
    pub seed: u64,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_candidate_fraction() -> f64 {
    0.6
}

fn default_batch_size() -> usize {
    256
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(CoreError::config("no methods listed".to_string()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CoreError::config(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            )));
        }
        if !(self.candidate_fraction > 0.0 && self.candidate_fraction < 1.0) {
            return Err(CoreError::config(format!(
                "candidate_fraction {} outside (0, 1)",
                self.candidate_fraction
            )));
        }
        self.frg_config(MethodKind::FrgGuarantee, 0).validate()?;
        self.downstream.validate()
    }

    /// Materialize the per-trial pipeline configuration for a method.
    pub fn frg_config(&self, method: MethodKind, trial_seed: u64) -> FrgConfig {
        let (mode, adjustment, ablation) = match method {
            MethodKind::FrgGuarantee => (Mode::Guarantee, 0.0, false),
            MethodKind::FrgPractical => (Mode::Practical, self.adjustment, false),
            MethodKind::FrgAblation => (Mode::Practical, self.adjustment, true),
            MethodKind::Vae => (Mode::Guarantee, 0.0, false),
        };
        let mut representation = self.representation.clone();
        representation.seed = derive_seed(trial_seed, 5);
        FrgConfig {
            epsilon: self.epsilon,
            delta: self.delta,
            mode,
            adjustment,
            bound_method: BoundMethod::StudentT,
            hoeffding_range: None,
            lambda_init: self.lambda_init,
            lambda_step: self.lambda_step,
            epochs: self.epochs,
            batch_size: self.batch_size,
            step_size: self.step_size,
            representation,
            seed: trial_seed,
            ablation,
        }
    }
}

/// Downstream measurements for one task of one trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskEval {
    pub delta_dp: f64,
    pub auc: f64,
}

/// Everything recorded about one (method, training dataset) run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial_id: usize,
    pub method: MethodKind,
    pub resample: usize,
    pub fraction: f64,
    pub solution: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nsf_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<BoundResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Per-task downstream measurements; empty for refusals and errors.
    pub per_task: BTreeMap<String, TaskEval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One row of the per-fraction summary table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: String,
    pub method: MethodKind,
    pub fraction: f64,
    pub n_trials: usize,
    /// Fraction of trials returning a model (not NSF, not errored).
    pub solution_rate: f64,
    /// Fraction of trials whose returned model violates
    /// `delta_dp <= epsilon` on the test set; refusals count as satisfying.
    pub violation_rate: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub mean_delta_dp: f64,
    pub std_delta_dp: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub reports: Vec<TrialReport>,
    pub aggregates: Vec<AggregateRow>,
}

fn evaluate_model_on_tasks(
    model: &RepresentationModel,
    train_data: &Dataset,
    test: &Dataset,
    tasks: &[String],
    downstream: &DownstreamConfig,
    trial_seed: u64,
) -> Result<BTreeMap<String, TaskEval>> {
    let z_train = embed(model, train_data, EmbedMode::Mean, derive_seed(trial_seed, 20))?;
    let z_test = embed(model, test, EmbedMode::Mean, derive_seed(trial_seed, 21))?;
    let mut out = BTreeMap::new();
    for (t_idx, task) in tasks.iter().enumerate() {
        let y_train = train_data
            .label(task)
            .ok_or_else(|| CoreError::data(format!("task '{task}' missing from trial data")))?;
        let y_test = test
            .label(task)
            .ok_or_else(|| CoreError::data(format!("task '{task}' missing from test data")))?;
        let mut ds_cfg = downstream.clone();
        ds_cfg.seed = derive_seed(trial_seed, 30 + t_idx as u64);
        let classifier = train_downstream(&z_train, y_train, &ds_cfg)?;
        let preds = classifier.predict(&z_test)?;
        let dp = delta_dp(&preds, test.sensitive(), test.n_groups())?;
        let scores = classifier.scores(&z_test)?;
        let task_auc = auc(&scores, y_test)?;
        out.insert(
            task.clone(),
            TaskEval {
                delta_dp: dp,
                auc: task_auc,
            },
        );
    }
    Ok(out)
}

fn run_one_trial(
    method: MethodKind,
    trial_id: usize,
    resample: usize,
    fraction: f64,
    train_data: &Dataset,
    test: &Dataset,
    tasks: &[String],
    config: &ProtocolConfig,
    trial_seed: u64,
) -> TrialReport {
    let mut report = TrialReport {
        trial_id,
        method,
        resample,
        fraction,
        solution: false,
        nsf_reason: None,
        certificate: None,
        threshold: None,
        per_task: BTreeMap::new(),
        error: None,
    };
    let outcome: Result<()> = (|| {
        match method {
            MethodKind::Vae => {
                let mut rep = config.representation.clone();
                rep.seed = derive_seed(trial_seed, 5);
                let train_cfg = TrainConfig {
                    epochs: config.epochs,
                    batch_size: config.batch_size,
                    step_size: config.step_size,
                    seed: trial_seed,
                };
                let (model, _) = vae_train(train_data, &rep, &train_cfg)?;
                report.solution = true;
                report.per_task = evaluate_model_on_tasks(
                    &model,
                    train_data,
                    test,
                    tasks,
                    &config.downstream,
                    trial_seed,
                )?;
            }
            _ => {
                let frg_cfg = config.frg_config(method, trial_seed);
                let split = SplitSpec {
                    candidate_fraction: config.candidate_fraction,
                    seed: derive_seed(trial_seed, 1),
                    stratify_on_sensitive: true,
                };
                let (output, _) = run_frg(train_data, &split, &frg_cfg)?;
                match output {
                    FrgOutput::Solution {
                        model,
                        certificate,
                        threshold,
                        ..
                    } => {
                        report.solution = true;
                        report.certificate = Some(certificate);
                        report.threshold = Some(threshold);
                        report.per_task = evaluate_model_on_tasks(
                            &model,
                            train_data,
                            test,
                            tasks,
                            &config.downstream,
                            trial_seed,
                        )?;
                    }
                    FrgOutput::Nsf {
                        reason,
                        diagnostics,
                        ..
                    } => {
                        report.nsf_reason = Some(reason);
                        report.certificate = Some(diagnostics.certificate);
                        report.threshold = Some(diagnostics.threshold);
                    }
                }
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        report.solution = false;
        report.per_task.clear();
        report.error = Some(e.to_string());
    }
    report
}

/// Run the whole protocol. Trials execute in parallel; every trial is a
/// pure function of the root seed and its index, so results are
/// reproducible regardless of scheduling.
pub fn run_experiment(d: &Dataset, config: &ProtocolConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let tasks: Vec<String> = if config.tasks.is_empty() {
        d.labels().keys().cloned().collect()
    } else {
        config.tasks.clone()
    };
    if tasks.is_empty() {
        return Err(CoreError::config(
            "dataset has no labels and no tasks were listed".to_string(),
        ));
    }
    let holdout = SplitSpec {
        candidate_fraction: 1.0 - config.test_fraction,
        seed: derive_seed(config.seed, 100),
        stratify_on_sensitive: true,
    };
    let (train_pool, test) = split_candidate_fairness(d, &holdout)?;
    let trials = resample_trials(
        &train_pool,
        config.n_resamples,
        &config.fractions,
        derive_seed(config.seed, 200),
    )?;

    let mut jobs = Vec::new();
    for (m_idx, &method) in config.methods.iter().enumerate() {
        for t_idx in 0..trials.len() {
            let trial_id = m_idx * trials.len() + t_idx;
            let trial_seed = derive_seed(config.seed, 10_000 + trial_id as u64);
            jobs.push((method, trial_id, t_idx, trial_seed));
        }
    }
    let reports: Vec<TrialReport> = jobs
        .par_iter()
        .map(|&(method, trial_id, t_idx, trial_seed)| {
            let trial = &trials[t_idx];
            run_one_trial(
                method,
                trial_id,
                trial.resample,
                trial.fraction,
                &trial.data,
                &test,
                &tasks,
                config,
                trial_seed,
            )
        })
        .collect();

    let aggregates = aggregate(&reports, &tasks, config.epsilon, &config.fractions);
    Ok(ExperimentResult {
        reports,
        aggregates,
    })
}

/// Fold trial reports into per (task, method, fraction) rows. Exactly
/// recomputable from the reports.
pub fn aggregate(
    reports: &[TrialReport],
    tasks: &[String],
    epsilon: f64,
    fractions: &[f64],
) -> Vec<AggregateRow> {
    let mut methods: Vec<MethodKind> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut rows = Vec::new();
    for task in tasks {
        for &method in &methods {
            for &fraction in fractions {
                let subset: Vec<&TrialReport> = reports
                    .iter()
                    .filter(|r| r.method == method && r.fraction == fraction)
                    .collect();
                if subset.is_empty() {
                    continue;
                }
                let n_trials = subset.len();
                let solutions: Vec<&&TrialReport> =
                    subset.iter().filter(|r| r.solution).collect();
                let violations = solutions
                    .iter()
                    .filter(|r| {
                        r.per_task
                            .get(task)
                            .map(|t| t.delta_dp > epsilon)
                            .unwrap_or(false)
                    })
                    .count();
                let dps: Vec<f64> = solutions
                    .iter()
                    .filter_map(|r| r.per_task.get(task).map(|t| t.delta_dp))
                    .collect();
                let aucs: Vec<f64> = solutions
                    .iter()
                    .filter_map(|r| r.per_task.get(task).map(|t| t.auc))
                    .collect();
                let mean = |v: &[f64]| {
                    if v.is_empty() {
                        f64::NAN
                    } else {
                        v.iter().sum::<f64>() / v.len() as f64
                    }
                };
                let std = |v: &[f64]| {
                    if v.len() < 2 {
                        0.0
                    } else {
                        let m = mean(v);
                        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                            / (v.len() - 1) as f64)
                            .sqrt()
                    }
                };
                rows.push(AggregateRow {
                    task: task.clone(),
                    method,
                    fraction,
                    n_trials,
                    solution_rate: solutions.len() as f64 / n_trials as f64,
                    violation_rate: violations as f64 / n_trials as f64,
                    mean_auc: mean(&aucs),
                    std_auc: std(&aucs),
                    mean_delta_dp: mean(&dps),
                    std_delta_dp: std(&dps),
                });
            }
        }
    }
    rows
}

/// Render the aggregate table as CSV (stable column order and row order).
pub fn aggregates_to_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from(
        "task,method,fraction,n_trials,solution_rate,violation_rate,\
         mean_auc,std_auc,mean_delta_dp,std_delta_dp\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.task,
            r.method.as_str(),
            r.fraction,
            r.n_trials,
            r.solution_rate,
            r.violation_rate,
            r.mean_auc,
            r.std_auc,
            r.mean_delta_dp,
            r.std_delta_dp
        ));
    }
    s
}

/// Render trial reports as line-delimited JSON.
pub fn reports_to_jsonl(reports: &[TrialReport]) -> Result<String> {
    let mut s = String::new();
    for r in reports {
        s.push_str(
            &serde_json::to_string(r).map_err(|e| CoreError::serialization(e.to_string()))?,
        );
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn quick_protocol(methods: Vec<MethodKind>, seed: u64) -> ProtocolConfig {
        ProtocolConfig {
            methods,
            epsilon: 0.9,
            delta: 0.1,
            adjustment: 0.0,
            test_fraction: 0.2,
            n_resamples: 2,
            fractions: vec![1.0],
            candidate_fraction: 0.6,
            epochs: 3,
            batch_size: 64,
            step_size: 2e-3,
            lambda_init: 0.0,
            lambda_step: 1.0,
            representation: RepresentationConfig {
                latent_dim: 3,
                encoder_hidden: vec![8],
                decoder_hidden: vec![8],
                init_scale: 1.0,
                seed: 0,
            },
            downstream: DownstreamConfig {
                epochs: 10,
                ..DownstreamConfig::default()
            },
            tasks: vec![],
            seed,
        }
    }

    #[test]
    fn vae_trials_always_return_solutions() {
        let d = generate_synthetic(&SyntheticSpec::new(400, 6, 2, 0.5, 1)).unwrap();
        let config = quick_protocol(vec![MethodKind::Vae], 3);
        let result = run_experiment(&d, &config).unwrap();
        assert_eq!(result.reports.len(), 2);
        assert!(result.reports.iter().all(|r| r.solution));
        assert!(result
            .reports
            .iter()
            .all(|r| r.per_task.contains_key("label")));
        let row = &result.aggregates[0];
        assert_eq!(row.n_trials, 2);
        assert_eq!(row.solution_rate, 1.0);
    }

    #[test]
    fn aggregates_recomputable_from_reports() {
        let d = generate_synthetic(&SyntheticSpec::new(400, 6, 2, 0.5, 2)).unwrap();
        let config = quick_protocol(vec![MethodKind::Vae, MethodKind::FrgGuarantee], 9);
        let result = run_experiment(&d, &config).unwrap();
        let re = aggregate(
            &result.reports,
            &["label".to_string()],
            config.epsilon,
            &config.fractions,
        );
        assert_eq!(re.len(), result.aggregates.len());
        for (a, b) in re.iter().zip(&result.aggregates) {
            assert_eq!(a.n_trials, b.n_trials);
            assert_eq!(a.solution_rate, b.solution_rate);
            assert_eq!(a.violation_rate, b.violation_rate);
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let d = generate_synthetic(&SyntheticSpec::new(300, 5, 2, 0.4, 5)).unwrap();
        let config = quick_protocol(vec![MethodKind::FrgGuarantee], 11);
        let a = run_experiment(&d, &config).unwrap();
        let b = run_experiment(&d, &config).unwrap();
        assert_eq!(
            aggregates_to_csv(&a.aggregates),
            aggregates_to_csv(&b.aggregates)
        );
        assert_eq!(
            reports_to_jsonl(&a.reports).unwrap(),
            reports_to_jsonl(&b.reports).unwrap()
        );
    }

    #[test]
    fn csv_has_documented_columns() {
        let csv = aggregates_to_csv(&[]);
        assert!(csv.starts_with(
            "task,method,fraction,n_trials,solution_rate,violation_rate,mean_auc"
        ));
    }
}
