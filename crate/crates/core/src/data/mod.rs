//! Dataset representation, tabular ingestion, synthetic generation, and the
//! splitting/resampling used by the experiment protocol.

mod adult_like;
mod cache;
mod ingest;
mod schema;
mod synthetic;

pub use adult_like::{adult_like_schema, write_adult_like_csv, AdultLikeSpec};
pub use cache::{read_dataset, write_dataset};
pub use ingest::{load_csv, IngestReport};
pub use schema::{ColumnKind, ColumnSpec, LabelSpec, SensitiveSpec, TableSchema};
pub use synthetic::{generate_synthetic, LabelRule, SyntheticSpec};

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::util::derive_seed;
use crate::Result;

/// Whether features are 0/1 indicators (Bernoulli reconstruction) or
/// real-valued in `[0, 1]` (Gaussian reconstruction).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Binary,
    Continuous,
}

/// Immutable table of feature vectors, sensitive attributes, and optional
/// task labels, with the empirical group priors attached.
///
/// Construction validates every invariant: consistent row counts, sensitive
/// codes below the group count, every group present, labels binary. Safe to
/// share read-only across trial workers.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    sensitive: Vec<usize>,
    labels: BTreeMap<String, Vec<u8>>,
    group_priors: Vec<f64>,
    n_groups: usize,
    feature_kind: FeatureKind,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        sensitive: Vec<usize>,
        labels: BTreeMap<String, Vec<u8>>,
        n_groups: usize,
        feature_kind: FeatureKind,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(CoreError::data("dataset has no rows".to_string()));
        }
        if sensitive.len() != n {
            return Err(CoreError::data(format!(
                "{} sensitive values for {n} rows",
                sensitive.len()
            )));
        }
        if n_groups < 2 {
            return Err(CoreError::data(
                "need at least two sensitive groups".to_string(),
            ));
        }
        if let Some(&bad) = sensitive.iter().find(|&&s| s >= n_groups) {
            return Err(CoreError::data(format!(
                "sensitive code {bad} out of range for {n_groups} groups"
            )));
        }
        for (task, ys) in &labels {
            if ys.len() != n {
                return Err(CoreError::data(format!(
                    "label '{task}' has {} values for {n} rows",
                    ys.len()
                )));
            }
            if ys.iter().any(|&y| y > 1) {
                return Err(CoreError::data(format!("label '{task}' is not binary")));
            }
        }
        if feature_kind == FeatureKind::Binary && features.iter().any(|&v| v != 0.0 && v != 1.0)
        {
            return Err(CoreError::data(
                "binary dataset contains values outside {0, 1}; \
                 mark the column continuous in the schema"
                    .to_string(),
            ));
        }
        let mut counts = vec![0usize; n_groups];
        for &s in &sensitive {
            counts[s] += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(CoreError::data(format!("sensitive group {k} has no rows")));
        }
        let group_priors = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(Dataset {
            features,
            sensitive,
            labels,
            group_priors,
            n_groups,
            feature_kind,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn sensitive(&self) -> &[usize] {
        &self.sensitive
    }

    /// Empirical `Pr(S = k)`, exactly `count_k / n`.
    pub fn group_priors(&self) -> &[f64] {
        &self.group_priors
    }

    pub fn labels(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.labels
    }

    pub fn label(&self, task: &str) -> Option<&[u8]> {
        self.labels.get(task).map(|v| v.as_slice())
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.feature_kind
    }

    /// New dataset from the given row indices (repeats allowed). Inherits
    /// the group count; fails if a group vanishes from the selection.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(CoreError::data("empty row selection".to_string()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(CoreError::data(format!("row index {bad} out of range")));
        }
        let features = Array2::from_shape_fn((indices.len(), self.dim()), |(r, c)| {
            self.features[[indices[r], c]]
        });
        let sensitive = indices.iter().map(|&i| self.sensitive[i]).collect();
        let labels = self
            .labels
            .iter()
            .map(|(task, ys)| {
                (
                    task.clone(),
                    indices.iter().map(|&i| ys[i]).collect::<Vec<u8>>(),
                )
            })
            .collect();
        Dataset::new(
            features,
            sensitive,
            labels,
            self.n_groups,
            self.feature_kind,
        )
    }
}

/// How to cut a dataset into the candidate-selection and fairness-test
/// portions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of rows that go to candidate selection, in (0, 1).
    pub candidate_fraction: f64,
    pub seed: u64,
    pub stratify_on_sensitive: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        // Candidate selection gets the larger share: optimization wants more
        // data, while the t-interval on the fairness side narrows quickly.
        SplitSpec {
            candidate_fraction: 0.6,
            seed: 0,
            stratify_on_sensitive: true,
        }
    }
}

/// Split into disjoint candidate / fairness-test datasets. Deterministic per
/// seed; stratification keeps each group's share of each side within one row
/// of its share of the input. Errors if either side would hold fewer than
/// two rows of some group (the fairness test needs variance estimates).
pub fn split_candidate_fairness(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.candidate_fraction > 0.0 && spec.candidate_fraction < 1.0) {
        return Err(CoreError::config(format!(
            "candidate_fraction {} outside (0, 1)",
            spec.candidate_fraction
        )));
    }
    if d.n() < 4 {
        return Err(CoreError::data(format!(
            "{} rows is too few to split",
            d.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cand_idx: Vec<usize> = Vec::new();
    let mut fair_idx: Vec<usize> = Vec::new();
    if spec.stratify_on_sensitive {
        for k in 0..d.n_groups() {
            let mut rows: Vec<usize> = (0..d.n()).filter(|&i| d.sensitive()[i] == k).collect();
            rows.shuffle(&mut rng);
            let nc =
                ((spec.candidate_fraction * rows.len() as f64).round() as usize).min(rows.len());
            cand_idx.extend_from_slice(&rows[..nc]);
            fair_idx.extend_from_slice(&rows[nc..]);
        }
    } else {
        let mut rows: Vec<usize> = (0..d.n()).collect();
        rows.shuffle(&mut rng);
        let nc = (spec.candidate_fraction * rows.len() as f64).floor() as usize;
        cand_idx.extend_from_slice(&rows[..nc]);
        fair_idx.extend_from_slice(&rows[nc..]);
    }
    cand_idx.sort_unstable();
    fair_idx.sort_unstable();
    for (side, idx) in [("candidate", &cand_idx), ("fairness", &fair_idx)] {
        let mut counts = vec![0usize; d.n_groups()];
        for &i in idx.iter() {
            counts[d.sensitive()[i]] += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c < 2) {
            return Err(CoreError::data(format!(
                "{side} split would hold {} rows of group {k}; need at least 2",
                counts[k]
            )));
        }
    }
    Ok((d.subset(&cand_idx)?, d.subset(&fair_idx)?))
}

/// One training dataset produced by the resampling protocol.
#[derive(Debug, Clone)]
pub struct ResampledTrial {
    pub resample: usize,
    pub fraction: f64,
    pub data: Dataset,
}

/// Bootstrap-resample `n_resamples` times (with replacement, full size),
/// then cut each resample down to the leading `floor(f * n)` rows for every
/// fraction. Yields `n_resamples * fractions.len()` training datasets,
/// deterministic per seed.
pub fn resample_trials(
    d: &Dataset,
    n_resamples: usize,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<ResampledTrial>> {
    if fractions.is_empty() {
        return Err(CoreError::config("empty fraction list".to_string()));
    }
    if let Some(&bad) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(CoreError::config(format!("fraction {bad} outside (0, 1]")));
    }
    if n_resamples == 0 {
        return Err(CoreError::config("n_resamples must be >= 1".to_string()));
    }
    let n = d.n();
    let mut out = Vec::with_capacity(n_resamples * fractions.len());
    for r in 0..n_resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
        let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        for &f in fractions {
            let take = ((f * n as f64).floor() as usize).max(1);
            out.push(ResampledTrial {
                resample: r,
                fraction: f,
                data: d.subset(&indices[..take])?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn toy_dataset(n: usize, groups: &[usize]) -> Dataset {
        let k = groups.iter().max().unwrap() + 1;
        let sensitive: Vec<usize> = (0..n).map(|i| groups[i % groups.len()]).collect();
        let features = Array2::from_shape_fn((n, 3), |(i, j)| f64::from((i + j) % 2 == 0));
        Dataset::new(features, sensitive, BTreeMap::new(), k, FeatureKind::Binary).unwrap()
    }

    #[test]
    fn priors_match_counts_exactly() {
        let d = toy_dataset(10, &[0, 1, 1, 1, 0]);
        // pattern of length 5 repeated twice: 4 zeros, 6 ones
        assert_eq!(d.group_priors(), &[0.4, 0.6]);
        let mut counts = vec![0usize; 2];
        for &s in d.sensitive() {
            counts[s] += 1;
        }
        let recomputed: Vec<f64> = counts.iter().map(|&c| c as f64 / 10.0).collect();
        assert_eq!(d.group_priors(), recomputed.as_slice());
    }

    #[test]
    fn construction_rejects_violations() {
        let features = Array2::zeros((4, 2));
        assert!(Dataset::new(
            features.clone(),
            vec![0, 1, 2, 1],
            BTreeMap::new(),
            2,
            FeatureKind::Binary
        )
        .is_err());
        assert!(Dataset::new(
            features.clone(),
            vec![0, 0, 0, 0],
            BTreeMap::new(),
            2,
            FeatureKind::Binary
        )
        .is_err());
        let mut labels = BTreeMap::new();
        labels.insert("t".to_string(), vec![0u8, 1, 2, 0]);
        assert!(Dataset::new(features, vec![0, 1, 0, 1], labels, 2, FeatureKind::Binary).is_err());
        let cont = Array2::from_elem((4, 2), 0.5);
        assert!(Dataset::new(
            cont.clone(),
            vec![0, 1, 0, 1],
            BTreeMap::new(),
            2,
            FeatureKind::Binary
        )
        .is_err());
        assert!(Dataset::new(
            cont,
            vec![0, 1, 0, 1],
            BTreeMap::new(),
            2,
            FeatureKind::Continuous
        )
        .is_ok());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = toy_dataset(100, &[0, 1]);
        let spec = SplitSpec {
            candidate_fraction: 0.6,
            seed: 7,
            stratify_on_sensitive: false,
        };
        let (c1, f1) = split_candidate_fairness(&d, &spec).unwrap();
        assert_eq!((c1.n(), f1.n()), (60, 40));
        let (c2, f2) = split_candidate_fairness(&d, &spec).unwrap();
        assert_eq!(c1.features(), c2.features());
        assert_eq!(f1.sensitive(), f2.sensitive());
    }

    #[test]
    fn stratified_split_balances_groups() {
        let d = toy_dataset(100, &[0, 1]); // 50/50
        let spec = SplitSpec {
            candidate_fraction: 0.6,
            seed: 3,
            stratify_on_sensitive: true,
        };
        let (c, f) = split_candidate_fairness(&d, &spec).unwrap();
        for side in [&c, &f] {
            let ones = side.sensitive().iter().filter(|&&s| s == 1).count();
            let half = side.n() / 2;
            assert!(
                ones.abs_diff(half) <= 1,
                "group balance off: {ones} of {}",
                side.n()
            );
        }
    }

    #[test]
    fn split_rejects_starved_groups() {
        // one group with 3 rows total cannot give both sides >= 2
        let mut groups = vec![0usize; 37];
        groups.extend_from_slice(&[1, 1, 1]);
        let features = Array2::zeros((40, 2));
        let d = Dataset::new(features, groups, BTreeMap::new(), 2, FeatureKind::Binary).unwrap();
        let spec = SplitSpec {
            candidate_fraction: 0.5,
            seed: 0,
            stratify_on_sensitive: true,
        };
        assert!(split_candidate_fairness(&d, &spec).is_err());
    }

    #[test]
    fn resample_counts_and_identity_fraction() {
        let d = toy_dataset(200, &[0, 1]);
        let trials = resample_trials(&d, 10, &[0.10, 0.15, 0.25, 0.40, 0.65, 1.00], 5).unwrap();
        assert_eq!(trials.len(), 60);
        // fraction 1.0 keeps the whole resample
        for t in trials.iter().filter(|t| t.fraction == 1.0) {
            assert_eq!(t.data.n(), 200);
        }
        assert!(resample_trials(&d, 1, &[], 5).is_err());
    }

    #[test]
    fn resamples_are_deterministic() {
        let d = toy_dataset(30, &[0, 1]);
        let a = resample_trials(&d, 2, &[0.5, 1.0], 11).unwrap();
        let b = resample_trials(&d, 2, &[0.5, 1.0], 11).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.data.features(), y.data.features());
        }
    }

    #[test]
    fn bootstrap_unique_fraction_near_632() {
        // unique marker per row so source identity survives the resample
        let unique_features =
            Array2::from_shape_fn((1000, 2), |(i, j)| if j == 0 { i as f64 } else { 0.0 });
        let d = Dataset::new(
            unique_features,
            (0..1000).map(|i| i % 2).collect(),
            BTreeMap::new(),
            2,
            FeatureKind::Continuous,
        )
        .unwrap();
        let reps = 40;
        let mut total_unique = 0usize;
        for seed in 0..reps {
            let trials = resample_trials(&d, 1, &[1.0], seed).unwrap();
            let rows = &trials[0].data;
            assert_eq!(rows.n(), 1000);
            let ids: HashSet<u64> = (0..rows.n())
                .map(|i| rows.features()[[i, 0]].to_bits())
                .collect();
            total_unique += ids.len();
        }
        let frac = total_unique as f64 / (reps as f64 * 1000.0);
        assert!(
            (frac - 0.632).abs() < 0.02,
            "unique fraction {frac} not near 1 - 1/e"
        );
    }

    proptest! {
        #[test]
        fn splits_are_always_disjoint_and_exhaustive(
            seed in 0u64..500,
            frac in 0.2..0.8f64,
            stratify in proptest::bool::ANY,
        ) {
            // unique marker per row so we can trace identity through the split
            let n = 60usize;
            let features = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
            let d = Dataset::new(
                features,
                (0..n).map(|i| i % 3).collect(),
                BTreeMap::new(),
                3,
                FeatureKind::Continuous,
            ).unwrap();
            let spec = SplitSpec { candidate_fraction: frac, seed, stratify_on_sensitive: stratify };
            // an unlucky shuffle may starve a group on one side, which the
            // split rightfully rejects; the property concerns successful splits
            if let Ok((c, f)) = split_candidate_fairness(&d, &spec) {
                let ids = |x: &Dataset| -> HashSet<u64> {
                    (0..x.n()).map(|i| x.features()[[i, 0]].to_bits()).collect()
                };
                let (ci, fi) = (ids(&c), ids(&f));
                prop_assert!(ci.is_disjoint(&fi));
                prop_assert_eq!(ci.len() + fi.len(), n);
            }
        }
    }
}
