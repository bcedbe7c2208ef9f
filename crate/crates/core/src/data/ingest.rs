//! CSV ingestion against a pinned schema.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::data::schema::{encode_numeric, one_hot_encode, ColumnKind, TableSchema};
use crate::data::{Dataset, FeatureKind};
use crate::error::CoreError;
use crate::Result;

/// Summary statistics produced during ingestion.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IngestReport {
    pub n_rows_read: usize,
    pub n_rows_dropped: usize,
    pub n: usize,
    pub d: usize,
    pub n_groups: usize,
    pub group_priors: Vec<f64>,
    /// Per task: overall base rate of label 1.
    pub base_rates: BTreeMap<String, f64>,
    /// Per task: demographic parity gap of the true labels
    /// (max pairwise difference of `Pr(Y=1 | S=k)`).
    pub true_label_delta_dp: BTreeMap<String, f64>,
}

/// Load an Adult-style CSV (header row, comma separated, UTF-8) into a
/// [`Dataset`] using `schema` as the encoding recipe.
///
/// Categorical columns are one-hot encoded over the schema's level lists;
/// numeric columns are min-max scaled and binarized at the schema thresholds
/// (or kept as the scaled value when flagged continuous). Rows containing a
/// missing token are dropped and counted. Unseen categories and absent
/// columns are hard errors with row context.
pub fn load_csv(path: &Path, schema: &TableSchema) -> Result<(Dataset, IngestReport)> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CoreError::data(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| CoreError::data(format!("{}: {e}", path.display())))?
        .clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CoreError::data(format!("column '{name}' missing from CSV header")))
    };

    let feature_cols: Vec<usize> = schema
        .features
        .iter()
        .map(|c| col_index(&c.name))
        .collect::<Result<_>>()?;
    let sensitive_col = col_index(&schema.sensitive.column)?;
    let label_cols: Vec<usize> = schema
        .labels
        .iter()
        .map(|l| col_index(&l.column))
        .collect::<Result<_>>()?;

    let d = schema.feature_dim();
    let mut rows: Vec<f64> = Vec::new();
    let mut sensitive: Vec<usize> = Vec::new();
    let mut labels: BTreeMap<String, Vec<u8>> = schema
        .labels
        .iter()
        .map(|l| (l.task.clone(), Vec::new()))
        .collect();
    let mut n_rows_read = 0usize;
    let mut n_rows_dropped = 0usize;

    'rows: for (row_no, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| CoreError::data(format!("row {}: {e}", row_no + 2)))?;
        n_rows_read += 1;

        let needed: Vec<usize> = feature_cols
            .iter()
            .chain(std::iter::once(&sensitive_col))
            .chain(label_cols.iter())
            .copied()
            .collect();
        for &ci in &needed {
            let cell = record.get(ci).unwrap_or("");
            if schema.missing_tokens.iter().any(|t| t == cell) {
                n_rows_dropped += 1;
                continue 'rows;
            }
        }

        let mut encoded: Vec<f64> = Vec::with_capacity(d);
        for (spec, &ci) in schema.features.iter().zip(&feature_cols) {
            let cell = record.get(ci).unwrap_or("");
            match &spec.kind {
                ColumnKind::Categorical { levels } => {
                    let level = levels.iter().position(|l| l == cell).ok_or_else(|| {
                        CoreError::data(format!(
                            "row {}: unseen category '{cell}' in column {}",
                            row_no + 2,
                            spec.name
                        ))
                    })?;
                    let start = encoded.len();
                    encoded.resize(start + levels.len(), 0.0);
                    one_hot_encode(level, levels.len(), &mut encoded[start..]);
                }
                ColumnKind::Numeric {
                    min,
                    max,
                    thresholds,
                    continuous,
                } => {
                    let value: f64 = cell.parse().map_err(|_| {
                        CoreError::data(format!(
                            "row {}: '{cell}' in numeric column {} is not a number",
                            row_no + 2,
                            spec.name
                        ))
                    })?;
                    encode_numeric(value, *min, *max, thresholds, *continuous, &mut encoded);
                }
            }
        }
        debug_assert_eq!(encoded.len(), d);

        let s_cell = record.get(sensitive_col).unwrap_or("");
        let s = schema
            .sensitive
            .levels
            .iter()
            .position(|l| l == s_cell)
            .ok_or_else(|| {
                CoreError::data(format!(
                    "row {}: unseen sensitive value '{s_cell}'",
                    row_no + 2
                ))
            })?;

        rows.extend_from_slice(&encoded);
        sensitive.push(s);
        for (spec, &ci) in schema.labels.iter().zip(&label_cols) {
            let cell = record.get(ci).unwrap_or("");
            labels
                .get_mut(&spec.task)
                .unwrap()
                .push(u8::from(cell == spec.positive));
        }
    }

    let n = sensitive.len();
    if n == 0 {
        return Err(CoreError::data(format!(
            "{}: no usable rows ({n_rows_dropped} dropped)",
            path.display()
        )));
    }
    let features = Array2::from_shape_vec((n, d), rows)
        .map_err(|e| CoreError::data(e.to_string()))?;
    let kind = if schema.all_binary() {
        FeatureKind::Binary
    } else {
        FeatureKind::Continuous
    };
    let dataset = Dataset::new(
        features,
        sensitive,
        labels,
        schema.sensitive.levels.len(),
        kind,
    )?;

    let mut base_rates = BTreeMap::new();
    let mut true_label_delta_dp = BTreeMap::new();
    for (task, ys) in dataset.labels() {
        let base = ys.iter().map(|&y| y as f64).sum::<f64>() / n as f64;
        base_rates.insert(task.clone(), base);
        let mut pos = vec![0usize; dataset.n_groups()];
        let mut tot = vec![0usize; dataset.n_groups()];
        for (i, &y) in ys.iter().enumerate() {
            let s = dataset.sensitive()[i];
            tot[s] += 1;
            pos[s] += y as usize;
        }
        let rates: Vec<f64> = pos
            .iter()
            .zip(&tot)
            .map(|(&p, &t)| p as f64 / t as f64)
            .collect();
        let max = rates.iter().cloned().fold(f64::MIN, f64::max);
        let min = rates.iter().cloned().fold(f64::MAX, f64::min);
        true_label_delta_dp.insert(task.clone(), max - min);
    }

    let report = IngestReport {
        n_rows_read,
        n_rows_dropped,
        n,
        d,
        n_groups: dataset.n_groups(),
        group_priors: dataset.group_priors().to_vec(),
        base_rates,
        true_label_delta_dp,
    };
    Ok((dataset, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        path
    }

    fn toy_schema() -> TableSchema {
        TableSchema::from_toml(
            r#"
            [[feature]]
            name = "color"
            kind = "categorical"
            levels = ["red", "blue"]

            [sensitive]
            column = "group"
            levels = ["a", "b"]

            [[label]]
            column = "outcome"
            task = "outcome"
            positive = "yes"
        "#,
        )
        .unwrap()
    }

    #[test]
    fn toy_csv_one_hot() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_file(
            &dir,
            "toy.csv",
            "color,group,outcome\nred,a,yes\nblue,b,no\nred,b,yes\n",
        );
        let (d, report) = load_csv(&csv, &toy_schema()).unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.n(), 3);
        assert_eq!(d.n_groups(), 2);
        assert_eq!(report.n_rows_dropped, 0);
        assert_eq!(d.features().row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(d.features().row(1).to_vec(), vec![0.0, 1.0]);
        assert_eq!(d.label("outcome").unwrap(), &[1, 0, 1]);
        assert_eq!(d.sensitive(), &[0, 1, 1]);
    }

    #[test]
    fn missing_rows_dropped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_file(
            &dir,
            "m.csv",
            "color,group,outcome\nred,a,yes\n?,b,no\nblue,b,no\nred,a,?\nblue,b,yes\n",
        );
        let (d, report) = load_csv(&csv, &toy_schema()).unwrap();
        assert_eq!(report.n_rows_read, 5);
        assert_eq!(report.n_rows_dropped, 2);
        assert_eq!(d.n(), 3);
    }

    #[test]
    fn unseen_category_is_an_error_with_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_file(
            &dir,
            "u.csv",
            "color,group,outcome\nred,a,yes\ngreen,b,no\n",
        );
        let err = load_csv(&csv, &toy_schema()).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        assert!(err.contains("green"), "{err}");
    }

    #[test]
    fn missing_column_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let csv = write_file(&dir, "c.csv", "colour,group,outcome\nred,a,yes\n");
        let err = load_csv(&csv, &toy_schema()).unwrap_err().to_string();
        assert!(err.contains("color"), "{err}");
    }

    #[test]
    fn report_base_rates_and_label_gap() {
        let dir = tempfile::tempdir().unwrap();
        // group a: 2 rows, 1 positive; group b: 2 rows, 2 positive
        let csv = write_file(
            &dir,
            "r.csv",
            "color,group,outcome\nred,a,yes\nred,a,no\nblue,b,yes\nblue,b,yes\n",
        );
        let (_, report) = load_csv(&csv, &toy_schema()).unwrap();
        assert_eq!(report.base_rates["outcome"], 0.75);
        assert!((report.true_label_delta_dp["outcome"] - 0.5).abs() < 1e-12);
    }
}
