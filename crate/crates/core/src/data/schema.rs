//! Column schema for tabular ingestion.
//!
//! The schema is a TOML document pinning exactly how a CSV becomes a feature
//! matrix: which columns are categorical (with their full level lists),
//! which are numeric (with min/max for scaling and the thresholds used to
//! binarize), which column carries the sensitive attribute, and which carry
//! task labels. Pinning the recipe in a versioned file makes the feature
//! dimension reproducible bit-for-bit across machines and subsamples.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

fn default_missing_tokens() -> Vec<String> {
    vec!["?".to_string(), String::new()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSchema {
    /// Cell values treated as missing; a row containing one is dropped.
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
    /// Feature columns in output order.
    #[serde(rename = "feature")]
    pub features: Vec<ColumnSpec>,
    pub sensitive: SensitiveSpec,
    #[serde(rename = "label", default)]
    pub labels: Vec<LabelSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    /// One output column per level, in the listed order.
    Categorical { levels: Vec<String> },
    /// Min-max scaled to [0,1]; then either one indicator column per
    /// threshold (`scaled > t`), or a single scaled column if `continuous`.
    Numeric {
        min: f64,
        max: f64,
        #[serde(default)]
        thresholds: Vec<f64>,
        #[serde(default)]
        continuous: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitiveSpec {
    pub column: String,
    /// Level strings in code order: `levels[k]` maps to sensitive value `k`.
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSpec {
    pub column: String,
    /// Task name used throughout reports.
    pub task: String,
    /// Cell value that codes label 1; anything else codes 0.
    pub positive: String,
}

impl TableSchema {
    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: TableSchema =
            toml::from_str(text).map_err(|e| CoreError::config(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("schema serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(CoreError::config("schema has no feature columns".to_string()));
        }
        for col in &self.features {
            match &col.kind {
                ColumnKind::Categorical { levels } => {
                    if levels.is_empty() {
                        return Err(CoreError::config(format!(
                            "categorical column {} has no levels",
                            col.name
                        )));
                    }
                }
                ColumnKind::Numeric {
                    min,
                    max,
                    thresholds,
                    continuous,
                } => {
                    if min >= max {
                        return Err(CoreError::config(format!(
                            "numeric column {}: min {min} >= max {max}",
                            col.name
                        )));
                    }
                    if !continuous && thresholds.is_empty() {
                        return Err(CoreError::config(format!(
                            "numeric column {} needs thresholds or continuous=true",
                            col.name
                        )));
                    }
                    if thresholds.iter().any(|t| !(0.0..1.0).contains(t)) {
                        return Err(CoreError::config(format!(
                            "numeric column {}: thresholds are on the scaled value, expected in [0,1)",
                            col.name
                        )));
                    }
                }
            }
        }
        if self.sensitive.levels.len() < 2 {
            return Err(CoreError::config(
                "sensitive column needs at least two levels".to_string(),
            ));
        }
        Ok(())
    }

    /// Total feature dimension after encoding.
    pub fn feature_dim(&self) -> usize {
        self.features
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Categorical { levels } => levels.len(),
                ColumnKind::Numeric {
                    thresholds,
                    continuous,
                    ..
                } => {
                    if *continuous {
                        1
                    } else {
                        thresholds.len()
                    }
                }
            })
            .sum()
    }

    /// True when every encoded column is a 0/1 indicator.
    pub fn all_binary(&self) -> bool {
        self.features.iter().all(|c| match &c.kind {
            ColumnKind::Categorical { .. } => true,
            ColumnKind::Numeric { continuous, .. } => !continuous,
        })
    }
}

/// One-hot encode a level index into `out` (which must be zeroed).
pub(crate) fn one_hot_encode(level: usize, n_levels: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), n_levels);
    out[level] = 1.0;
}

/// Recover the level index from a one-hot block.
pub(crate) fn one_hot_decode(block: &[f64]) -> Option<usize> {
    let mut hit = None;
    for (i, &v) in block.iter().enumerate() {
        if v == 1.0 {
            if hit.is_some() {
                return None;
            }
            hit = Some(i);
        } else if v != 0.0 {
            return None;
        }
    }
    hit
}

/// Encode one numeric value given its column spec; appends to `out`.
pub(crate) fn encode_numeric(
    value: f64,
    min: f64,
    max: f64,
    thresholds: &[f64],
    continuous: bool,
    out: &mut Vec<f64>,
) {
    let scaled = ((value - min) / (max - min)).clamp(0.0, 1.0);
    if continuous {
        out.push(scaled);
    } else {
        for &t in thresholds {
            out.push(f64::from(scaled > t));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn toml_round_trip() {
        let text = r#"
            [[feature]]
            name = "color"
            kind = "categorical"
            levels = ["red", "green"]

            [[feature]]
            name = "age"
            kind = "numeric"
            min = 0.0
            max = 100.0
            thresholds = [0.5]

            [sensitive]
            column = "group"
            levels = ["a", "b"]

            [[label]]
            column = "outcome"
            task = "outcome"
            positive = "yes"
        "#;
        let schema = TableSchema::from_toml(text).unwrap();
        assert_eq!(schema.feature_dim(), 3);
        assert!(schema.all_binary());
        let back = TableSchema::from_toml(&schema.to_toml()).unwrap();
        assert_eq!(back.feature_dim(), 3);
    }

    #[test]
    fn validation_catches_bad_columns() {
        let bad = r#"
            [[feature]]
            name = "x"
            kind = "numeric"
            min = 10.0
            max = 1.0
            thresholds = [0.5]

            [sensitive]
            column = "g"
            levels = ["a", "b"]
        "#;
        assert!(TableSchema::from_toml(bad).is_err());
    }

    #[test]
    fn numeric_encoding_scales_and_binarizes() {
        let mut out = Vec::new();
        encode_numeric(50.0, 0.0, 100.0, &[0.25, 0.5, 0.75], false, &mut out);
        assert_eq!(out, vec![1.0, 0.0, 0.0]);
        out.clear();
        encode_numeric(200.0, 0.0, 100.0, &[], true, &mut out);
        assert_eq!(out, vec![1.0]); // clamped
    }

    proptest! {
        #[test]
        fn one_hot_round_trip(level in 0usize..20, extra in 1usize..5) {
            let n = level + extra;
            let mut block = vec![0.0; n];
            one_hot_encode(level, n, &mut block);
            prop_assert_eq!(one_hot_decode(&block), Some(level));
        }
    }

    #[test]
    fn one_hot_decode_rejects_corrupt_blocks() {
        assert_eq!(one_hot_decode(&[0.0, 0.0]), None);
        assert_eq!(one_hot_decode(&[1.0, 1.0]), None);
        assert_eq!(one_hot_decode(&[0.5, 0.0]), None);
    }
}
