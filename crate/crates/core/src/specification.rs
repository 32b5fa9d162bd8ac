//! Semantic and statistical specifications, and the user requirement that
//! combines them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RkmeSpec;
use crate::rkme::{generate_rkme, RkmeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Table,
    Image,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Classification,
    Regression,
}

impl DataType {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataType::Table => "table",
            DataType::Image => "image",
            DataType::Text => "text",
        }
    }
}

impl TaskType {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskType::Classification => "classification",
            TaskType::Regression => "regression",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(DataType::Table),
            "image" => Ok(DataType::Image),
            "text" => Ok(DataType::Text),
            other => Err(Error::param(format!("unknown data type {other:?}"))),
        }
    }
}

impl FromStr for TaskType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classification" => Ok(TaskType::Classification),
            "regression" => Ok(TaskType::Regression),
            other => Err(Error::param(format!("unknown task type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescription {
    pub name: String,
    pub description: String,
}

impl FeatureDescription {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticSpec {
    pub data_type: DataType,
    pub task_type: TaskType,
    #[serde(default)]
    pub scenarios: BTreeSet<String>,
    #[serde(default)]
    pub description: String,
    pub input_dim: usize,
    #[serde(default)]
    pub feature_descriptions: Vec<FeatureDescription>,
    pub output_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_names: Option<Vec<String>>,
}

impl SemanticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidData(
                "input_dim and output_dim must be positive".into(),
            ));
        }
        if !self.feature_descriptions.is_empty()
            && self.feature_descriptions.len() != self.input_dim
        {
            return Err(Error::InvalidData(format!(
                "{} feature descriptions for input_dim {}",
                self.feature_descriptions.len(),
                self.input_dim
            )));
        }
        if self.task_type == TaskType::Classification
            && self.output_dim < 2
            && self.label_names.as_ref().is_none_or(|l| l.is_empty())
        {
            return Err(Error::InvalidData(
                "classification needs output_dim >= 2 or label names".into(),
            ));
        }
        if let Some(labels) = &self.label_names {
            if labels.len() != self.output_dim {
                return Err(Error::InvalidData(format!(
                    "{} label names for output_dim {}",
                    labels.len(),
                    self.output_dim
                )));
            }
        }
        Ok(())
    }

    pub fn descriptions(&self) -> Vec<&str> {
        self.feature_descriptions
            .iter()
            .map(|f| f.description.as_str())
            .collect()
    }
}

/// Partial semantic requirement; absent fields match anything.
///
/// `feature_descriptions` is not a filter: it names the user's columns so that
/// heterogeneous search can project the user's spec.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_type: Option<DataType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_type: Option<TaskType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_descriptions: Option<Vec<FeatureDescription>>,
}

pub fn semantic_match(filter: &SemanticFilter, candidate: &SemanticSpec) -> bool {
    if filter.data_type.is_some_and(|d| d != candidate.data_type) {
        return false;
    }
    if filter.task_type.is_some_and(|t| t != candidate.task_type) {
        return false;
    }
    if let Some(scenarios) = &filter.scenarios {
        if !scenarios.is_subset(&candidate.scenarios) {
            return false;
        }
    }
    if let Some(needle) = &filter.description {
        if !candidate
            .description
            .to_lowercase()
            .contains(&needle.to_lowercase())
        {
            return false;
        }
    }
    if filter.input_dim.is_some_and(|d| d != candidate.input_dim) {
        return false;
    }
    if filter.output_dim.is_some_and(|d| d != candidate.output_dim) {
        return false;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    RkmeTable,
    HeteroMapTable,
}

impl StatKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatKind::RkmeTable => "rkme_table",
            StatKind::HeteroMapTable => "hetero_map_table",
        }
    }
}

/// Settings of the projector that produced a `hetero_map_table` spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjectorInfo {
    pub seed: u64,
    pub d_sem: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatSpec {
    pub kind: StatKind,
    pub payload: RkmeSpec,
    /// Present exactly when `kind` is `HeteroMapTable`.
    pub projector: Option<ProjectorInfo>,
}

impl StatSpec {
    pub fn rkme_table(payload: RkmeSpec) -> Self {
        Self {
            kind: StatKind::RkmeTable,
            payload,
            projector: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.payload.validate()?;
        match (self.kind, self.projector) {
            (StatKind::RkmeTable, None) => Ok(()),
            (StatKind::HeteroMapTable, Some(p)) if p.d_sem == self.payload.dim() => Ok(()),
            (StatKind::HeteroMapTable, Some(p)) => Err(Error::dim(format!(
                "hetero spec of dim {} from a projector with d_sem {}",
                self.payload.dim(),
                p.d_sem
            ))),
            (StatKind::HeteroMapTable, None) => Err(Error::InvalidData(
                "hetero spec without projector settings".into(),
            )),
            (StatKind::RkmeTable, Some(_)) => Err(Error::InvalidData(
                "rkme_table spec with projector settings".into(),
            )),
        }
    }
}

/// Generates a statistical specification locally from raw data. Only the
/// reduced set leaves this function.
pub fn generate_stat_spec(
    data_type: DataType,
    x: ArrayView2<'_, f64>,
    opts: &RkmeOptions,
) -> Result<StatSpec> {
    if data_type != DataType::Table {
        return Err(Error::Unsupported(format!(
            "{data_type} specifications are not supported; vectorize the data and pass it as a table"
        )));
    }
    let fit = generate_rkme(x, opts)?;
    Ok(StatSpec::rkme_table(fit.spec))
}

/// A user's requirement: a semantic filter, a statistical spec, or both.
#[derive(Debug, Clone, PartialEq)]
pub struct UserInfo {
    semantic: Option<SemanticFilter>,
    stat: Option<StatSpec>,
}

impl UserInfo {
    pub fn new(semantic: Option<SemanticFilter>, stat: Option<StatSpec>) -> Result<Self> {
        if semantic.is_none() && stat.is_none() {
            return Err(Error::param(
                "user info needs a semantic filter or a statistical spec",
            ));
        }
        Ok(Self { semantic, stat })
    }

    pub fn from_stat(stat: StatSpec) -> Self {
        Self {
            semantic: None,
            stat: Some(stat),
        }
    }

    pub fn from_semantic(filter: SemanticFilter) -> Self {
        Self {
            semantic: Some(filter),
            stat: None,
        }
    }

    pub fn semantic(&self) -> Option<&SemanticFilter> {
        self.semantic.as_ref()
    }

    pub fn stat(&self) -> Option<&StatSpec> {
        self.stat.as_ref()
    }

    pub fn feature_descriptions(&self) -> Option<&[FeatureDescription]> {
        self.semantic.as_ref()?.feature_descriptions.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn candidate() -> SemanticSpec {
        SemanticSpec {
            data_type: DataType::Table,
            task_type: TaskType::Classification,
            scenarios: ["sales".to_string(), "retail".to_string()].into(),
            description: "Weekly Store Demand".into(),
            input_dim: 2,
            feature_descriptions: vec![],
            output_dim: 2,
            label_names: None,
        }
    }

    #[test]
    fn empty_filter_matches() {
        assert!(semantic_match(&SemanticFilter::default(), &candidate()));
    }

    #[test]
    fn enum_mismatch_rejects() {
        let f = SemanticFilter {
            task_type: Some(TaskType::Regression),
            ..Default::default()
        };
        assert!(!semantic_match(&f, &candidate()));
    }

    #[test]
    fn scenario_subset_and_description_substring() {
        let f = SemanticFilter {
            scenarios: Some(["sales".to_string()].into()),
            description: Some("store demand".into()),
            ..Default::default()
        };
        assert!(semantic_match(&f, &candidate()));
        let f = SemanticFilter {
            scenarios: Some(["finance".to_string()].into()),
            ..Default::default()
        };
        assert!(!semantic_match(&f, &candidate()));
    }

    #[test]
    fn dims_compare_exactly() {
        let f = SemanticFilter {
            input_dim: Some(3),
            ..Default::default()
        };
        assert!(!semantic_match(&f, &candidate()));
    }

    #[test]
    fn semantic_validation() {
        let mut s = candidate();
        assert!(s.validate().is_ok());
        s.feature_descriptions = vec![FeatureDescription::new("a", "a")];
        assert!(s.validate().is_err());
        s.feature_descriptions.clear();
        s.output_dim = 1;
        assert!(s.validate().is_err());
        s.label_names = Some(vec!["yes".into()]);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn stat_spec_for_single_row() {
        let spec = generate_stat_spec(
            DataType::Table,
            array![[3.0, 1.0]].view(),
            &RkmeOptions::default(),
        )
        .unwrap();
        assert_eq!(spec.kind, StatKind::RkmeTable);
        assert_eq!(spec.payload.len(), 1);
        assert!((spec.payload.beta()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stat_spec_rejects_nan_and_images() {
        let x = array![[f64::NAN, 1.0]];
        assert!(matches!(
            generate_stat_spec(DataType::Table, x.view(), &RkmeOptions::default()),
            Err(Error::InvalidData(_))
        ));
        let x = array![[0.0, 1.0]];
        assert!(matches!(
            generate_stat_spec(DataType::Image, x.view(), &RkmeOptions::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn user_info_needs_something() {
        assert!(UserInfo::new(None, None).is_err());
    }
}
