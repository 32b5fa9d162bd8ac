//! JSON bodies shared by the server and the client.

use lwdock_core::market::{MultipleStrategy, SearchOptions};
use lwdock_core::specification::{SemanticFilter, SemanticSpec, StatKind, UserInfo};
use lwdock_core::storage::schema::StatDocument;
use lwdock_core::storage::IndexRecord;
use lwdock_core::{Learnware, Result, Status};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submitted {
    pub id: String,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    pub kind: StatKind,
    pub n: usize,
    pub dim: usize,
    pub gamma: f64,
}

/// `GET /api/learnware/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnwareDetail {
    #[serde(flatten)]
    pub record: IndexRecord,
    pub semantic: SemanticSpec,
    pub specs: Vec<SpecSummary>,
}

impl LearnwareDetail {
    pub fn new(record: IndexRecord, lw: &Learnware) -> Self {
        let specs = lw
            .stat_specs
            .values()
            .map(|s| SpecSummary {
                kind: s.kind,
                n: s.payload.len(),
                dim: s.payload.dim(),
                gamma: s.payload.kernel().gamma(),
            })
            .collect();
        Self {
            record,
            semantic: lw.semantic.clone(),
            specs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub queue_depth: usize,
    pub verified_count: usize,
}

/// Optional overrides of the search defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<MultipleStrategy>,
}

/// `POST /api/search`. The statistical spec travels inline; raw data never does.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic: Option<SemanticFilter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stat: Option<StatDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<SearchParams>,
}

impl SearchRequest {
    pub fn into_query(self) -> Result<(UserInfo, SearchOptions)> {
        let stat = self
            .stat
            .map(|d| d.into_spec("search request"))
            .transpose()?;
        if let Some(s) = &stat {
            s.validate()?;
        }
        let user = UserInfo::new(self.semantic, stat)?;
        let mut opts = SearchOptions::default();
        if let Some(p) = self.options {
            opts.tau = p.tau.unwrap_or(opts.tau);
            opts.threshold = p.threshold.unwrap_or(opts.threshold);
            opts.strategy = p.strategy.unwrap_or(opts.strategy);
        }
        Ok((user, opts))
    }
}
