use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RkmeSpec;
use crate::model::Model;
use crate::specification::{SemanticSpec, StatKind, StatSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Waiting,
    Verified,
    Rejected,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Waiting => "WAITING",
            Status::Verified => "VERIFIED",
            Status::Rejected => "REJECTED",
        }
    }

    /// `WAITING → {VERIFIED, REJECTED}` and anything back to `WAITING`.
    pub fn can_become(&self, next: Status) -> bool {
        matches!(
            (self, next),
            (_, Status::Waiting)
                | (Status::Waiting, Status::Verified)
                | (Status::Waiting, Status::Rejected)
        )
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WAITING" => Ok(Status::Waiting),
            "VERIFIED" => Ok(Status::Verified),
            "REJECTED" => Ok(Status::Rejected),
            other => Err(Error::param(format!("unknown status {other:?}"))),
        }
    }
}

/// A model with its specifications: the unit stored, searched and reused.
#[derive(Debug, Clone)]
pub struct Learnware {
    pub id: String,
    pub name: String,
    pub semantic: SemanticSpec,
    pub stat_specs: BTreeMap<StatKind, StatSpec>,
    pub model: Model,
    pub status: Status,
}

impl Learnware {
    pub fn rkme(&self) -> Option<&RkmeSpec> {
        self.stat_specs
            .get(&StatKind::RkmeTable)
            .map(|s| &s.payload)
    }

    pub fn hetero(&self) -> Option<&RkmeSpec> {
        self.stat_specs
            .get(&StatKind::HeteroMapTable)
            .map(|s| &s.payload)
    }
}
