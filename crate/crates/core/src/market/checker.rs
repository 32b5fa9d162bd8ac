use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::learnware::Learnware;
use crate::linalg::all_finite;
use crate::model::Model;
use crate::specification::{StatKind, TaskType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureCode {
    SemSchema,
    SpecMissing,
    SpecInvalid,
    ModelLoad,
    DimMismatch,
    OutputInvalid,
}

impl FailureCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureCode::SemSchema => "SEM_SCHEMA",
            FailureCode::SpecMissing => "SPEC_MISSING",
            FailureCode::SpecInvalid => "SPEC_INVALID",
            FailureCode::ModelLoad => "MODEL_LOAD",
            FailureCode::DimMismatch => "DIM_MISMATCH",
            FailureCode::OutputInvalid => "OUTPUT_INVALID",
        }
    }
}

impl fmt::Display for FailureCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub code: FailureCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub pass: bool,
    pub failures: Vec<Failure>,
}

impl CheckReport {
    pub fn codes(&self) -> Vec<String> {
        self.failures
            .iter()
            .map(|f| f.code.as_str().to_string())
            .collect()
    }

    pub fn has(&self, code: FailureCode) -> bool {
        self.failures.iter().any(|f| f.code == code)
    }
}

/// Row sums of classification outputs must be within this of one.
pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

/// Runs every usability check and reports all failures found. Checks that
/// depend on an earlier failed one are skipped.
pub fn check_learnware(lw: &Learnware) -> CheckReport {
    let mut failures = Vec::new();
    let mut fail = |code, message: String| failures.push(Failure { code, message });

    let semantic_ok = match lw.semantic.validate() {
        Ok(()) => true,
        Err(e) => {
            fail(FailureCode::SemSchema, e.to_string());
            false
        }
    };

    let spec = match lw.rkme() {
        None => {
            fail(
                FailureCode::SpecMissing,
                "no rkme_table specification".into(),
            );
            None
        }
        Some(spec) => match spec.validate() {
            Ok(()) => Some(spec),
            Err(e) => {
                fail(FailureCode::SpecInvalid, e.to_string());
                None
            }
        },
    };
    for (kind, s) in &lw.stat_specs {
        if *kind != StatKind::RkmeTable {
            if let Err(e) = s.validate() {
                fail(FailureCode::SpecInvalid, format!("{}: {e}", kind.as_str()));
            }
        }
    }

    let model_ok = match &lw.model {
        Model::Portable(m) => match m.validate() {
            Ok(()) => true,
            Err(e) => {
                fail(FailureCode::ModelLoad, e.to_string());
                false
            }
        },
        Model::External(m) => match m.describe() {
            Ok((i, o)) if (i, o) == (m.input_dim(), m.output_dim()) => true,
            Ok((i, o)) => {
                fail(
                    FailureCode::DimMismatch,
                    format!(
                        "model reports ({i}, {o}) but declares ({}, {})",
                        m.input_dim(),
                        m.output_dim()
                    ),
                );
                false
            }
            Err(e) => {
                fail(FailureCode::ModelLoad, e.to_string());
                false
            }
        },
    };

    let mut dims_ok = model_ok;
    if model_ok {
        let (mi, mo) = (lw.model.input_dim(), lw.model.output_dim());
        if mi != lw.semantic.input_dim || mo != lw.semantic.output_dim {
            fail(
                FailureCode::DimMismatch,
                format!(
                    "model is {mi} -> {mo} but the semantic spec declares {} -> {}",
                    lw.semantic.input_dim, lw.semantic.output_dim
                ),
            );
            dims_ok = false;
        }
        if let Some(spec) = spec {
            if spec.dim() != mi {
                fail(
                    FailureCode::DimMismatch,
                    format!("spec dimension {} but model input {mi}", spec.dim()),
                );
                dims_ok = false;
            }
        }
    }

    if let (true, true, Some(spec)) = (dims_ok, semantic_ok, spec) {
        match lw.model.predict(spec.z().view()) {
            Ok(y) => {
                if y.dim() != (spec.len(), lw.semantic.output_dim) {
                    fail(
                        FailureCode::OutputInvalid,
                        format!("prediction shape {:?}", y.dim()),
                    );
                } else if !all_finite(y.iter()) {
                    fail(FailureCode::OutputInvalid, "non-finite predictions".into());
                } else if lw.semantic.task_type == TaskType::Classification {
                    let bad = y.rows().into_iter().position(|r| {
                        (r.sum() - 1.0).abs() > PROBABILITY_TOLERANCE
                            || r.iter().any(|&p| p < -PROBABILITY_TOLERANCE)
                    });
                    if let Some(row) = bad {
                        fail(
                            FailureCode::OutputInvalid,
                            format!("row {row} is not a probability vector"),
                        );
                    }
                }
            }
            Err(Error::ModelRuntime(m)) => fail(FailureCode::ModelLoad, m),
            Err(e) => fail(FailureCode::OutputInvalid, e.to_string()),
        }
    }
    if let Model::External(m) = &lw.model {
        m.shutdown();
    }

    CheckReport {
        pass: failures.is_empty(),
        failures,
    }
}
