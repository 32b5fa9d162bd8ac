//! One predict interface over declarative and subprocess-backed models.

mod external;
mod portable;

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

pub use external::{ExternalModel, DEFAULT_TIMEOUT};
pub use portable::{PortableKind, PortableModel};

use crate::error::Result;

#[derive(Debug, Clone)]
pub enum Model {
    Portable(PortableModel),
    External(Arc<ExternalModel>),
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Portable(m) => m.input_dim(),
            Model::External(m) => m.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Model::Portable(m) => m.output_dim(),
            Model::External(m) => m.output_dim(),
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Model::Portable(m) => m.predict(x),
            Model::External(m) => m.predict(x),
        }
    }
}

impl From<PortableModel> for Model {
    fn from(m: PortableModel) -> Self {
        Model::Portable(m)
    }
}

impl From<ExternalModel> for Model {
    fn from(m: ExternalModel) -> Self {
        Model::External(Arc::new(m))
    }
}
