//! Engine of a desk-scale learnware dock.
//!
//! Developers package a trained model with a semantic description and a
//! reduced kernel mean embedding (RKME) of their training data. The dock
//! validates packages, stores them, and answers user requirements by
//! semantic filtering followed by MMD-based single and multiple search.
//! Returned learnwares are reused through averaging, job selection, ensemble
//! pruning or feature augmentation, with an input aligner for learnwares
//! from a different feature space.

pub mod bench;
pub mod error;
pub mod herding;
pub mod hetero;
pub mod kernel;
pub mod learners;
pub mod learnware;
pub mod linalg;
pub mod market;
pub mod model;
pub mod reuse;
pub mod rkme;
pub mod specification;
pub mod storage;
pub mod table;

pub use error::{Error, Result};
pub use kernel::{mmd_squared, rbf_kernel, KernelParams, RkmeSpec};
pub use learnware::{Learnware, Status};
pub use rkme::{generate_rkme, RkmeFit, RkmeOptions};
