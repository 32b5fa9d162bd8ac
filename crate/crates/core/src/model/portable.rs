use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, softmax_rows, sq_dist};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortableKind {
    Linear,
    Logistic,
    Prototype,
}

impl PortableKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PortableKind::Linear => "linear",
            PortableKind::Logistic => "logistic",
            PortableKind::Prototype => "prototype",
        }
    }
}

/// A predictor described entirely by its parameters; no code runs to load it.
///
/// * `Linear`: `X Wᵀ + b`
/// * `Logistic`: `softmax(X Wᵀ + b)`
/// * `Prototype`: one-hot of the class of the nearest prototype
#[derive(Debug, Clone, PartialEq)]
pub struct PortableModel {
    kind: PortableKind,
    input_dim: usize,
    output_dim: usize,
    weights: Array2<f64>,
    bias: Array1<f64>,
    prototypes: Option<Array2<f64>>,
    classes: Option<Vec<usize>>,
}

impl PortableModel {
    pub fn linear(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        Self::affine(PortableKind::Linear, weights, bias)
    }

    pub fn logistic(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        Self::affine(PortableKind::Logistic, weights, bias)
    }

    fn affine(kind: PortableKind, weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        let model = Self {
            kind,
            input_dim: weights.ncols(),
            output_dim: weights.nrows(),
            weights,
            bias,
            prototypes: None,
            classes: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn prototype(
        prototypes: Array2<f64>,
        classes: Vec<usize>,
        output_dim: usize,
    ) -> Result<Self> {
        let model = Self {
            kind: PortableKind::Prototype,
            input_dim: prototypes.ncols(),
            output_dim,
            weights: Array2::zeros((0, 0)),
            bias: Array1::zeros(0),
            prototypes: Some(prototypes),
            classes: Some(classes),
        };
        model.validate()?;
        Ok(model)
    }

    /// Assembles a model from parsed parts; [`PortableModel::validate`] decides
    /// whether it is usable.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts_unchecked(
        kind: PortableKind,
        input_dim: usize,
        output_dim: usize,
        weights: Array2<f64>,
        bias: Array1<f64>,
        prototypes: Option<Array2<f64>>,
        classes: Option<Vec<usize>>,
    ) -> Self {
        Self {
            kind,
            input_dim,
            output_dim,
            weights,
            bias,
            prototypes,
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidData(
                "model dimensions must be positive".into(),
            ));
        }
        match self.kind {
            PortableKind::Linear | PortableKind::Logistic => {
                if self.weights.dim() != (self.output_dim, self.input_dim) {
                    return Err(Error::dim(format!(
                        "weights are {:?}, expected ({}, {})",
                        self.weights.dim(),
                        self.output_dim,
                        self.input_dim
                    )));
                }
                if self.bias.len() != self.output_dim {
                    return Err(Error::dim(format!(
                        "bias has length {}, expected {}",
                        self.bias.len(),
                        self.output_dim
                    )));
                }
                if !all_finite(self.weights.iter()) || !all_finite(self.bias.iter()) {
                    return Err(Error::InvalidData("non-finite model parameters".into()));
                }
            }
            PortableKind::Prototype => {
                let (Some(p), Some(c)) = (&self.prototypes, &self.classes) else {
                    return Err(Error::InvalidData(
                        "prototype model without prototypes".into(),
                    ));
                };
                if p.nrows() == 0 || p.ncols() != self.input_dim || c.len() != p.nrows() {
                    return Err(Error::dim(
                        "prototype table shape disagrees with dimensions",
                    ));
                }
                if c.iter().any(|&k| k >= self.output_dim) {
                    return Err(Error::InvalidData("prototype class id out of range".into()));
                }
                if !all_finite(p.iter()) {
                    return Err(Error::InvalidData("non-finite prototypes".into()));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> PortableKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn prototypes(&self) -> Option<(&Array2<f64>, &[usize])> {
        Some((self.prototypes.as_ref()?, self.classes.as_deref()?))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.validate()?;
        if x.ncols() != self.input_dim {
            return Err(Error::dim(format!(
                "model expects {} features, got {}",
                self.input_dim,
                x.ncols()
            )));
        }
        if !all_finite(x.iter()) {
            return Err(Error::InvalidData("non-finite model input".into()));
        }
        let out = match self.kind {
            PortableKind::Linear => x.dot(&self.weights.t()) + &self.bias,
            PortableKind::Logistic => {
                let mut logits = x.dot(&self.weights.t()) + &self.bias;
                softmax_rows(&mut logits);
                logits
            }
            PortableKind::Prototype => {
                let (protos, classes) = self.prototypes().expect("validated");
                let mut out = Array2::zeros((x.nrows(), self.output_dim));
                for (i, row) in x.rows().into_iter().enumerate() {
                    let mut best_d = f64::INFINITY;
                    let mut best_class = usize::MAX;
                    for (p, &class) in protos.rows().into_iter().zip(classes) {
                        let d = sq_dist(row, p);
                        if d < best_d || (d == best_d && class < best_class) {
                            best_d = d;
                            best_class = class;
                        }
                    }
                    out[[i, best_class]] = 1.0;
                }
                out
            }
        };
        if !all_finite(out.iter()) {
            return Err(Error::ModelOutput("non-finite predictions".into()));
        }
        Ok(out)
    }
}
