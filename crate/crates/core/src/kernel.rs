//! Gaussian RBF kernel, reduced kernel mean embeddings and the MMD between them.
//!
//! An [`RkmeSpec`] represents the RKHS element `Σ_j β_j k(z_j, ·)`. Everything
//! the market does with specifications (scoring, mixture weights, alignment)
//! reduces to inner products between such elements, which expand into
//! weighted sums over kernel Gram matrices.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, sq_dist};

pub const DEFAULT_GAMMA: f64 = 0.1;

/// Bandwidth of the kernel `k(x, y) = exp(-γ‖x − y‖²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    gamma: f64,
}

impl KernelParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::param(format!(
                "kernel gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub(crate) fn eval(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
        (-self.gamma * sq_dist(x, y)).exp()
    }

    pub(crate) fn same_as(&self, other: &KernelParams) -> bool {
        (self.gamma - other.gamma).abs() <= 1e-12 * self.gamma.max(other.gamma)
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
        }
    }
}

pub fn rbf_kernel(x: &[f64], y: &[f64], params: KernelParams) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim(format!(
            "kernel arguments of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(params.eval(ArrayView1::from(x), ArrayView1::from(y)))
}

/// Gram matrix `K[i, j] = k(a_i, b_j)` between the rows of `a` and `b`.
///
/// Squared distances come from `‖a‖² + ‖b‖² − 2a·b`, clamped at zero.
pub fn gram(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, params: KernelParams) -> Array2<f64> {
    let na: Array1<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let nb: Array1<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut k = a.dot(&b.t());
    let g = params.gamma;
    for ((i, j), v) in k.indexed_iter_mut() {
        let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        *v = (-g * d2).exp();
    }
    k
}

/// `Σ_ij u_i v_j k(a_i, b_j)`, the RKHS inner product of two weighted point sets.
pub fn weighted_inner(
    u: ArrayView1<'_, f64>,
    a: ArrayView2<'_, f64>,
    v: ArrayView1<'_, f64>,
    b: ArrayView2<'_, f64>,
    params: KernelParams,
) -> f64 {
    let mut total = 0.0;
    for (ui, ra) in u.iter().zip(a.rows()) {
        let mut row = 0.0;
        for (vj, rb) in v.iter().zip(b.rows()) {
            row += vj * params.eval(ra, rb);
        }
        total += ui * row;
    }
    total
}

/// Reduced-set kernel mean embedding: coefficients `beta` over support points `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RkmeSpec {
    beta: Array1<f64>,
    z: Array2<f64>,
    kernel: KernelParams,
}

impl RkmeSpec {
    pub fn new(beta: Array1<f64>, z: Array2<f64>, kernel: KernelParams) -> Result<Self> {
        let spec = Self::from_parts_unchecked(beta, z, kernel);
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec without checking value invariants. Shapes must still
    /// agree; deserialized specs go through here so that the checker, not the
    /// parser, reports bad coefficients.
    pub fn from_parts_unchecked(beta: Array1<f64>, z: Array2<f64>, kernel: KernelParams) -> Self {
        Self { beta, z, kernel }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.is_empty() || self.z.nrows() == 0 {
            return Err(Error::InvalidData("spec has no support points".into()));
        }
        if self.beta.len() != self.z.nrows() {
            return Err(Error::dim(format!(
                "{} coefficients for {} support points",
                self.beta.len(),
                self.z.nrows()
            )));
        }
        if self.z.ncols() == 0 {
            return Err(Error::dim("support points have zero dimension"));
        }
        if !all_finite(self.beta.iter()) || !all_finite(self.z.iter()) {
            return Err(Error::InvalidData("spec contains non-finite values".into()));
        }
        if self.beta.iter().any(|&b| b < 0.0) {
            return Err(Error::InvalidData("spec has negative coefficients".into()));
        }
        Ok(())
    }

    pub fn beta(&self) -> &Array1<f64> {
        &self.beta
    }

    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn kernel(&self) -> KernelParams {
        self.kernel
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// Number of support points.
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Squared RKHS norm `βᵀ K_zz β`.
    pub fn norm_squared(&self) -> f64 {
        weighted_inner(
            self.beta.view(),
            self.z.view(),
            self.beta.view(),
            self.z.view(),
            self.kernel,
        )
    }

    /// RKHS inner product `⟨Φ_self, Φ_other⟩`.
    pub fn inner(&self, other: &RkmeSpec) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(weighted_inner(
            self.beta.view(),
            self.z.view(),
            other.beta.view(),
            other.z.view(),
            self.kernel,
        ))
    }

    /// Evaluates the embedding at `x`: `Σ_j β_j k(z_j, x)`.
    pub fn evaluate(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.beta
            .iter()
            .zip(self.z.rows())
            .map(|(b, z)| b * self.kernel.eval(z, x))
            .sum()
    }

    pub(crate) fn check_compatible(&self, other: &RkmeSpec) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::dim(format!(
                "specs of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        if !self.kernel.same_as(&other.kernel) {
            return Err(Error::param(format!(
                "specs use different kernels (gamma {} vs {})",
                self.kernel.gamma, other.kernel.gamma
            )));
        }
        Ok(())
    }
}

/// `‖Φ_a − Φ_b‖²` before clamping. Rounding may leave it slightly negative.
pub fn mmd_squared_unclamped(a: &RkmeSpec, b: &RkmeSpec) -> Result<f64> {
    a.check_compatible(b)?;
    let cross = a.inner(b)?;
    Ok(a.norm_squared() + b.norm_squared() - 2.0 * cross)
}

/// Squared maximum mean discrepancy between two embeddings, clamped at zero.
/// Identical specs give exactly zero.
pub fn mmd_squared(a: &RkmeSpec, b: &RkmeSpec) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    Ok(mmd_squared_unclamped(a, b)?.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn point_spec(z: f64) -> RkmeSpec {
        RkmeSpec::new(array![1.0], array![[z]], KernelParams::default()).unwrap()
    }

    #[test]
    fn kernel_identity_is_one() {
        let k = rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], KernelParams::default()).unwrap();
        assert_eq!(k, 1.0);
    }

    #[test]
    fn kernel_closed_forms() {
        let p = KernelParams::default();
        let k = rbf_kernel(&[0.0], &[10f64.sqrt()], p).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-12);
        // ‖(0,0)−(3,4)‖² = 25, 0.1·25 = 2.5
        let k = rbf_kernel(&[0.0, 0.0], &[3.0, 4.0], p).unwrap();
        assert!((k - 0.082_084_998_623_898_8).abs() < 1e-12);
    }

    #[test]
    fn kernel_dimension_mismatch() {
        let err = rbf_kernel(&[0.0], &[0.0, 1.0], KernelParams::default()).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn gamma_must_be_positive() {
        assert!(KernelParams::new(0.0).is_err());
        assert!(KernelParams::new(-1.0).is_err());
        assert!(KernelParams::new(f64::NAN).is_err());
    }

    #[test]
    fn mmd_of_two_points() {
        // 1 + 1 − 2e^{−1}
        let m = mmd_squared(&point_spec(0.0), &point_spec(10f64.sqrt())).unwrap();
        assert!((m - 1.264_241_117_657_115_4).abs() < 1e-12);
    }

    #[test]
    fn mmd_self_is_zero() {
        let a = RkmeSpec::new(
            array![0.3, 0.7],
            array![[0.0, 1.0], [2.0, -1.0]],
            KernelParams::default(),
        )
        .unwrap();
        assert!(mmd_squared(&a, &a).unwrap() <= 1e-9);
    }

    #[test]
    fn mmd_ignores_representation() {
        let a = RkmeSpec::new(
            array![0.5, 0.5],
            array![[0.0], [0.0]],
            KernelParams::default(),
        )
        .unwrap();
        let b = point_spec(0.0);
        assert!(mmd_squared(&a, &b).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn mmd_rejects_mismatched_inputs() {
        let a = point_spec(0.0);
        let b = RkmeSpec::new(array![1.0], array![[0.0, 0.0]], KernelParams::default()).unwrap();
        assert!(matches!(mmd_squared(&a, &b), Err(Error::Dimension(_))));
        let c = RkmeSpec::new(array![1.0], array![[0.0]], KernelParams::new(0.5).unwrap()).unwrap();
        assert!(matches!(mmd_squared(&a, &c), Err(Error::Parameter(_))));
    }

    #[test]
    fn validation_catches_bad_values() {
        let p = KernelParams::default();
        assert!(RkmeSpec::new(array![-0.1], array![[0.0]], p).is_err());
        assert!(RkmeSpec::new(array![1.0], array![[f64::NAN]], p).is_err());
        assert!(RkmeSpec::new(array![1.0, 1.0], array![[0.0]], p).is_err());
    }
}
