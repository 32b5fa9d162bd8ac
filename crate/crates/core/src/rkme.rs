//! Reduced-set generation: find non-negative `β` and points `Z` whose embedding
//! `Σ_j β_j k(z_j, ·)` is close in RKHS norm to the empirical embedding
//! `(1/m) Σ_i k(x_i, ·)` of a data matrix.
//!
//! The optimizer alternates a non-negative least squares solve for `β`
//! (projected gradient) with descent steps on `Z`, starting from k-means++
//! centers. Each accepted step is checked against the exact objective, so the
//! recorded trace never increases.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelParams, RkmeSpec};
use crate::linalg::{all_finite, column_stats, sq_dist};

pub const DEFAULT_REDUCED_SIZE: usize = 100;

#[derive(Debug, Clone)]
pub struct RkmeOptions {
    /// Requested number of support points; the effective size is `min(size, m)`.
    pub size: usize,
    pub kernel: KernelParams,
    pub seed: u64,
    pub kmeans_iters: usize,
    pub outer_iters: usize,
    /// Descent steps on `Z` per alternation.
    pub z_steps: usize,
    /// Initial `Z` step length as a fraction of the data scale.
    pub step_fraction: f64,
    /// Stop once an alternation improves the objective by less than this.
    pub tolerance: f64,
    pub nnls_max_iters: usize,
    pub nnls_tolerance: f64,
    pub ridge: f64,
}

impl Default for RkmeOptions {
    fn default() -> Self {
        Self {
            size: DEFAULT_REDUCED_SIZE,
            kernel: KernelParams::default(),
            seed: 0,
            kmeans_iters: 25,
            outer_iters: 50,
            z_steps: 10,
            step_fraction: 0.01,
            tolerance: 1e-7,
            nnls_max_iters: 1000,
            nnls_tolerance: 1e-8,
            ridge: 1e-6,
        }
    }
}

impl RkmeOptions {
    pub fn with_size(mut self, size: usize) -> Self {
        self.size = size;
        self
    }

    pub fn with_kernel(mut self, kernel: KernelParams) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
pub struct RkmeFit {
    pub spec: RkmeSpec,
    /// Objective after initialization, then after every alternation.
    pub objective_trace: Vec<f64>,
}

impl RkmeFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// The reduced-set objective `‖(1/m)Σ_i k(x_i,·) − Σ_j β_j k(z_j,·)‖²` for a
/// fixed data matrix, with its analytic gradient in `Z`.
pub struct RkmeObjective<'a> {
    x: ArrayView2<'a, f64>,
    kernel: KernelParams,
    data_norm: f64,
}

impl<'a> RkmeObjective<'a> {
    pub fn new(x: ArrayView2<'a, f64>, kernel: KernelParams) -> Self {
        let m = x.nrows() as f64;
        let mut total = 0.0;
        for (i, xi) in x.rows().into_iter().enumerate() {
            for xj in x.rows().into_iter().skip(i + 1) {
                total += kernel.eval(xi, xj);
            }
        }
        let data_norm = (2.0 * total + m) / (m * m);
        Self {
            x,
            kernel,
            data_norm,
        }
    }

    /// `c_j = (1/m) Σ_i k(z_j, x_i)`.
    fn data_inner(&self, z: ArrayView2<'_, f64>) -> Array1<f64> {
        gram(z, self.x, self.kernel)
            .mean_axis(Axis(1))
            .expect("data matrix is non-empty")
    }

    pub fn value(&self, beta: &Array1<f64>, z: ArrayView2<'_, f64>) -> f64 {
        let c = self.data_inner(z);
        let kzz = gram(z, z, self.kernel);
        self.value_with(beta, &kzz, &c)
    }

    fn value_with(&self, beta: &Array1<f64>, kzz: &Array2<f64>, c: &Array1<f64>) -> f64 {
        self.data_norm - 2.0 * beta.dot(c) + beta.dot(&kzz.dot(beta))
    }

    /// Gradient with respect to every support point, one row per point.
    ///
    /// Uses `∂k(z, x)/∂z = −2γ(z − x)k(z, x)`.
    pub fn grad_z(&self, beta: &Array1<f64>, z: ArrayView2<'_, f64>) -> Array2<f64> {
        let gamma = self.kernel.gamma();
        let m = self.x.nrows() as f64;
        // a[j,l] = β_l k(z_j, z_l) and b[j,i] = k(z_j, x_i)/m; then
        // Σ_l a[j,l](z_j − z_l) − Σ_i b[j,i](z_j − x_i) in matrix form.
        let mut a = gram(z, z, self.kernel);
        for mut row in a.rows_mut() {
            row *= beta;
        }
        let b = gram(z, self.x, self.kernel) / m;
        let shift = a.sum_axis(Axis(1)) - b.sum_axis(Axis(1));
        let mut grad = &z * &shift.insert_axis(Axis(1)) - a.dot(&z) + b.dot(&self.x);
        for (mut g, &bj) in grad.rows_mut().into_iter().zip(beta.iter()) {
            g *= -4.0 * gamma * bj;
        }
        grad
    }
}

/// Fits a reduced-set embedding of the rows of `x`.
pub fn generate_rkme(x: ArrayView2<'_, f64>, opts: &RkmeOptions) -> Result<RkmeFit> {
    if opts.size == 0 {
        return Err(Error::param("reduced set size must be at least 1"));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidData(format!(
            "empty data matrix ({}x{})",
            x.nrows(),
            x.ncols()
        )));
    }
    if !all_finite(x.iter()) {
        return Err(Error::InvalidData("data contains non-finite values".into()));
    }

    let m = x.nrows();
    let objective = RkmeObjective::new(x, opts.kernel);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let collapse = m <= opts.size;
    let mut z = if collapse {
        x.to_owned()
    } else {
        kmeans_pp(x, opts.size, opts.kmeans_iters, &mut rng)
    };
    let n = z.nrows();
    let mut beta = Array1::from_elem(n, 1.0 / n as f64);

    let mut kzz = gram(z.view(), z.view(), opts.kernel);
    let mut c = objective.data_inner(z.view());
    let mut current = objective.value_with(&beta, &kzz, &c);
    let mut trace = vec![current];

    let (_, std) = column_stats(x);
    let scale = (std.mapv(|s| s * s).mean().unwrap_or(0.0)).sqrt().max(1e-3);
    let mut step = opts.step_fraction * scale;

    for _ in 0..opts.outer_iters {
        let start = current;

        let candidate = nnls_projected_gradient(&kzz, &c, &beta, opts);
        let value = objective.value_with(&candidate, &kzz, &c);
        if value <= current {
            beta = candidate;
            current = value;
        }

        if !collapse {
            for _ in 0..opts.z_steps {
                let grad = objective.grad_z(&beta, z.view());
                let Some(direction) = preconditioned_direction(&grad, &beta) else {
                    break;
                };
                let mut accepted = false;
                for _ in 0..30 {
                    let trial = &z - &(&direction * step);
                    let trial_kzz = gram(trial.view(), trial.view(), opts.kernel);
                    let trial_c = objective.data_inner(trial.view());
                    let value = objective.value_with(&beta, &trial_kzz, &trial_c);
                    if value < current {
                        z = trial;
                        kzz = trial_kzz;
                        c = trial_c;
                        current = value;
                        step *= 1.2;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
        }

        trace.push(current);
        if start - current < opts.tolerance {
            break;
        }
    }

    let spec = RkmeSpec::new(beta, z, opts.kernel)?;
    Ok(RkmeFit {
        spec,
        objective_trace: trace,
    })
}

/// Per-point gradient scaled by `1/β_j`, then normalized so that the largest
/// row has unit length. `None` at a stationary point, up to rounding.
fn preconditioned_direction(grad: &Array2<f64>, beta: &Array1<f64>) -> Option<Array2<f64>> {
    let mut dir = grad.clone();
    for (mut row, &b) in dir.rows_mut().into_iter().zip(beta.iter()) {
        if b > 0.0 {
            row.mapv_inplace(|v| v / b);
        } else {
            row.fill(0.0);
        }
    }
    let max_norm = dir
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0_f64, f64::max);
    if !(max_norm > 1e-12 && max_norm.is_finite()) {
        return None;
    }
    dir.mapv_inplace(|v| v / max_norm);
    Some(dir)
}

/// Projected gradient for `min ½βᵀ(K + λI)β − cᵀβ, β ≥ 0` with step `1/L`,
/// `L` the largest Gershgorin row sum.
fn nnls_projected_gradient(
    kzz: &Array2<f64>,
    c: &Array1<f64>,
    start: &Array1<f64>,
    opts: &RkmeOptions,
) -> Array1<f64> {
    let mut a = kzz.clone();
    a.diag_mut().mapv_inplace(|v| v + opts.ridge);
    let lipschitz = a
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut beta = start.clone();
    for _ in 0..opts.nnls_max_iters {
        let grad = a.dot(&beta) - c;
        let next = (&beta - &(grad / lipschitz)).mapv(|v| v.max(0.0));
        let delta = next
            .iter()
            .zip(beta.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        beta = next;
        if delta < opts.nnls_tolerance {
            break;
        }
    }
    beta
}

/// k-means++ seeding followed by Lloyd iterations. Seeding draws one uniform
/// variate per center and inverts the cumulative weight, so repeating every
/// row of `x` leaves the chosen centers unchanged.
fn kmeans_pp(x: ArrayView2<'_, f64>, k: usize, iters: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let m = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = ((rng.gen::<f64>() * m as f64) as usize).min(m - 1);
    centers.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| sq_dist(r, x.row(first)))
        .collect();

    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let u: f64 = rng.gen();
        let idx = if total > 0.0 {
            let target = u * total;
            let mut acc = 0.0;
            let mut chosen = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            ((u * m as f64) as usize).min(m - 1)
        };
        centers.row_mut(c).assign(&x.row(idx));
        for (d, r) in d2.iter_mut().zip(x.rows()) {
            *d = d.min(sq_dist(r, x.row(idx)));
        }
    }

    let mut assignment = vec![usize::MAX; m];
    for _ in 0..iters {
        let mut changed = false;
        for (i, r) in x.rows().into_iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, cj) in centers.rows().into_iter().enumerate() {
                let d = sq_dist(r, cj);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centers.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, r) in x.rows().into_iter().enumerate() {
            sums.row_mut(assignment[i]).scaled_add(1.0, &r);
            counts[assignment[i]] += 1;
        }
        for (j, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mean = sums.row(j).mapv(|v| v / count as f64);
                centers.row_mut(j).assign(&mean);
            }
        }
    }
    centers
}

/// Mean of a data matrix as a one-point spec; handy as a trivial baseline.
pub fn empirical_spec(x: ArrayView2<'_, f64>, kernel: KernelParams) -> Result<RkmeSpec> {
    let m = x.nrows();
    if m == 0 {
        return Err(Error::InvalidData("empty data matrix".into()));
    }
    RkmeSpec::new(Array1::from_elem(m, 1.0 / m as f64), x.to_owned(), kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_row_is_represented_exactly() {
        let x = array![[1.0, 2.0]];
        let fit = generate_rkme(x.view(), &RkmeOptions::default().with_size(1)).unwrap();
        assert_eq!(fit.spec.len(), 1);
        assert!((fit.spec.beta()[0] - 1.0).abs() < 1e-12);
        assert_eq!(fit.spec.z().row(0).to_vec(), vec![1.0, 2.0]);
        assert!(fit.objective().abs() < 1e-12);
    }

    #[test]
    fn repeated_row_collapses_to_one_point() {
        let x = Array2::from_shape_fn((100, 3), |(_, j)| [0.5, -1.0, 4.0][j]);
        let fit = generate_rkme(x.view(), &RkmeOptions::default().with_size(1)).unwrap();
        assert_eq!(fit.spec.z().row(0).to_vec(), vec![0.5, -1.0, 4.0]);
        assert!((fit.spec.beta()[0] - 1.0).abs() < 1e-12);
        assert!(fit.objective().abs() < 1e-12);
    }

    #[test]
    fn effective_size_is_capped_by_rows() {
        let x = array![[0.0], [1.0], [5.0]];
        let fit = generate_rkme(x.view(), &RkmeOptions::default().with_size(10)).unwrap();
        assert_eq!(fit.spec.len(), 3);
        assert!(fit.objective() < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = array![[0.0, f64::NAN]];
        assert!(matches!(
            generate_rkme(x.view(), &RkmeOptions::default()),
            Err(Error::InvalidData(_))
        ));
        let x = array![[0.0, 1.0]];
        assert!(matches!(
            generate_rkme(x.view(), &RkmeOptions::default().with_size(0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn trace_is_monotone_and_below_init() {
        let x = Array2::from_shape_fn((300, 2), |(i, j)| {
            let t = i as f64 * 0.37 + j as f64;
            (t.sin() * 3.0) + if i % 2 == 0 { 4.0 } else { -4.0 }
        });
        let fit = generate_rkme(x.view(), &RkmeOptions::default().with_size(6)).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
        assert!(fit.objective() <= fit.objective_trace[0]);
        assert!(fit.spec.beta().iter().all(|&b| b >= 0.0));
    }

    #[test]
    fn objective_matches_direct_mmd() {
        let x = array![[0.0, 0.0], [1.0, 0.5], [2.0, -1.0], [0.3, 0.3]];
        let kernel = KernelParams::default();
        let beta = array![0.4, 0.5];
        let z = array![[0.5, 0.0], [1.5, -0.5]];
        let spec = RkmeSpec::new(beta.clone(), z.clone(), kernel).unwrap();
        let emp = empirical_spec(x.view(), kernel).unwrap();
        let direct = crate::kernel::mmd_squared_unclamped(&spec, &emp).unwrap();
        let value = RkmeObjective::new(x.view(), kernel).value(&beta, z.view());
        assert!((direct - value).abs() < 1e-12);
    }
}
