//! Small dense linear-algebra helpers shared by the optimizers and learners.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

#[inline]
pub fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn all_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> bool {
    values.into_iter().all(|v| v.is_finite())
}

/// Solves `a x = b` for symmetric positive definite `a` (Cholesky), adding a
/// growing diagonal jitter if the factorization fails.
pub fn solve_spd(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::dim(format!(
            "solve_spd: {}x{} system with {} rhs rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let rhs = DMatrix::from_fn(n, b.ncols(), |i, j| b[[i, j]]);
    let scale = (0..n)
        .map(|i| a[[i, i]].abs())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let m = DMatrix::from_fn(n, n, |i, j| a[[i, j]] + if i == j { jitter } else { 0.0 });
        if let Some(chol) = m.cholesky() {
            let x = chol.solve(&rhs);
            return Ok(Array2::from_shape_fn((n, b.ncols()), |(i, j)| x[(i, j)]));
        }
        jitter = if jitter == 0.0 {
            1e-12 * scale
        } else {
            jitter * 100.0
        };
    }
    Err(Error::InvalidData(
        "linear system is not positive definite".into(),
    ))
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power iteration.
pub fn largest_eigenvalue(c: &Array2<f64>) -> f64 {
    let n = c.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.01 * i as f64);
    v /= v.dot(&v).sqrt();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = c.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w.dot(&v);
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs().max(1e-300) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotient of a unit vector never exceeds the top eigenvalue, so
    // pad slightly to keep 1/lambda a safe step.
    lambda.max(0.0) * (1.0 + 1e-9)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &Array1<f64>) -> Array1<f64> {
    let n = v.len();
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    let mut out = Array1::zeros(n);
    for (o, &x) in out.iter_mut().zip(v.iter()) {
        *o = (x - theta).max(0.0);
    }
    out
}

pub fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-column mean and population standard deviation.
/// Summation runs over rows in order, so the result does not depend on the
/// memory layout of `x`.
pub fn column_stats(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let mut mean = Array1::<f64>::zeros(x.ncols());
    for row in x.rows() {
        mean += &row;
    }
    mean /= x.nrows().max(1) as f64;
    let mut var = Array1::<f64>::zeros(x.ncols());
    for row in x.rows() {
        for ((v, &r), &m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
            *v += (r - m) * (r - m);
        }
    }
    let m = x.nrows().max(1) as f64;
    (mean, var.mapv(|v| (v / m).sqrt()))
}
