//! Ridge and multinomial logistic regression, the simple models trained on
//! top of learnware predictions and by synthetic developers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{argmax, column_stats, softmax_rows, solve_spd};
use crate::model::PortableModel;

/// Multi-output ridge regression with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Ridge {
    /// `k × d`
    pub coef: Array2<f64>,
    pub intercept: Array1<f64>,
}

impl Ridge {
    pub fn fit(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, lambda: f64) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::param("ridge needs at least one sample"));
        }
        if x.nrows() != y.nrows() {
            return Err(Error::dim(format!(
                "{} samples but {} targets",
                x.nrows(),
                y.nrows()
            )));
        }
        if !(lambda >= 0.0) {
            return Err(Error::param(format!(
                "ridge penalty must be non-negative, got {lambda}"
            )));
        }
        let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
        let y_mean = y.mean_axis(Axis(0)).expect("non-empty");
        let xc = &x - &x_mean;
        let yc = &y - &y_mean;
        let mut gram = xc.t().dot(&xc);
        gram.diag_mut().mapv_inplace(|v| v + lambda);
        let rhs = xc.t().dot(&yc);
        let w = solve_spd(&gram, &rhs)?;
        let coef = w.t().to_owned();
        let intercept = &y_mean - &coef.dot(&x_mean);
        Ok(Self { coef, intercept })
    }

    pub fn fit_vector(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, lambda: f64) -> Result<Self> {
        Self::fit(x, y.insert_axis(Axis(1)), lambda)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.coef.t()) + &self.intercept
    }

    pub fn into_model(self) -> Result<PortableModel> {
        PortableModel::linear(self.coef, self.intercept)
    }
}

#[derive(Debug, Clone)]
pub struct LogisticOptions {
    pub lambda: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_iters: 2000,
            tolerance: 1e-7,
        }
    }
}

/// Multinomial logistic regression with L2 penalty on the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    /// `k × d`, in raw feature units.
    pub coef: Array2<f64>,
    pub intercept: Array1<f64>,
}

impl Logistic {
    /// Fits on `labels ∈ 0..n_classes` with optional per-sample weights.
    /// Features are standardized internally.
    pub fn fit(
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        n_classes: usize,
        weights: Option<&[f64]>,
        opts: &LogisticOptions,
    ) -> Result<Self> {
        let (m, d) = x.dim();
        if m == 0 {
            return Err(Error::param(
                "logistic regression needs at least one sample",
            ));
        }
        if labels.len() != m || weights.is_some_and(|w| w.len() != m) {
            return Err(Error::dim(
                "labels or weights do not match the sample count",
            ));
        }
        if n_classes < 1 || labels.iter().any(|&l| l >= n_classes) {
            return Err(Error::param("label out of range"));
        }
        let sample_w: Array1<f64> = match weights {
            Some(w) => Array1::from(w.to_vec()),
            None => Array1::ones(m),
        };
        let total: f64 = sample_w.sum();
        if !(total > 0.0) || sample_w.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::param(
                "sample weights must be non-negative with positive sum",
            ));
        }

        let present: Vec<usize> = {
            let mut seen = vec![false; n_classes];
            for (&l, &w) in labels.iter().zip(sample_w.iter()) {
                if w > 0.0 {
                    seen[l] = true;
                }
            }
            (0..n_classes).filter(|&c| seen[c]).collect()
        };
        if present.len() == 1 {
            let mut intercept = Array1::from_elem(n_classes, -30.0);
            intercept[present[0]] = 0.0;
            return Ok(Self {
                coef: Array2::zeros((n_classes, d)),
                intercept,
            });
        }

        let (mean, std) = column_stats(x);
        let std = std.mapv(|s| if s > 1e-12 { s } else { 1.0 });
        let xs = (&x - &mean) / &std;
        let mut onehot = Array2::<f64>::zeros((m, n_classes));
        for (i, &l) in labels.iter().enumerate() {
            onehot[[i, l]] = 1.0;
        }

        let objective = |w: &Array2<f64>, b: &Array1<f64>| -> (f64, Array2<f64>, Array1<f64>) {
            let mut logits = xs.dot(&w.t()) + b;
            let lse: Array1<f64> = logits
                .rows()
                .into_iter()
                .map(|r| {
                    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    max + r.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
                })
                .collect();
            let mut loss = 0.0;
            for i in 0..m {
                loss += sample_w[i] * (lse[i] - logits.row(i).dot(&onehot.row(i)));
            }
            loss = (loss + 0.5 * opts.lambda * w.iter().map(|v| v * v).sum::<f64>()) / total;
            softmax_rows(&mut logits);
            let mut resid = logits - &onehot;
            for (mut r, &sw) in resid.rows_mut().into_iter().zip(sample_w.iter()) {
                r.mapv_inplace(|v| v * sw / total);
            }
            let gw = resid.t().dot(&xs) + &(w * (opts.lambda / total));
            let gb = resid.sum_axis(Axis(0));
            (loss, gw, gb)
        };

        // Accelerated gradient descent with backtracking and adaptive restart.
        let mut w = Array2::<f64>::zeros((n_classes, d));
        let mut b = Array1::<f64>::zeros(n_classes);
        let mut yw = w.clone();
        let mut yb = b.clone();
        let mut t_mom = 1.0_f64;
        let mut step = 1.0_f64;
        let (mut f_prev, _, _) = objective(&w, &b);
        for _ in 0..opts.max_iters {
            let (fy, gw, gb) = objective(&yw, &yb);
            let gnorm2 =
                gw.iter().map(|v| v * v).sum::<f64>() + gb.iter().map(|v| v * v).sum::<f64>();
            if gnorm2.sqrt() < opts.tolerance {
                w = yw.clone();
                b = yb.clone();
                break;
            }
            let (nw, nb, fn_) = loop {
                let nw = &yw - &(&gw * step);
                let nb = &yb - &(&gb * step);
                let (f_new, _, _) = objective(&nw, &nb);
                if f_new <= fy - 0.5 * step * gnorm2 || step < 1e-12 {
                    break (nw, nb, f_new);
                }
                step *= 0.5;
            };
            if fn_ > f_prev {
                // restart momentum from the last iterate
                t_mom = 1.0;
                yw = w.clone();
                yb = b.clone();
                continue;
            }
            let t_next = (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt()) / 2.0;
            let beta = (t_mom - 1.0) / t_next;
            yw = &nw + &((&nw - &w) * beta);
            yb = &nb + &((&nb - &b) * beta);
            let delta = (f_prev - fn_).abs();
            w = nw;
            b = nb;
            f_prev = fn_;
            t_mom = t_next;
            step *= 1.5;
            if delta < 1e-14 {
                break;
            }
        }

        let coef = &w / &std;
        let intercept = &b - &coef.dot(&mean);
        Ok(Self { coef, intercept })
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut logits = x.dot(&self.coef.t()) + &self.intercept;
        softmax_rows(&mut logits);
        logits
    }

    pub fn predict_labels(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        self.predict_proba(x)
            .rows()
            .into_iter()
            .map(argmax)
            .collect()
    }

    pub fn into_model(self) -> Result<PortableModel> {
        PortableModel::logistic(self.coef, self.intercept)
    }
}
