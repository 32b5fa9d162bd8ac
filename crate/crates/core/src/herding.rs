//! Greedy kernel herding: pseudo-samples whose empirical embedding tracks a spec.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};

use crate::error::{Error, Result};
use crate::kernel::RkmeSpec;
use crate::linalg::column_stats;

/// Candidates drawn per requested sample.
pub const POOL_FACTOR: usize = 512;

/// Draws `count` points from a candidate pool, each maximizing
/// `⟨Φ_spec, k(x, ·)⟩ − (1/(t+1)) Σ_{s≤t} k(x_s, x)`.
///
/// The pool is a Gaussian mixture centered at the support points with weights
/// `β/Σβ` and per-dimension standard deviation equal to that of `Z` (floored
/// at `1e-3`). Points may be selected more than once.
pub fn herd_samples(spec: &RkmeSpec, count: usize, seed: u64) -> Result<Array2<f64>> {
    if count == 0 {
        return Err(Error::param("herding sample count must be at least 1"));
    }
    spec.validate()?;
    let d = spec.dim();
    let kernel = spec.kernel();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (_, std) = column_stats(spec.z().view());
    let sigma = std.mapv(|s| s.max(1e-3));
    let beta_sum: f64 = spec.beta().sum();
    let component = if beta_sum > 0.0 {
        Some(
            WeightedIndex::new(spec.beta().iter().copied())
                .map_err(|e| Error::InvalidData(e.to_string()))?,
        )
    } else {
        None
    };
    let unit = Normal::new(0.0, 1.0).expect("standard normal");

    let pool_size = POOL_FACTOR * count;
    let mut pool = Array2::zeros((pool_size, d));
    for mut row in pool.rows_mut() {
        let j = match &component {
            Some(w) => w.sample(&mut rng),
            None => rng.gen_range(0..spec.len()),
        };
        for (k, v) in row.iter_mut().enumerate() {
            *v = spec.z()[[j, k]] + sigma[k] * unit.sample(&mut rng);
        }
    }

    let target: Array1<f64> = pool.rows().into_iter().map(|p| spec.evaluate(p)).collect();
    let mut penalty = Array1::<f64>::zeros(pool_size);
    let mut out = Array2::zeros((count, d));
    for t in 0..count {
        let scale = 1.0 / (t as f64 + 1.0);
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..pool_size {
            let v = target[i] - scale * penalty[i];
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        let chosen = pool.row(best).to_owned();
        for (p, cand) in penalty.iter_mut().zip(pool.rows()) {
            *p += kernel.eval(chosen.view(), cand);
        }
        out.row_mut(t).assign(&chosen);
    }
    Ok(out)
}
