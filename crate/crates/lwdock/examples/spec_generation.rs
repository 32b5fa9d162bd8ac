//! Summarize a data set with a reduced kernel mean embedding and measure how
//! far the summary is from the full empirical embedding.
//!
//!     cargo run --example spec_generation

use lwdock::core::{generate_rkme, mmd_squared, KernelParams, RkmeOptions, RkmeSpec};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> lwdock::core::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let centers = [[0.0, 0.0], [5.0, 1.0], [1.0, 5.0]];
    let x = Array2::from_shape_fn((1500, 2), |(i, j)| {
        centers[i % 3][j] + noise.sample(&mut rng)
    });

    // every row with weight 1/m: the embedding the reduced set approximates
    let m = x.nrows();
    let full = RkmeSpec::new(
        Array1::from_elem(m, 1.0 / m as f64),
        x.clone(),
        KernelParams::default(),
    )?;

    println!("size  MMD²        steps");
    for size in [1, 2, 4, 8, 16, 32] {
        let fit = generate_rkme(x.view(), &RkmeOptions::default().with_size(size))?;
        println!(
            "{size:>4}  {:<10.3e}  {}",
            mmd_squared(&fit.spec, &full)?,
            fit.objective_trace.len()
        );
    }

    let fit = generate_rkme(x.view(), &RkmeOptions::default().with_size(3))?;
    println!("\nthree-point summary (β, z):");
    for (b, z) in fit.spec.beta().iter().zip(fit.spec.z().rows()) {
        println!("  {b:.3}  [{:.2}, {:.2}]", z[0], z[1]);
    }
    Ok(())
}
