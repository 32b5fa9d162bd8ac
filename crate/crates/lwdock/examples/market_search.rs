//! Fill a local dock with developers from separate regions, then search it
//! with a user whose data mixes two of them.
//!
//!     cargo run --example market_search

use std::collections::BTreeSet;

use lwdock::core::learners::Ridge;
use lwdock::core::market::{Market, SearchOptions};
use lwdock::core::specification::{DataType, SemanticSpec, StatSpec, TaskType, UserInfo};
use lwdock::core::storage::{LearnwarePackage, ModelSource};
use lwdock::core::{generate_rkme, RkmeOptions};
use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn region(center: [f64; 3], m: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((m, 3), |(_, j)| center[j] + noise.sample(&mut rng))
}

fn main() -> lwdock::core::Result<()> {
    let dir = tempfile::tempdir()?;
    let market = Market::open(dir.path())?;
    let centers = [
        [0.0, 0.0, 0.0],
        [8.0, 0.0, 0.0],
        [0.0, 8.0, 0.0],
        [0.0, 0.0, 8.0],
        [8.0, 8.0, 8.0],
    ];

    for (i, c) in centers.iter().enumerate() {
        let x = region(*c, 300, i as u64);
        let y = x.sum_axis(Axis(1)).insert_axis(Axis(1));
        let pkg = LearnwarePackage {
            name: format!("region-{i}"),
            semantic: SemanticSpec {
                data_type: DataType::Table,
                task_type: TaskType::Regression,
                scenarios: BTreeSet::from(["demo".to_string()]),
                description: format!("ridge model for region {i}"),
                input_dim: 3,
                feature_descriptions: vec![],
                output_dim: 1,
                label_names: None,
            },
            stat_specs: vec![StatSpec::rkme_table(
                generate_rkme(x.view(), &RkmeOptions::default().with_size(20))?.spec,
            )],
            model: ModelSource::Portable(Ridge::fit(x.view(), y.view(), 1.0)?.into_model()?),
        };
        let rec = market.insert(&pkg)?;
        println!("inserted {} as {}", pkg.name, rec.id);
    }
    for (id, report) in market.verify_pending()? {
        println!(
            "checked {id}: {}",
            if report.pass { "VERIFIED" } else { "REJECTED" }
        );
    }

    // 70% of the user's rows look like region 1, 30% like region 3
    let mut user = region(centers[1], 210, 100);
    user.append(Axis(0), region(centers[3], 90, 101).view())
        .unwrap();
    let spec = generate_rkme(user.view(), &RkmeOptions::default().with_size(20))?.spec;
    let result = market.search(
        &UserInfo::from_stat(StatSpec::rkme_table(spec)),
        &SearchOptions::default(),
    )?;

    println!(
        "\nsingle search (below threshold: {}):",
        result.below_threshold
    );
    for hit in &result.single {
        println!(
            "  {}  score {:.3}  MMD² {:.4}",
            hit.id,
            hit.score,
            hit.mmd2.unwrap_or(f64::NAN)
        );
    }
    println!("multiple search:");
    for (id, w) in result.multiple.ids.iter().zip(&result.multiple.weights) {
        println!("  {id}  weight {w:.3}");
    }
    Ok(())
}
