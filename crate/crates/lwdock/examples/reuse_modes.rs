//! Reuse learnwares found for a user with every reuse mode and compare error
//! rates against a model trained on the user's few labels.
//!
//!     cargo run --example reuse_modes

use std::sync::Arc;

use lwdock::core::learners::{Logistic, LogisticOptions};
use lwdock::core::model::Model;
use lwdock::core::reuse::{error_rate, fit_scratch, Member, ReuseMode, Reuser, Targets};
use lwdock::core::specification::{DataType, SemanticSpec, StatKind, StatSpec, TaskType};
use lwdock::core::{generate_rkme, Learnware, RkmeOptions, Status};
use ndarray::{s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Rows around `center`; the label is the side of a region-specific line.
fn region(center: [f64; 2], tilt: f64, m: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let x = Array2::from_shape_fn((m, 2), |(_, j)| center[j] + noise.sample(&mut rng));
    let y = x
        .rows()
        .into_iter()
        .map(|r| usize::from(r[0] - center[0] + tilt * (r[1] - center[1]) > 0.0))
        .collect();
    (x, y)
}

fn developer(i: usize, center: [f64; 2], tilt: f64) -> lwdock::core::Result<Arc<Learnware>> {
    let (x, y) = region(center, tilt, 300, i as u64);
    let model = Logistic::fit(x.view(), &y, 2, None, &LogisticOptions::default())?.into_model()?;
    let spec = generate_rkme(x.view(), &RkmeOptions::default().with_size(20))?.spec;
    Ok(Arc::new(Learnware {
        id: format!("dev{i}"),
        name: format!("dev{i}"),
        semantic: SemanticSpec {
            data_type: DataType::Table,
            task_type: TaskType::Classification,
            scenarios: Default::default(),
            description: String::new(),
            input_dim: 2,
            feature_descriptions: vec![],
            output_dim: 2,
            label_names: None,
        },
        stat_specs: [(StatKind::RkmeTable, StatSpec::rkme_table(spec))].into(),
        model: Model::Portable(model),
        status: Status::Verified,
    }))
}

fn main() -> lwdock::core::Result<()> {
    let setups = [([0.0, 0.0], 0.5), ([9.0, 0.0], -1.0), ([0.0, 9.0], 2.0)];
    let members: Vec<Member> = setups
        .iter()
        .enumerate()
        .map(|(i, (c, t))| developer(i, *c, *t).map(Member::new))
        .collect::<lwdock::core::Result<_>>()?;

    // the user's task covers the first two regions
    let (mut x, mut y) = region(setups[0].0, setups[0].1, 200, 50);
    let (x2, y2) = region(setups[1].0, setups[1].1, 200, 51);
    x.append(Axis(0), x2.view()).unwrap();
    y.extend(y2);
    let order: Vec<usize> = (0..400).map(|i| (i * 7919) % 400).collect();
    let (x, y) = (
        x.select(Axis(0), &order),
        order.iter().map(|&i| y[i]).collect::<Vec<_>>(),
    );
    let (xl, xt) = (x.slice(s![..30, ..]), x.slice(s![30.., ..]));
    let labeled = Targets::Classification {
        labels: y[..30].to_vec(),
        n_classes: 2,
    };

    println!("mode              error");
    for name in [
        "mean",
        "vote",
        "job-select",
        "ensemble-prune",
        "feature-augment",
    ] {
        let mode: ReuseMode = name.parse()?;
        let reuser = Reuser::fit(mode, members.clone(), Some((xl, &labeled)), 0)?;
        println!(
            "{name:<16}  {:.3}",
            error_rate(reuser.predict(xt)?.view(), &y[30..])
        );
    }
    let scratch = fit_scratch(xl, &labeled, 1.0)?;
    println!(
        "{:<16}  {:.3}",
        "scratch (30)",
        error_rate(scratch.predict(xt)?.view(), &y[30..])
    );
    Ok(())
}
