//! A user whose table has the learnware's columns in a different order:
//! learn the input map from the two specs alone, then reuse through it.
//!
//!     cargo run --example hetero_alignment

use std::sync::Arc;

use lwdock::core::hetero::{align_input, AlignOptions};
use lwdock::core::learners::Ridge;
use lwdock::core::model::Model;
use lwdock::core::reuse::{reuse_hetero, rmse, Targets};
use lwdock::core::specification::{DataType, SemanticSpec, StatKind, StatSpec, TaskType};
use lwdock::core::{generate_rkme, Learnware, RkmeOptions, Status};
use ndarray::{array, s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn sample(m: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.6).unwrap();
    let centers = [[-2.0, 1.0, 3.0], [2.0, -1.0, 0.0], [0.0, 2.5, -2.0]];
    let scale = [0.5, 1.0, 2.0];
    Array2::from_shape_fn((m, 3), |(i, j)| {
        (centers[i % 3][j] + noise.sample(&mut rng)) * scale[j]
    })
}

fn main() -> lwdock::core::Result<()> {
    let coef = array![[1.0], [-2.0], [0.5]];
    let xd = sample(500, 1);
    let model = Ridge::fit(xd.view(), xd.dot(&coef).view(), 1e-3)?.into_model()?;
    let spec = generate_rkme(xd.view(), &RkmeOptions::default().with_size(30))?.spec;
    let lw = Arc::new(Learnware {
        id: "dev".into(),
        name: "dev".into(),
        semantic: SemanticSpec {
            data_type: DataType::Table,
            task_type: TaskType::Regression,
            scenarios: Default::default(),
            description: String::new(),
            input_dim: 3,
            feature_descriptions: vec![],
            output_dim: 1,
            label_names: None,
        },
        stat_specs: [(StatKind::RkmeTable, StatSpec::rkme_table(spec))].into(),
        model: Model::Portable(model),
        status: Status::Verified,
    });

    // same distribution and target, columns stored as (c, a, b)
    let xo = sample(300, 2);
    let y = xo.dot(&coef);
    let xu = xo.select(Axis(1), &[2, 0, 1]);
    let user_spec = generate_rkme(xu.view(), &RkmeOptions::default().with_size(30))?.spec;

    let fit = align_input(
        &user_spec,
        lw.rkme().expect("table learnware"),
        &AlignOptions::default(),
    )?;
    println!("alignment MMD² {:.2e}", fit.objective());
    println!("learned map W (learnware column × user column):");
    for row in fit.map.w.rows() {
        println!(
            "  [{}]",
            row.iter()
                .map(|v| format!("{v:>6.2}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
    }

    let (xl, xt) = (xu.slice(s![..20, ..]), xu.slice(s![20.., ..]));
    let labeled = Targets::Regression(y.slice(s![..20, ..]).to_owned());
    let reused = reuse_hetero(lw.clone(), fit.map, xl, &labeled)?;
    let direct = lw.model.predict(xt)?;
    println!(
        "RMSE through alignment {:.3}",
        rmse(reused.predict(xt)?.view(), y.slice(s![20.., ..]))?
    );
    println!(
        "RMSE feeding columns as-is {:.3}",
        rmse(direct.view(), y.slice(s![20.., ..]))?
    );
    Ok(())
}
