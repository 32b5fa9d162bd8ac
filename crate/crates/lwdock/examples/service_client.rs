//! Start a dock server in-process, submit a package over HTTP, wait for the
//! validator, then search and download it.
//!
//!     cargo run --example service_client

use std::collections::BTreeSet;
use std::time::Duration;

use lwdock::core::learners::{Logistic, LogisticOptions};
use lwdock::core::specification::{DataType, SemanticSpec, StatSpec, TaskType};
use lwdock::core::storage::schema::StatDocument;
use lwdock::core::storage::{LearnwarePackage, ModelSource};
use lwdock::core::{generate_rkme, RkmeOptions};
use lwdock::service::{Config, ListFilter, RunningServer, SearchRequest};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let server = RunningServer::start(Config::new(dir.path().join("dock"), "127.0.0.1:0"))?;
    println!("dock listening on {}", server.url());
    let client = server.client();

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let x = Array2::from_shape_fn((200, 2), |_| noise.sample(&mut rng));
    let y: Vec<usize> = x
        .rows()
        .into_iter()
        .map(|r| usize::from(r[0] + r[1] > 0.0))
        .collect();
    let pkg = LearnwarePackage {
        name: "diagonal".into(),
        semantic: SemanticSpec {
            data_type: DataType::Table,
            task_type: TaskType::Classification,
            scenarios: BTreeSet::from(["demo".to_string()]),
            description: "splits the plane along x + y = 0".into(),
            input_dim: 2,
            feature_descriptions: vec![],
            output_dim: 2,
            label_names: None,
        },
        stat_specs: vec![StatSpec::rkme_table(
            generate_rkme(x.view(), &RkmeOptions::default().with_size(10))?.spec,
        )],
        model: ModelSource::Portable(
            Logistic::fit(x.view(), &y, 2, None, &LogisticOptions::default())?.into_model()?,
        ),
    };
    let bytes = pkg.pack()?;

    let submitted = client.submit(bytes.clone())?;
    println!("submitted {} ({:?})", submitted.id, submitted.status);
    let detail = client.wait_terminal(&submitted.id, Duration::from_secs(30))?;
    println!(
        "validator verdict: {:?} {:?}",
        detail.record.status, detail.record.failures
    );

    let req = SearchRequest {
        stat: Some(StatDocument::from_spec(&pkg.stat_specs[0])),
        ..Default::default()
    };
    for hit in client.search(&req)?.single {
        println!("search hit {} score {:.3}", hit.id, hit.score);
    }
    println!("listed: {}", client.list(&ListFilter::default())?.len());
    println!(
        "download matches upload: {}",
        client.package(&submitted.id)? == bytes
    );
    println!("health: {:?}", client.health()?);
    server.stop()?;
    Ok(())
}
