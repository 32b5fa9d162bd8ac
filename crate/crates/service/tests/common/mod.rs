#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::Duration;

use lwdock_core::learners::{Logistic, LogisticOptions};
use lwdock_core::specification::{DataType, SemanticSpec, StatSpec, TaskType};
use lwdock_core::storage::{LearnwarePackage, ModelSource};
use lwdock_core::{generate_rkme, RkmeOptions};
use lwdock_service::{Config, RunningServer};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const ADMIN: &str = "s3cret";

pub fn start(dir: &std::path::Path) -> RunningServer {
    let mut config = Config::new(dir, "127.0.0.1:0");
    config.admin_token = Some(ADMIN.into());
    config.poll_interval = Duration::from_millis(50);
    RunningServer::start(config).unwrap()
}

/// `m` points around `center` with unit spread.
pub fn blob(center: &[f64], m: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((m, center.len()), |(_, j)| center[j] + n.sample(&mut rng))
}

pub fn semantic(
    task: TaskType,
    input_dim: usize,
    output_dim: usize,
    scenario: &str,
) -> SemanticSpec {
    SemanticSpec {
        data_type: DataType::Table,
        task_type: task,
        scenarios: [scenario.to_string()].into(),
        description: format!("{scenario} fixture"),
        input_dim,
        feature_descriptions: vec![],
        output_dim,
        label_names: None,
    }
}

/// A two-class logistic model trained on a blob around `center`, labelled
/// by the sign of the first coordinate offset.
pub fn classifier_package(
    name: &str,
    center: &[f64],
    seed: u64,
) -> (LearnwarePackage, Array2<f64>) {
    let x = blob(center, 120, seed);
    let labels: Vec<usize> = x
        .rows()
        .into_iter()
        .map(|r| usize::from(r[0] > center[0]))
        .collect();
    let model = Logistic::fit(x.view(), &labels, 2, None, &LogisticOptions::default())
        .unwrap()
        .into_model()
        .unwrap();
    let spec = generate_rkme(
        x.view(),
        &RkmeOptions::default().with_size(10).with_seed(seed),
    )
    .unwrap()
    .spec;
    let pkg = LearnwarePackage {
        name: name.into(),
        semantic: semantic(TaskType::Classification, center.len(), 2, "retail"),
        stat_specs: vec![StatSpec::rkme_table(spec)],
        model: ModelSource::Portable(model),
    };
    (pkg, x)
}

pub const STUB_MODEL: &str = r#"import json, sys, time
mode, din, dout = sys.argv[1], int(sys.argv[2]), int(sys.argv[3])
if mode == "crash":
    sys.exit(3)
for line in sys.stdin:
    req = json.loads(line)
    if req["op"] == "describe":
        if mode == "slow":
            time.sleep(float(sys.argv[4]))
        print(json.dumps({"input_dim": din, "output_dim": dout}), flush=True)
    else:
        print(json.dumps({"y": [[1.0 / dout] * dout for _ in req["X"]]}), flush=True)
"#;

pub fn python_available() -> bool {
    std::process::Command::new("python3")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

/// A stdio classifier; `mode` is `ok`, `crash` or `slow` (with the delay in
/// seconds as `extra`).
pub fn external_package(name: &str, mode: &str, extra: &[&str]) -> LearnwarePackage {
    let x = blob(&[0.0, 0.0], 60, 1);
    let spec = generate_rkme(x.view(), &RkmeOptions::default().with_size(5))
        .unwrap()
        .spec;
    let mut command: Vec<String> = ["python3", "stub.py", mode, "2", "2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    command.extend(extra.iter().map(|s| s.to_string()));
    let files = BTreeMap::from([("stub.py".to_string(), STUB_MODEL.as_bytes().to_vec())]);
    LearnwarePackage {
        name: name.into(),
        semantic: semantic(TaskType::Classification, 2, 2, "stub"),
        stat_specs: vec![StatSpec::rkme_table(spec)],
        model: ModelSource::External {
            command,
            entry: "stub.py".into(),
            files,
        },
    }
}
