#![allow(dead_code)]

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Samples `m` rows from an even mixture of isotropic Gaussians.
pub fn gaussian_mixture(centers: &[Vec<f64>], sigma: f64, m: usize, seed: u64) -> Array2<f64> {
    let d = centers[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    Array2::from_shape_fn((m, d), |(i, j)| {
        centers[i % centers.len()][j] + noise.sample(&mut rng)
    })
}

fn k(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-gamma * d2).exp()
}

/// Direct double-sum expansion of ‖Σ_i u_i k(a_i,·) − Σ_j v_j k(b_j,·)‖².
pub fn oracle_mmd2(u: &[f64], a: &[Vec<f64>], v: &[f64], b: &[Vec<f64>], gamma: f64) -> f64 {
    let mut aa = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            aa += u[i] * u[j] * k(&a[i], &a[j], gamma);
        }
    }
    let mut bb = 0.0;
    for i in 0..b.len() {
        for j in 0..b.len() {
            bb += v[i] * v[j] * k(&b[i], &b[j], gamma);
        }
    }
    let mut ab = 0.0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            ab += u[i] * v[j] * k(&a[i], &b[j], gamma);
        }
    }
    aa + bb - 2.0 * ab
}

pub fn rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// MMD² between a spec and the uniform empirical embedding of `x`.
pub fn oracle_spec_vs_data(spec: &lwdock_core::RkmeSpec, x: &Array2<f64>) -> f64 {
    let m = x.nrows();
    oracle_mmd2(
        &spec.beta().to_vec(),
        &rows(spec.z()),
        &vec![1.0 / m as f64; m],
        &rows(x),
        spec.kernel().gamma(),
    )
}

use std::collections::BTreeMap;

use lwdock_core::model::PortableModel;
use lwdock_core::specification::{DataType, SemanticSpec, StatSpec, TaskType};
use lwdock_core::storage::{LearnwarePackage, ModelSource};
use lwdock_core::{generate_rkme, RkmeOptions};

pub fn semantic(task: TaskType, input_dim: usize, output_dim: usize) -> SemanticSpec {
    SemanticSpec {
        data_type: DataType::Table,
        task_type: task,
        scenarios: ["test".to_string()].into(),
        description: "fixture".into(),
        input_dim,
        feature_descriptions: vec![],
        output_dim,
        label_names: None,
    }
}

/// Linear regression package whose spec is fitted to `x`.
pub fn linear_package(name: &str, x: &Array2<f64>, seed: u64) -> LearnwarePackage {
    let d = x.ncols();
    let spec = generate_rkme(
        x.view(),
        &RkmeOptions::default().with_size(10).with_seed(seed),
    )
    .unwrap()
    .spec;
    LearnwarePackage {
        name: name.into(),
        semantic: semantic(TaskType::Regression, d, 1),
        stat_specs: vec![StatSpec::rkme_table(spec)],
        model: ModelSource::Portable(
            PortableModel::linear(Array2::ones((1, d)), ndarray::Array1::zeros(1)).unwrap(),
        ),
    }
}

/// A stdio model in Python. `mode` is one of `ok`, `crash`, `dims`,
/// `badprob`, `width` or `slow`.
pub const STUB_MODEL: &str = r#"import json, sys, time
mode, din, dout = sys.argv[1], int(sys.argv[2]), int(sys.argv[3])
if mode == "crash":
    sys.exit(3)
for line in sys.stdin:
    req = json.loads(line)
    if req["op"] == "describe":
        if mode == "slow":
            time.sleep(float(sys.argv[4]))
        reported = din + 1 if mode == "dims" else din
        print(json.dumps({"input_dim": reported, "output_dim": dout}), flush=True)
    else:
        width = dout + 1 if mode == "width" else dout
        value = 1.0 if mode == "badprob" else 1.0 / dout
        print(json.dumps({"y": [[value] * width for _ in req["X"]]}), flush=True)
"#;

pub fn python_available() -> bool {
    std::process::Command::new("python3")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

/// Classification package served by [`STUB_MODEL`].
pub fn external_package(
    name: &str,
    mode: &str,
    x: &Array2<f64>,
    n_classes: usize,
    extra: &[&str],
) -> LearnwarePackage {
    let d = x.ncols();
    let spec = generate_rkme(x.view(), &RkmeOptions::default().with_size(10))
        .unwrap()
        .spec;
    let mut command: Vec<String> = [
        "python3",
        "stub.py",
        mode,
        &d.to_string(),
        &n_classes.to_string(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    command.extend(extra.iter().map(|s| s.to_string()));
    let mut files = BTreeMap::new();
    files.insert("stub.py".to_string(), STUB_MODEL.as_bytes().to_vec());
    LearnwarePackage {
        name: name.into(),
        semantic: semantic(TaskType::Classification, d, n_classes),
        stat_specs: vec![StatSpec::rkme_table(spec)],
        model: ModelSource::External {
            command,
            entry: "stub.py".into(),
            files,
        },
    }
}

/// Direct double sum `Σ_i Σ_j u_i v_j k(a_i, b_j)`.
pub fn oracle_inner(a: &lwdock_core::RkmeSpec, b: &lwdock_core::RkmeSpec) -> f64 {
    let (ra, rb) = (rows(a.z()), rows(b.z()));
    let gamma = a.kernel().gamma();
    let mut s = 0.0;
    for (i, x) in ra.iter().enumerate() {
        for (j, y) in rb.iter().enumerate() {
            s += a.beta()[i] * b.beta()[j] * k(x, y, gamma);
        }
    }
    s
}

/// An in-memory verified learnware around `spec` with a constant linear model.
pub fn spec_learnware(
    id: &str,
    spec: lwdock_core::RkmeSpec,
) -> std::sync::Arc<lwdock_core::Learnware> {
    let d = spec.dim();
    let model = PortableModel::linear(Array2::zeros((1, d)), ndarray::Array1::zeros(1)).unwrap();
    std::sync::Arc::new(lwdock_core::Learnware {
        id: id.into(),
        name: id.into(),
        semantic: semantic(TaskType::Regression, d, 1),
        stat_specs: [(
            lwdock_core::specification::StatKind::RkmeTable,
            StatSpec::rkme_table(spec),
        )]
        .into(),
        model: lwdock_core::model::Model::Portable(model),
        status: lwdock_core::Status::Verified,
    })
}

/// `n` centers in `d` dimensions, pairwise at least `min_dist` apart.
pub fn spaced_centers(n: usize, d: usize, min_dist: f64, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = min_dist * (n as f64).powf(1.0 / d as f64) * 1.5;
    let mut out: Vec<Vec<f64>> = Vec::new();
    while out.len() < n {
        let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-half..half)).collect();
        if out.iter().all(|o| {
            o.iter()
                .zip(&c)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                >= min_dist
        }) {
            out.push(c);
        }
    }
    out
}

/// Rows drawn from the components in proportion to `weights` (rounded).
pub fn mixture_sample(
    centers: &[Vec<f64>],
    weights: &[f64],
    sigma: f64,
    m: usize,
    seed: u64,
) -> Array2<f64> {
    let d = centers[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let counts: Vec<usize> = weights
        .iter()
        .map(|w| (w * m as f64).round() as usize)
        .collect();
    let total: usize = counts.iter().sum();
    let mut x = Array2::zeros((total, d));
    let mut r = 0;
    for (c, &n) in centers.iter().zip(&counts) {
        for _ in 0..n {
            for j in 0..d {
                x[[r, j]] = c[j] + noise.sample(&mut rng);
            }
            r += 1;
        }
    }
    x
}
