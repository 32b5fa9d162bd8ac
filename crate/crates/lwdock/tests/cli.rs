use std::io::ErrorKind;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

use lwdock::core::learners::{Logistic, LogisticOptions};
use lwdock::core::specification::{DataType, SemanticSpec, TaskType};
use lwdock::core::storage::schema::{to_json, ModelDocument, StatDocument};
use lwdock::core::table::{read_table_file, write_table};
use lwdock::service::{Config, RunningServer};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn lwdock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lwdock"))
        .args(args)
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!(
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn blob(center: [f64; 2], m: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((m, 2), |(_, j)| center[j] + n.sample(&mut rng))
}

fn write_csv(path: &Path, x: &Array2<f64>) {
    let header: Vec<String> = (0..x.ncols()).map(|j| format!("c{j}")).collect();
    write_table(std::fs::File::create(path).unwrap(), &header, x).unwrap();
}

/// Writes data.csv, train.csv (features plus label), model.json and
/// semantic.json for a two-class learnware around `center`.
fn developer_files(dir: &Path, center: [f64; 2], seed: u64) {
    let x = blob(center, 100, seed);
    let labels: Vec<usize> = x
        .rows()
        .into_iter()
        .map(|r| usize::from(r[0] > center[0]))
        .collect();
    let model = Logistic::fit(x.view(), &labels, 2, None, &LogisticOptions::default())
        .unwrap()
        .into_model()
        .unwrap();
    write_csv(&dir.join("data.csv"), &x);
    let mut train = Array2::zeros((x.nrows(), 3));
    train.slice_mut(ndarray::s![.., ..2]).assign(&x);
    for (i, &l) in labels.iter().enumerate() {
        train[[i, 2]] = l as f64;
    }
    write_csv(&dir.join("train.csv"), &train);
    std::fs::write(
        dir.join("model.json"),
        to_json(&ModelDocument::from_model(&model)),
    )
    .unwrap();
    let semantic = SemanticSpec {
        data_type: DataType::Table,
        task_type: TaskType::Classification,
        scenarios: ["retail".to_string()].into(),
        description: "two-class fixture".into(),
        input_dim: 2,
        feature_descriptions: vec![],
        output_dim: 2,
        label_names: None,
    };
    std::fs::write(
        dir.join("semantic.json"),
        serde_json::to_vec(&semantic).unwrap(),
    )
    .unwrap();
}

#[test]
fn bad_usage_exits_2() {
    assert_eq!(lwdock(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        lwdock(&["spec-gen", "--input", "x.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(
        lwdock(&[
            "reuse",
            "--mode",
            "stacking",
            "--learnware",
            "a.zip",
            "--data",
            "d.csv",
            "--out",
            "o"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        lwdock(&["bench", "--scenario", "nope", "--out", "r.csv"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(lwdock(&["--help"]).status.code(), Some(0));
}

#[test]
fn spec_gen_on_one_row() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("one.csv"), "a,b,c\n1.5,-2,3\n").unwrap();
    let out = dir.path().join("spec.json");
    let o = lwdock(&[
        "spec-gen",
        "--input",
        p(&dir.path().join("one.csv")),
        "--size",
        "5",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let doc: StatDocument = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(doc.beta.len(), 1);
    assert_eq!(doc.beta[0], Some(1.0));
    assert_eq!(doc.z[0], vec![Some(1.5), Some(-2.0), Some(3.0)]);
    assert_eq!(doc.gamma, 0.1);

    std::fs::write(dir.path().join("raw.csv"), "1.5,-2,3\n").unwrap();
    let raw = dir.path().join("raw.json");
    let o = lwdock(&[
        "spec-gen",
        "--input",
        p(&dir.path().join("raw.csv")),
        "--no-header",
        "--out",
        p(&raw),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    assert_eq!(std::fs::read(&raw).unwrap(), std::fs::read(&out).unwrap());
}

#[test]
fn spec_gen_is_deterministic_and_offline() {
    let dir = tempfile::tempdir().unwrap();
    write_csv(&dir.path().join("d.csv"), &blob([0.0, 0.0], 300, 4));
    // Any outgoing connection through the configured server or a proxy lands here.
    let trap = TcpListener::bind("127.0.0.1:0").unwrap();
    trap.set_nonblocking(true).unwrap();
    let url = format!("http://{}", trap.local_addr().unwrap());
    let run = |out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_lwdock"))
            .args([
                "spec-gen",
                "--input",
                p(&dir.path().join("d.csv")),
                "--size",
                "8",
                "--gamma",
                "0.2",
            ])
            .args(["--seed", "3", "--out", p(&dir.path().join(out))])
            .env("LWDOCK_SERVER", &url)
            .env("HTTP_PROXY", &url)
            .env("HTTPS_PROXY", &url)
            .env("ALL_PROXY", &url)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", text(&o));
        std::fs::read(dir.path().join(out)).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
    assert_eq!(
        trap.accept().map(|_| ()).unwrap_err().kind(),
        ErrorKind::WouldBlock
    );
}

#[test]
fn pack_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    developer_files(d, [0.0, 0.0], 1);
    assert!(lwdock(&[
        "spec-gen",
        "--input",
        p(&d.join("data.csv")),
        "--out",
        p(&d.join("spec.json"))
    ])
    .status
    .success());
    let pack = |semantic: &Path, out: &Path| {
        lwdock(&[
            "pack",
            "--model",
            p(&d.join("model.json")),
            "--semantic",
            p(semantic),
            "--spec",
            p(&d.join("spec.json")),
            "--out",
            p(out),
        ])
    };
    let o = pack(&d.join("semantic.json"), &d.join("ok.zip"));
    assert!(o.status.success(), "{}", text(&o));
    let o = lwdock(&["check", p(&d.join("ok.zip"))]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));

    let bad = std::fs::read_to_string(d.join("semantic.json"))
        .unwrap()
        .replace("\"input_dim\":2", "\"input_dim\":5");
    std::fs::write(d.join("bad.json"), bad).unwrap();
    assert!(pack(&d.join("bad.json"), &d.join("bad.zip"))
        .status
        .success());
    let o = lwdock(&["check", p(&d.join("bad.zip"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&o.stdout).contains("DIM_MISMATCH"),
        "{}",
        text(&o)
    );

    std::fs::write(d.join("junk.zip"), b"junk").unwrap();
    let o = lwdock(&["check", p(&d.join("junk.zip"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("PackageFormatError"),
        "{}",
        text(&o)
    );
}

#[test]
fn end_to_end_against_a_live_dock() {
    let dir = tempfile::tempdir().unwrap();
    let server = RunningServer::start(Config::new(dir.path().join("db"), "127.0.0.1:0")).unwrap();
    let url = server.url();

    let mut ids = Vec::new();
    for (k, center) in [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]
        .into_iter()
        .enumerate()
    {
        let d = dir.path().join(format!("dev{k}"));
        std::fs::create_dir_all(&d).unwrap();
        developer_files(&d, center, k as u64);
        assert!(lwdock(&[
            "spec-gen",
            "--input",
            p(&d.join("data.csv")),
            "--out",
            p(&d.join("spec.json"))
        ])
        .status
        .success());
        let zip = d.join("pkg.zip");
        let o = lwdock(&[
            "pack",
            "--model",
            p(&d.join("model.json")),
            "--semantic",
            p(&d.join("semantic.json")),
            "--spec",
            p(&d.join("spec.json")),
            "--out",
            p(&zip),
        ]);
        assert!(o.status.success(), "{}", text(&o));
        let o = lwdock(&["submit", p(&zip), "--server", &url, "--wait"]);
        assert!(o.status.success(), "{}", text(&o));
        let stdout = String::from_utf8_lossy(&o.stdout).to_string();
        assert!(stdout.contains("VERIFIED"), "{stdout}");
        ids.push(stdout.split('\t').next().unwrap().to_string());
    }

    for (k, id) in ids.iter().enumerate() {
        let spec = dir.path().join(format!("dev{k}/spec.json"));
        let o = lwdock(&["search", "--spec", p(&spec), "--server", &url, "--json"]);
        assert!(o.status.success(), "{}", text(&o));
        let res: lwdock::core::market::SearchResult = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(&res.single[0].id, id);
        let o = lwdock(&[
            "search",
            "--spec",
            p(&spec),
            "--task-type",
            "classification",
            "--server",
            &url,
        ]);
        let table = String::from_utf8_lossy(&o.stdout).to_string();
        assert!(
            table.lines().nth(1).unwrap().contains(id.as_str()),
            "{table}"
        );
    }

    let fetched = dir.path().join("fetched");
    let o = lwdock(&["fetch", &ids[1], "--server", &url, "--out", p(&fetched)]);
    assert!(o.status.success(), "{}", text(&o));
    let zip = fetched.join(format!("{}.zip", ids[1]));
    assert_eq!(
        std::fs::read(&zip).unwrap(),
        std::fs::read(dir.path().join("dev1/pkg.zip")).unwrap()
    );

    let test = dir.path().join("dev1/data.csv");
    let pred = dir.path().join("pred.csv");
    let o = lwdock(&[
        "reuse",
        "--mode",
        "vote",
        "--learnware",
        p(&zip),
        "--data",
        p(&test),
        "--out",
        p(&pred),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let table = read_table_file(&pred, true).unwrap();
    assert_eq!(table.header.unwrap(), vec!["label", "p_0", "p_1"]);
    assert_eq!(table.values.nrows(), 100);

    let others = [
        dir.path().join("dev0/pkg.zip"),
        dir.path().join("dev2/pkg.zip"),
    ];
    let o = lwdock(&[
        "reuse",
        "--mode",
        "feature-augment",
        "--learnware",
        p(&others[0]),
        p(&others[1]),
        "--data",
        p(&test),
        "--labels",
        p(&dir.path().join("dev1/train.csv")),
        "--out",
        p(&pred),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let o = lwdock(&[
        "reuse",
        "--mode",
        "ensemble-prune",
        "--learnware",
        p(&others[0]),
        "--data",
        p(&test),
        "--out",
        p(&pred),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("ParameterError"),
        "{}",
        text(&o)
    );

    let o = lwdock(&["fetch", "missing", "--server", &url, "--out", p(&fetched)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("NotFoundError"),
        "{}",
        text(&o)
    );
}
