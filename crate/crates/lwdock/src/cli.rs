//! The `lwdock` command.
//!
//! Exit codes: 0 on success, 1 on a local or remote failure (a failed check
//! included), 2 on bad usage.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use lwdock_core::bench::{self, Scenario, ScenarioKind};
use lwdock_core::hetero::SemanticProjector;
use lwdock_core::market::{assemble, check_learnware, SearchResult};
use lwdock_core::reuse::{labels_of, Member, ReuseMode, Reuser, Targets};
use lwdock_core::specification::{generate_stat_spec, DataType, SemanticSpec, StatSpec, TaskType};
use lwdock_core::storage::schema::{parse_json, to_json, ModelDocument, StatDocument};
use lwdock_core::storage::{LearnwarePackage, ModelSource};
use lwdock_core::table::{read_table_file, write_table};
use lwdock_core::{Error, KernelParams, Learnware, RkmeOptions, Status};
use lwdock_service::{Client, ClientError, Config, SearchRequest};
use ndarray::Array2;

#[derive(Debug, Parser)]
#[command(
    name = "lwdock",
    version,
    about = "Submit, search and reuse learnwares"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ServerArg {
    /// Dock URL; defaults to $LWDOCK_SERVER or http://127.0.0.1:8080.
    #[arg(long)]
    pub server: Option<String>,
}

impl ServerArg {
    fn client(&self) -> Client {
        let url = self
            .server
            .clone()
            .or_else(|| {
                std::env::var("LWDOCK_SERVER")
                    .ok()
                    .filter(|s| !s.is_empty())
            })
            .unwrap_or_else(|| "http://127.0.0.1:8080".into());
        Client::new(url)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute an RKME spec of a local CSV table. Nothing leaves the machine.
    SpecGen {
        #[arg(long)]
        input: PathBuf,
        /// Number of support points (capped at the row count).
        #[arg(long)]
        size: Option<usize>,
        /// RBF kernel width.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// The first row holds data, not column names.
        #[arg(long)]
        no_header: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bundle a portable model, a semantic spec and a stat spec.
    Pack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        semantic: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Defaults to the output file stem.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the checker on a package locally.
    Check { package: PathBuf },
    /// Upload a package.
    Submit {
        package: PathBuf,
        #[command(flatten)]
        server: ServerArg,
        /// Poll until the validator decides.
        #[arg(long)]
        wait: bool,
    },
    /// Search the dock with a local spec and/or semantic facets.
    Search {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        task_type: Option<TaskType>,
        #[arg(long)]
        data_type: Option<DataType>,
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Case-insensitive substring of the description.
        #[arg(long)]
        description: Option<String>,
        /// Print the raw JSON result.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        server: ServerArg,
    },
    /// Download a verified package into a directory.
    Fetch {
        id: String,
        #[command(flatten)]
        server: ServerArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict on a local table with one or more packages.
    Reuse {
        #[arg(long, value_parser = parse_mode)]
        mode: ReuseMode,
        #[arg(long = "learnware", required = true, num_args = 1..)]
        learnwares: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Labelled training table; the last column is the label.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_header: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP API and validator.
    Serve {
        /// Market directory; defaults to $LWDOCK_DB.
        #[arg(long)]
        db: Option<PathBuf>,
        /// Listen address; defaults to $LWDOCK_ADDR.
        #[arg(long)]
        addr: Option<String>,
    },
    /// Run a synthetic scenario and write the loss report.
    Bench {
        #[arg(long, value_parser = parse_scenario)]
        scenario: ScenarioKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<ReuseMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Remote(ClientError),
    /// The command ran but its verdict is negative.
    Failed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{}: {e}", e.code()),
            CliError::Remote(e) => write!(f, "{e}"),
            CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError::Remote(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
        .into()
    })
}

fn file_name(path: &Path) -> &str {
    path.file_name().and_then(|s| s.to_str()).unwrap_or("input")
}

pub fn run(command: Command) -> CliResult {
    match command {
        Command::SpecGen {
            input,
            size,
            gamma,
            seed,
            no_header,
            out,
        } => spec_gen(&input, size, gamma, seed, no_header, &out),
        Command::Pack {
            model,
            semantic,
            spec,
            name,
            out,
        } => pack(&model, &semantic, &spec, name, &out),
        Command::Check { package } => check(&package),
        Command::Submit {
            package,
            server,
            wait,
        } => {
            let client = server.client();
            let s = client.submit(read(&package)?)?;
            println!("{}\t{}", s.id, s.status.as_str());
            if wait {
                let d = client.wait_terminal(&s.id, std::time::Duration::from_secs(600))?;
                println!(
                    "{}\t{}\t{}",
                    d.record.id,
                    d.record.status.as_str(),
                    d.record.failures.join(",")
                );
                if d.record.status == Status::Rejected {
                    return Err(CliError::Failed(format!(
                        "learnware {} was rejected",
                        d.record.id
                    )));
                }
            }
            Ok(())
        }
        Command::Search {
            spec,
            task_type,
            data_type,
            scenarios,
            description,
            json,
            server,
        } => {
            let stat = match &spec {
                Some(p) => Some(parse_json::<StatDocument>(file_name(p), &read(p)?)?),
                None => None,
            };
            let facets = lwdock_core::specification::SemanticFilter {
                task_type,
                data_type,
                scenarios: (!scenarios.is_empty()).then(|| scenarios.into_iter().collect()),
                description,
                ..Default::default()
            };
            let semantic = (facets != Default::default()).then_some(facets);
            let result = server.client().search(&SearchRequest {
                semantic,
                stat,
                options: None,
            })?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&result).expect("serializable")
                );
            } else {
                print_search(&result);
            }
            Ok(())
        }
        Command::Fetch { id, server, out } => {
            let bytes = server.client().package(&id)?;
            LearnwarePackage::unpack(&bytes)?;
            fs::create_dir_all(&out)?;
            let path = out.join(format!("{id}.zip"));
            fs::write(&path, bytes)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Reuse {
            mode,
            learnwares,
            data,
            labels,
            seed,
            no_header,
            out,
        } => reuse(
            mode,
            &learnwares,
            &data,
            labels.as_deref(),
            seed,
            no_header,
            &out,
        ),
        Command::Serve { db, addr } => {
            init_logging();
            let mut config = Config::from_env();
            if let Some(db) = db {
                config.db = db;
            }
            if let Some(addr) = addr {
                config.addr = addr;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(lwdock_service::serve(config))?;
            Ok(())
        }
        Command::Bench {
            scenario,
            seed,
            out,
        } => {
            let scn = Scenario::new(scenario, seed);
            let work = tempfile::tempdir()?;
            let report = bench::run(&scn, work.path())?;
            report.write_csv(fs::File::create(&out)?)?;
            for row in report.rows.iter().filter(|r| r.budget == 0) {
                println!(
                    "{:<16} {:.4} ± {:.4}",
                    row.method, row.mean_loss, row.std_loss
                );
            }
            Ok(())
        }
    }
}

fn init_logging() {
    let filter =
        tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn spec_gen(
    input: &Path,
    size: Option<usize>,
    gamma: Option<f64>,
    seed: u64,
    no_header: bool,
    out: &Path,
) -> CliResult {
    let table = read_table_file(input, !no_header)?;
    let mut opts = RkmeOptions::default().with_seed(seed);
    if let Some(n) = size {
        opts = opts.with_size(n);
    }
    if let Some(g) = gamma {
        opts = opts.with_kernel(KernelParams::new(g)?);
    }
    let spec = generate_stat_spec(DataType::Table, table.values.view(), &opts)?;
    fs::write(out, to_json(&StatDocument::from_spec(&spec)))?;
    println!(
        "{}: n={} dim={}",
        out.display(),
        spec.payload.len(),
        spec.payload.dim()
    );
    Ok(())
}

fn pack(model: &Path, semantic: &Path, spec: &Path, name: Option<String>, out: &Path) -> CliResult {
    let model = parse_json::<ModelDocument>(file_name(model), &read(model)?)?
        .into_model(file_name(model))?;
    let semantic_doc: SemanticSpec = parse_json(file_name(semantic), &read(semantic)?)?;
    let stat: StatSpec =
        parse_json::<StatDocument>(file_name(spec), &read(spec)?)?.into_spec(file_name(spec))?;
    let name = name.unwrap_or_else(|| {
        out.file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("learnware")
            .to_string()
    });
    let pkg = LearnwarePackage {
        name,
        semantic: semantic_doc,
        stat_specs: vec![stat],
        model: ModelSource::Portable(model),
    };
    fs::write(out, pkg.pack()?)?;
    println!("{}", out.display());
    Ok(())
}

/// A learnware built from a package file, with its runtime directory.
struct Local {
    learnware: Arc<Learnware>,
    _runtime: tempfile::TempDir,
}

fn load_local(path: &Path) -> CliResult<Local> {
    let pkg = LearnwarePackage::unpack(&read(path)?)?;
    let runtime = tempfile::tempdir()?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("local");
    let lw = assemble(
        id,
        Status::Waiting,
        &pkg,
        &runtime.path().join("model"),
        &SemanticProjector::default(),
    )?;
    Ok(Local {
        learnware: Arc::new(lw),
        _runtime: runtime,
    })
}

fn check(path: &Path) -> CliResult {
    let local = load_local(path)?;
    let report = check_learnware(&local.learnware);
    for f in &report.failures {
        println!("{}\t{}", f.code, f.message);
    }
    if report.pass {
        println!("PASS");
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "check failed: {}",
            report.codes().join(",")
        )))
    }
}

fn print_search(r: &SearchResult) {
    if r.single.is_empty() {
        println!("no matching learnwares");
        return;
    }
    if r.below_threshold {
        println!("no learnware reached the score threshold; best match shown");
    }
    println!("{:<5} {:<34} {:>8} {:>10}", "rank", "id", "score", "mmd2");
    for (i, h) in r.single.iter().enumerate() {
        let mmd = h
            .mmd2
            .map(|m| format!("{m:.6}"))
            .unwrap_or_else(|| "-".into());
        let tag = if h.heterogeneous { " (hetero)" } else { "" };
        println!(
            "{:<5} {:<34} {:>8.4} {:>10}{tag}",
            i + 1,
            h.id,
            h.score,
            mmd
        );
    }
    if !r.multiple.ids.is_empty() {
        let parts: Vec<String> = r
            .multiple
            .ids
            .iter()
            .zip(&r.multiple.weights)
            .map(|(id, w)| format!("{id} ({w:.3})"))
            .collect();
        let mmd = r
            .multiple
            .mmd2
            .map(|m| format!("{m:.6}"))
            .unwrap_or_else(|| "-".into());
        println!("multiple: {}  mmd2={mmd}", parts.join(", "));
    }
}

fn targets_for(task: TaskType, n_classes: usize, y: Vec<f64>) -> CliResult<Targets> {
    Ok(match task {
        TaskType::Regression => {
            Targets::Regression(Array2::from_shape_vec((y.len(), 1), y).expect("column"))
        }
        TaskType::Classification => {
            let labels = y
                .iter()
                .map(|&v| {
                    if v >= 0.0 && v.fract() == 0.0 && (v as usize) < n_classes {
                        Ok(v as usize)
                    } else {
                        Err(Error::InvalidData(format!(
                            "label {v} is not a class index below {n_classes}"
                        )))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Targets::Classification { labels, n_classes }
        }
    })
}

fn reuse(
    mode: ReuseMode,
    packages: &[PathBuf],
    data: &Path,
    labels: Option<&Path>,
    seed: u64,
    no_header: bool,
    out: &Path,
) -> CliResult {
    let locals: Vec<Local> = packages
        .iter()
        .map(|p| load_local(p))
        .collect::<CliResult<_>>()?;
    let first = &locals[0].learnware.semantic;
    let (task, out_dim) = (first.task_type, first.output_dim);
    if locals.iter().any(|l| {
        l.learnware.semantic.task_type != task || l.learnware.semantic.output_dim != out_dim
    }) {
        return Err(Error::Parameter(
            "learnwares disagree on task type or output dimension".into(),
        )
        .into());
    }
    let members: Vec<Member> = locals
        .iter()
        .map(|l| Member::new(l.learnware.clone()))
        .collect();
    let x = read_table_file(data, !no_header)?.values;
    let labeled = match labels {
        Some(p) => {
            let (xl, y) = read_table_file(p, !no_header)?.split_last()?;
            Some((xl, targets_for(task, out_dim, y)?))
        }
        None => None,
    };
    let reuser = Reuser::fit(
        mode,
        members,
        labeled.as_ref().map(|(x, t)| (x.view(), t)),
        seed,
    )?;
    let pred = reuser.predict(x.view())?;
    let file = fs::File::create(out)?;
    match task {
        TaskType::Regression => {
            let header: Vec<String> = (0..pred.ncols()).map(|j| format!("y_{j}")).collect();
            write_table(file, &header, &pred)?;
        }
        TaskType::Classification => {
            let labels = labels_of(pred.view());
            let mut table = Array2::zeros((pred.nrows(), pred.ncols() + 1));
            for (i, row) in pred.rows().into_iter().enumerate() {
                table[[i, 0]] = labels[i] as f64;
                table.row_mut(i).slice_mut(ndarray::s![1..]).assign(&row);
            }
            let header: Vec<String> = std::iter::once("label".to_string())
                .chain((0..pred.ncols()).map(|j| format!("p_{j}")))
                .collect();
            write_table(file, &header, &table)?;
        }
    }
    println!("{}: {} rows", out.display(), pred.nrows());
    Ok(())
}
