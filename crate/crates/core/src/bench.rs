//! Synthetic market scenarios and the evaluation harness.
//!
//! Developers live in regions. A region is a bimodal Gaussian mixture in
//! `dim` dimensions; region centers are at least `spacing·σ` apart. Labels
//! follow a linear function shared by all regions plus a small per-region
//! deviation. Several developers share each region and differ
//! only in how noisy their training labels are, so the searcher cannot tell a
//! well-trained model from a poorly trained one by its specification alone.
//!
//! * `homo-table`: users draw from one region and share its label function.
//! * `hetero-feature`: users see a permuted subset of the region's columns.
//! * `hetero-task`: users share a region's inputs but label them with a blend
//!   of the region's function and a private one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hetero::{align_input, AlignOptions};
use crate::learners::{Logistic, LogisticOptions, Ridge};
use crate::learnware::Learnware;
use crate::market::{Market, SearchOptions, SearchResult};
use crate::reuse::{
    average_reuse, fit_scratch, reuse_hetero, AverageMode, EnsemblePruning, FeatureAugment,
    JobSelector, Member, PruningOptions, SelectorSource, Targets, DEFAULT_AUGMENT_LAMBDA,
};
use crate::rkme::{generate_rkme, RkmeOptions};
use crate::specification::{
    generate_stat_spec, DataType, FeatureDescription, SemanticFilter, SemanticSpec, StatSpec,
    TaskType, UserInfo,
};
use crate::storage::{LearnwarePackage, ModelSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    HomoTable,
    HeteroFeature,
    HeteroTask,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::HomoTable => "homo-table",
            ScenarioKind::HeteroFeature => "hetero-feature",
            ScenarioKind::HeteroTask => "hetero-task",
        }
    }

    fn salt(&self) -> u64 {
        match self {
            ScenarioKind::HomoTable => 0x11,
            ScenarioKind::HeteroFeature => 0x22,
            ScenarioKind::HeteroTask => 0x33,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homo-table" => Ok(Self::HomoTable),
            "hetero-feature" => Ok(Self::HeteroFeature),
            "hetero-task" => Ok(Self::HeteroTask),
            other => Err(Error::param(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub task: TaskType,
    pub seed: u64,
    pub n_regions: usize,
    pub devs_per_region: usize,
    pub n_users: usize,
    pub dim: usize,
    /// Columns a `hetero-feature` user observes.
    pub user_dim: usize,
    /// Minimum distance between region centers, in units of `sigma`.
    pub spacing: f64,
    pub sigma: f64,
    /// Half the distance between the two modes of a region.
    pub mode_offset: f64,
    pub n_classes: usize,
    /// Scale of each region's deviation from the shared label function.
    pub region_shift: f64,
    pub dev_train: usize,
    pub user_test: usize,
    /// Label noise of the best and worst developer in a region.
    pub dev_noise: (f64, f64),
    pub user_noise: f64,
    pub spec_size: usize,
    pub budgets: Vec<usize>,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            task: TaskType::Classification,
            seed,
            n_regions: 4,
            devs_per_region: 5,
            n_users: 20,
            dim: 8,
            user_dim: 6,
            spacing: 4.0,
            sigma: 1.0,
            mode_offset: 1.5,
            n_classes: 3,
            region_shift: 0.15,
            dev_train: 500,
            user_test: 200,
            dev_noise: (0.25, 4.0),
            user_noise: 0.5,
            spec_size: 50,
            budgets: vec![0, 10, 20, 50, 100, 200],
        }
    }

    pub fn n_developers(&self) -> usize {
        self.n_regions * self.devs_per_region
    }

    fn output_dim(&self) -> usize {
        match self.task {
            TaskType::Regression => 1,
            TaskType::Classification => self.n_classes,
        }
    }

    fn max_budget(&self) -> usize {
        self.budgets.iter().copied().max().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.n_regions == 0 || self.devs_per_region == 0 || self.dim == 0 {
            return Err(Error::param(
                "scenario needs regions, developers and features",
            ));
        }
        if self.kind == ScenarioKind::HeteroFeature
            && (self.user_dim == 0 || self.user_dim >= self.dim)
        {
            return Err(Error::param(
                "hetero-feature users need between 1 and dim - 1 columns",
            ));
        }
        if self.task == TaskType::Classification && self.n_classes < 2 {
            return Err(Error::param("classification needs at least two classes"));
        }
        Ok(())
    }
}

const COLUMN_NAMES: [&str; 12] = [
    "weekly sales volume of the store",
    "average unit price charged",
    "number of promotions running",
    "foot traffic counted at the entrance",
    "local temperature in degrees",
    "days until the next public holiday",
    "share of online orders",
    "inventory level at week start",
    "competitor store distance in km",
    "fuel price in the region",
    "unemployment rate of the district",
    "staff hours scheduled",
];

/// Description of column `k` in the developers' feature space.
pub fn column_description(k: usize) -> FeatureDescription {
    let text = match COLUMN_NAMES.get(k) {
        Some(t) => (*t).to_string(),
        None => format!("auxiliary measurement channel {k}"),
    };
    FeatureDescription::new(format!("f{k}"), text)
}

#[derive(Debug, Clone)]
struct Region {
    center: Array1<f64>,
    axis: Array1<f64>,
    /// Point the label function is expanded around: the center for
    /// classification, keeping classes balanced within a region.
    origin: Array1<f64>,
    /// `out × dim`; one row for regression.
    coef: Array2<f64>,
    bias: Array1<f64>,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample(StandardNormal))
}

fn normal_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.sample(StandardNormal))
}

impl Region {
    fn sample(&self, scn: &Scenario, m: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let d = self.center.len();
        let mut x = normal_mat(rng, m, d) * scn.sigma;
        for mut row in x.rows_mut() {
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            row += &self.center;
            row.scaled_add(side * scn.mode_offset * scn.sigma, &self.axis);
        }
        x
    }

    /// Noise-free scores: the regression target or the class logits.
    fn scores(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.origin).dot(&self.coef.t()) + &self.bias
    }
}

fn regions(scn: &Scenario, rng: &mut ChaCha8Rng) -> Vec<Region> {
    let d = scn.dim;
    let half = scn.spacing * scn.sigma;
    let min_dist = scn.spacing * scn.sigma;
    let mut centers: Vec<Array1<f64>> = Vec::new();
    let mut box_half = half;
    while centers.len() < scn.n_regions {
        let mut placed = false;
        for _ in 0..1000 {
            let c = Array1::from_shape_fn(d, |_| rng.gen_range(-box_half..=box_half));
            if centers
                .iter()
                .all(|o| (&c - o).mapv(|v| v * v).sum().sqrt() >= min_dist)
            {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            box_half *= 1.5;
        }
    }
    let out = scn.output_dim();
    let scale = match scn.task {
        TaskType::Regression => 1.0,
        TaskType::Classification => 2.0,
    };
    let shared = normal_mat(rng, out, d) * scale;
    let shared_bias = normal_vec(rng, out);
    centers
        .into_iter()
        .map(|center| {
            let mut axis = normal_vec(rng, d);
            let n = axis.dot(&axis).sqrt().max(1e-12);
            axis /= n;
            let coef = &shared + &(normal_mat(rng, out, d) * (scale * scn.region_shift));
            let bias = &shared_bias + &(normal_vec(rng, out) * scn.region_shift);
            let origin = match scn.task {
                TaskType::Regression => Array1::zeros(d),
                TaskType::Classification => center.clone(),
            };
            Region {
                center,
                axis,
                origin,
                coef,
                bias,
            }
        })
        .collect()
}

fn regression_labels(scores: &Array2<f64>, noise: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    scores.mapv(|s| s + noise * rng.sample::<f64, _>(StandardNormal))
}

/// Argmax labels, each replaced by a uniformly random class with probability `flip`.
fn class_labels(scores: &Array2<f64>, flip: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = scores.ncols();
    scores
        .rows()
        .into_iter()
        .map(|r| {
            if flip > 0.0 && rng.gen_bool(flip.min(1.0)) {
                rng.gen_range(0..k)
            } else {
                crate::linalg::argmax(r)
            }
        })
        .collect()
}

fn targets(scn: &Scenario, scores: &Array2<f64>, noise: f64, rng: &mut ChaCha8Rng) -> Targets {
    match scn.task {
        TaskType::Regression => Targets::Regression(regression_labels(scores, noise, rng)),
        TaskType::Classification => Targets::Classification {
            labels: class_labels(scores, noise, rng),
            n_classes: scn.n_classes,
        },
    }
}

/// Label noise of the `q`-th developer of a region: geometric between the
/// two ends for regression, a flip rate for classification.
fn dev_noise(scn: &Scenario, q: usize) -> f64 {
    let (lo, hi) = scn.dev_noise;
    let t = if scn.devs_per_region > 1 {
        q as f64 / (scn.devs_per_region - 1) as f64
    } else {
        0.0
    };
    match scn.task {
        TaskType::Regression => lo * (hi / lo).powf(t),
        TaskType::Classification => 0.4 * t,
    }
}

fn user_noise(scn: &Scenario) -> f64 {
    match scn.task {
        TaskType::Regression => scn.user_noise,
        TaskType::Classification => 0.05,
    }
}

/// A held-out user task.
#[derive(Debug, Clone)]
pub struct UserTask {
    pub index: usize,
    pub region: usize,
    /// Developer columns the user observes, in the user's order; `None` when
    /// the user sees the developers' feature space.
    pub columns: Option<Vec<usize>>,
    pub x_test: Array2<f64>,
    pub y_test: Targets,
    /// Labeled rows available for the budget curves; budget `b` uses the first `b`.
    pub x_pool: Array2<f64>,
    pub y_pool: Targets,
    pub filter: SemanticFilter,
}

impl UserTask {
    pub fn dim(&self) -> usize {
        self.x_test.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub packages: Vec<LearnwarePackage>,
    /// Region of each package.
    pub dev_regions: Vec<usize>,
    pub users: Vec<UserTask>,
}

/// Regenerates every developer package and user task from `(kind, seed)`.
pub fn generate(scn: &Scenario) -> Result<Generated> {
    scn.validate()?;
    let mut rng =
        ChaCha8Rng::seed_from_u64(scn.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ scn.kind.salt());
    let regions = regions(scn, &mut rng);
    let descriptions: Vec<FeatureDescription> = (0..scn.dim).map(column_description).collect();

    let mut packages = Vec::new();
    let mut dev_regions = Vec::new();
    for k in 0..scn.n_developers() {
        let r = k % scn.n_regions;
        let q = k / scn.n_regions;
        let region = &regions[r];
        let x = region.sample(scn, scn.dev_train, &mut rng);
        let y = targets(scn, &region.scores(x.view()), dev_noise(scn, q), &mut rng);
        let model = match &y {
            Targets::Regression(y) => Ridge::fit(x.view(), y.view(), 1.0)?.into_model()?,
            Targets::Classification { labels, n_classes } => Logistic::fit(
                x.view(),
                labels,
                *n_classes,
                None,
                &LogisticOptions::default(),
            )?
            .into_model()?,
        };
        let opts = RkmeOptions::default()
            .with_size(scn.spec_size)
            .with_seed(scn.seed ^ (k as u64 + 1));
        let spec = generate_stat_spec(DataType::Table, x.view(), &opts)?;
        let semantic = SemanticSpec {
            data_type: DataType::Table,
            task_type: scn.task,
            scenarios: BTreeSet::from(["bench".to_string(), scn.kind.as_str().to_string()]),
            description: format!("synthetic developer {k}"),
            input_dim: scn.dim,
            feature_descriptions: descriptions.clone(),
            output_dim: scn.output_dim(),
            label_names: None,
        };
        packages.push(LearnwarePackage {
            name: format!("{}-dev-{k:02}", scn.kind),
            semantic,
            stat_specs: vec![spec],
            model: ModelSource::Portable(model),
        });
        dev_regions.push(r);
    }

    let mut users = Vec::new();
    for u in 0..scn.n_users {
        let r = u % scn.n_regions;
        let region = &regions[r];
        let n = scn.user_test + scn.max_budget();
        let full = region.sample(scn, n, &mut rng);
        let mut scores = region.scores(full.view());
        if scn.kind == ScenarioKind::HeteroTask {
            // half of the signal comes from a function no developer has seen
            let private = normal_mat(&mut rng, scn.output_dim(), scn.dim);
            let centered = &full - &region.center;
            scores = (scores + centered.dot(&private.t())) * 0.5;
        }
        let y = targets(scn, &scores, user_noise(scn), &mut rng);
        let (x, columns) = if scn.kind == ScenarioKind::HeteroFeature {
            let mut cols: Vec<usize> = (0..scn.dim).collect();
            cols.shuffle(&mut rng);
            cols.truncate(scn.user_dim);
            (full.select(Axis(1), &cols), Some(cols))
        } else {
            (full, None)
        };
        let test: Vec<usize> = (0..scn.user_test).collect();
        let pool: Vec<usize> = (scn.user_test..n).collect();
        let filter = SemanticFilter {
            task_type: Some(scn.task),
            feature_descriptions: Some(match &columns {
                Some(cols) => cols.iter().map(|&c| column_description(c)).collect(),
                None => descriptions.clone(),
            }),
            ..SemanticFilter::default()
        };
        users.push(UserTask {
            index: u,
            region: r,
            x_test: x.select(Axis(0), &test),
            y_test: y.select(&test),
            x_pool: x.select(Axis(0), &pool),
            y_pool: y.select(&pool),
            columns,
            filter,
        });
    }
    Ok(Generated {
        packages,
        dev_regions,
        users,
    })
}

/// A market populated through the regular submit and check path.
pub struct BenchMarket {
    pub market: Market,
    /// Market id of each developer, in generation order.
    pub ids: Vec<String>,
    pub dev_regions: Vec<usize>,
    pub users: Vec<UserTask>,
}

impl BenchMarket {
    pub fn region_of(&self, id: &str) -> Option<usize> {
        self.ids
            .iter()
            .position(|i| i == id)
            .map(|k| self.dev_regions[k])
    }
}

pub fn build_market(scn: &Scenario, root: impl AsRef<Path>) -> Result<BenchMarket> {
    let generated = generate(scn)?;
    let market = Market::open(root)?;
    let mut ids = Vec::new();
    for pkg in &generated.packages {
        ids.push(market.insert(pkg)?.id);
    }
    for (id, report) in market.verify_pending()? {
        if !report.pass {
            tracing::warn!(%id, codes = ?report.codes(), "synthetic learnware rejected");
        }
    }
    Ok(BenchMarket {
        market,
        ids,
        dev_regions: generated.dev_regions,
        users: generated.users,
    })
}

pub const MEAN_IN_MARKET: &str = "MeanInMarket";
pub const BEST_IN_MARKET: &str = "BestInMarket";
pub const TOP1: &str = "Top1";
pub const JOB_SELECTOR: &str = "JobSelector";
pub const AVERAGE_ENSEMBLE: &str = "AverageEnsemble";
pub const SCRATCH: &str = "Scratch";
pub const ENSEMBLE_PRUNING: &str = "EnsemblePruning";
pub const FEATURE_AUGMENT: &str = "FeatureAugment";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scenario: String,
    pub seed: u64,
    pub method: String,
    pub budget: usize,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub n_users: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct UserLosses {
    pub user: usize,
    pub region: usize,
    pub top1: Option<String>,
    pub multiple: Vec<String>,
    /// `(method, budget) -> loss`
    pub losses: BTreeMap<String, f64>,
}

fn key(method: &str, budget: usize) -> String {
    format!("{method}@{budget}")
}

impl UserLosses {
    pub fn get(&self, method: &str, budget: usize) -> Option<f64> {
        self.losses.get(&key(method, budget)).copied()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub users: Vec<UserLosses>,
}

impl Report {
    pub fn row(&self, method: &str, budget: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.budget == budget)
    }

    pub fn mean(&self, method: &str, budget: usize) -> Option<f64> {
        self.row(method, budget).map(|r| r.mean_loss)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&self.rows, out)
    }
}

/// Writes rows with the stable header
/// `scenario,seed,method,budget,mean_loss,std_loss,n_users`.
pub fn write_rows<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Storage(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record([
            "scenario",
            "seed",
            "method",
            "budget",
            "mean_loss",
            "std_loss",
            "n_users",
        ])
        .map_err(|e| Error::Storage(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn member_for(market: &Market, user_spec: &StatSpec, user: &UserTask, id: &str) -> Result<Member> {
    let lw = market.learnware(id)?;
    if user.columns.is_none() {
        return Ok(Member::new(lw));
    }
    let target = lw
        .rkme()
        .ok_or_else(|| Error::param(format!("learnware {id} has no rkme_table spec")))?;
    let fit = align_input(&user_spec.payload, target, &AlignOptions::default())?;
    Ok(Member::aligned(lw, fit.map))
}

fn search(market: &Market, user: &UserTask, spec: &StatSpec) -> Result<SearchResult> {
    let info = UserInfo::new(Some(user.filter.clone()), Some(spec.clone()))?;
    let opts = SearchOptions::default();
    if user.columns.is_some() {
        market.hetero_search(&info, &opts)
    } else {
        market.search(&info, &opts)
    }
}

fn evaluate_user(scn: &Scenario, bm: &BenchMarket, user: &UserTask) -> Result<UserLosses> {
    let market = &bm.market;
    let opts = RkmeOptions::default()
        .with_size(scn.spec_size)
        .with_seed(scn.seed ^ 0xABCD ^ user.index as u64);
    let spec = StatSpec::rkme_table(generate_rkme(user.x_test.view(), &opts)?.spec);
    let result = search(market, user, &spec)?;
    let x = user.x_test.view();
    let mut losses = BTreeMap::new();

    // Every verified learnware applied directly (through an aligner when the
    // feature spaces differ).
    let mut members: BTreeMap<String, Member> = BTreeMap::new();
    let mut market_losses = Vec::new();
    for entry in market.snapshot() {
        if entry.record.status != crate::learnware::Status::Verified
            || entry.learnware.semantic.task_type != scn.task
        {
            continue;
        }
        let m = member_for(market, &spec, user, &entry.record.id)?;
        market_losses.push(user.y_test.loss(m.predict(x)?.view())?);
        members.insert(entry.record.id.clone(), m);
    }
    if market_losses.is_empty() {
        return Err(Error::NotFound("no verified learnware to evaluate".into()));
    }
    losses.insert(
        key(MEAN_IN_MARKET, 0),
        market_losses.iter().sum::<f64>() / market_losses.len() as f64,
    );
    losses.insert(
        key(BEST_IN_MARKET, 0),
        market_losses.iter().copied().fold(f64::INFINITY, f64::min),
    );

    let top1 = result.single.first().map(|h| h.id.clone());
    let mut chosen: Vec<String> = result.multiple.ids.clone();
    if chosen.is_empty() {
        chosen.extend(top1.iter().cloned());
    }
    let pick = |ids: &[String]| -> Vec<Member> {
        ids.iter()
            .filter_map(|id| members.get(id).cloned())
            .collect()
    };
    let chosen_members = pick(&chosen);

    if let Some(id) = &top1 {
        let m = members
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("learnware {id}")))?;
        losses.insert(key(TOP1, 0), user.y_test.loss(m.predict(x)?.view())?);
    }
    let ensemble_loss = if chosen_members.is_empty() {
        None
    } else {
        let mode = match scn.task {
            TaskType::Classification => AverageMode::Vote,
            TaskType::Regression => AverageMode::Mean,
        };
        let loss = user
            .y_test
            .loss(average_reuse(&chosen_members, x, mode)?.view())?;
        losses.insert(key(AVERAGE_ENSEMBLE, 0), loss);
        Some(loss)
    };
    if user.columns.is_none() && !chosen_members.is_empty() {
        let selector = JobSelector::fit(chosen_members.clone(), SelectorSource::ReducedSet)?;
        losses.insert(
            key(JOB_SELECTOR, 0),
            user.y_test.loss(selector.predict(x)?.view())?,
        );
    }

    for &b in &scn.budgets {
        if b == 0 {
            // no labels: the data-dependent reusers fall back to uniform averaging
            if let Some(l) = ensemble_loss {
                losses.insert(key(ENSEMBLE_PRUNING, 0), l);
                losses.insert(key(FEATURE_AUGMENT, 0), l);
            }
            continue;
        }
        let b = b.min(user.x_pool.nrows());
        let rows: Vec<usize> = (0..b).collect();
        let xb = user.x_pool.select(Axis(0), &rows);
        let yb = user.y_pool.select(&rows);
        let scratch = fit_scratch(xb.view(), &yb, DEFAULT_AUGMENT_LAMBDA)?;
        losses.insert(
            key(SCRATCH, b),
            user.y_test.loss(scratch.predict(x)?.view())?,
        );
        if chosen_members.is_empty() {
            continue;
        }
        let popts = PruningOptions {
            seed: scn.seed ^ user.index as u64,
            ..PruningOptions::default()
        };
        let pruned = EnsemblePruning::fit(chosen_members.clone(), xb.view(), &yb, &popts)?;
        losses.insert(
            key(ENSEMBLE_PRUNING, b),
            user.y_test.loss(pruned.predict(x)?.view())?,
        );
        let augmented = match (&user.columns, &top1) {
            (Some(_), Some(id)) => {
                let m = &members[id];
                let map = m.align.clone().expect("hetero members are aligned");
                reuse_hetero(Arc::clone(&m.learnware), map, xb.view(), &yb)?
            }
            _ => FeatureAugment::fit(
                chosen_members.clone(),
                xb.view(),
                &yb,
                DEFAULT_AUGMENT_LAMBDA,
            )?,
        };
        losses.insert(
            key(FEATURE_AUGMENT, b),
            user.y_test.loss(augmented.predict(x)?.view())?,
        );
    }

    Ok(UserLosses {
        user: user.index,
        region: user.region,
        top1,
        multiple: chosen,
        losses,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

const ORDER: [&str; 8] = [
    MEAN_IN_MARKET,
    BEST_IN_MARKET,
    TOP1,
    JOB_SELECTOR,
    AVERAGE_ENSEMBLE,
    SCRATCH,
    ENSEMBLE_PRUNING,
    FEATURE_AUGMENT,
];

/// Evaluates every method for every user of a built market.
pub fn evaluate(scn: &Scenario, bm: &BenchMarket) -> Result<Report> {
    let users: Vec<UserLosses> = bm
        .users
        .iter()
        .map(|u| evaluate_user(scn, bm, u))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for method in ORDER {
        let mut budgets: Vec<usize> = users
            .iter()
            .flat_map(|u| u.losses.keys())
            .filter_map(|k| k.strip_prefix(method)?.strip_prefix('@')?.parse().ok())
            .collect();
        budgets.sort_unstable();
        budgets.dedup();
        for b in budgets {
            let values: Vec<f64> = users.iter().filter_map(|u| u.get(method, b)).collect();
            let (mean_loss, std_loss) = mean_std(&values);
            rows.push(ReportRow {
                scenario: scn.kind.to_string(),
                seed: scn.seed,
                method: method.to_string(),
                budget: b,
                mean_loss,
                std_loss,
                n_users: values.len(),
            });
        }
    }
    Ok(Report { rows, users })
}

/// Builds the market under `root` and evaluates it.
pub fn run(scn: &Scenario, root: impl AsRef<Path>) -> Result<Report> {
    let bm = build_market(scn, root)?;
    evaluate(scn, &bm)
}

/// Learnwares of `bm` in developer order, for callers that skip the searcher.
pub fn learnwares(bm: &BenchMarket) -> Result<Vec<Arc<Learnware>>> {
    bm.ids.iter().map(|id| bm.market.learnware(id)).collect()
}
