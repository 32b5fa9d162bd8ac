//! Reusing one or more learnwares on a user's task.
//!
//! Data-free reusers need no labels: uniform averaging and the job selector
//! that routes each row to one member. Data-dependent reusers fit on a small
//! labeled set: ensemble pruning and feature augmentation.

mod pruning;

use std::sync::Arc;

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::herding::herd_samples;
use crate::hetero::AlignmentMap;
use crate::learners::{Logistic, LogisticOptions, Ridge};
use crate::learnware::Learnware;
use crate::linalg::argmax;

pub use pruning::{EnsemblePruning, PruningOptions};

/// A learnware as used by a reuser, optionally behind an input aligner.
#[derive(Debug, Clone)]
pub struct Member {
    pub learnware: Arc<Learnware>,
    pub align: Option<AlignmentMap>,
}

impl Member {
    pub fn new(learnware: Arc<Learnware>) -> Self {
        Self {
            learnware,
            align: None,
        }
    }

    pub fn aligned(learnware: Arc<Learnware>, align: AlignmentMap) -> Self {
        Self {
            learnware,
            align: Some(align),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.learnware.model.output_dim()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match &self.align {
            Some(a) => self.learnware.model.predict(a.apply(x)?.view()),
            None => self.learnware.model.predict(x),
        }
    }
}

/// Labels for the data-dependent reusers.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(Array2<f64>),
    Classification {
        labels: Vec<usize>,
        n_classes: usize,
    },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.nrows(),
            Targets::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Regression(y) => Targets::Regression(y.select(Axis(0), rows)),
            Targets::Classification { labels, n_classes } => Targets::Classification {
                labels: rows.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
        }
    }

    /// RMSE for regression, error rate of the row argmax for classification.
    pub fn loss(&self, pred: ArrayView2<'_, f64>) -> Result<f64> {
        if pred.nrows() != self.len() {
            return Err(Error::dim(format!(
                "{} predictions for {} targets",
                pred.nrows(),
                self.len()
            )));
        }
        match self {
            Targets::Regression(y) => rmse(pred, y.view()),
            Targets::Classification { labels, .. } => Ok(error_rate(pred, labels)),
        }
    }
}

pub fn rmse(pred: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    if pred.dim() != y.dim() {
        return Err(Error::dim(format!(
            "predictions {:?} vs targets {:?}",
            pred.dim(),
            y.dim()
        )));
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    Ok(((&pred - &y).mapv(|v| v * v).sum() / y.len() as f64).sqrt())
}

pub fn error_rate(pred: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = pred
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(r, &l)| argmax(*r) != l)
        .count();
    wrong as f64 / labels.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageMode {
    Mean,
    /// Majority of member argmax labels, returned one-hot. Ties go to the lowest label.
    Vote,
}

fn all_predictions(members: &[Member], x: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
    let preds: Vec<Array2<f64>> = members
        .iter()
        .map(|m| m.predict(x))
        .collect::<Result<_>>()?;
    if let Some(first) = preds.first() {
        if let Some(p) = preds.iter().find(|p| p.dim() != first.dim()) {
            return Err(Error::dim(format!(
                "member outputs {:?} and {:?}",
                first.dim(),
                p.dim()
            )));
        }
    }
    Ok(preds)
}

pub fn average_predictions(preds: &[Array2<f64>], mode: AverageMode) -> Result<Array2<f64>> {
    let first = preds
        .first()
        .ok_or_else(|| Error::param("no members to average"))?;
    if let Some(p) = preds.iter().find(|p| p.dim() != first.dim()) {
        return Err(Error::dim(format!(
            "member outputs {:?} and {:?}",
            first.dim(),
            p.dim()
        )));
    }
    match mode {
        AverageMode::Mean => {
            let mut sum = Array2::zeros(first.raw_dim());
            for p in preds {
                sum += p;
            }
            Ok(sum / preds.len() as f64)
        }
        AverageMode::Vote => {
            let (m, k) = first.dim();
            let mut out = Array2::zeros((m, k));
            for i in 0..m {
                let mut counts = vec![0usize; k];
                for p in preds {
                    counts[argmax(p.row(i))] += 1;
                }
                let best = counts
                    .iter()
                    .enumerate()
                    .fold(0, |b, (j, &c)| if c > counts[b] { j } else { b });
                out[[i, best]] = 1.0;
            }
            Ok(out)
        }
    }
}

pub fn average_reuse(
    members: &[Member],
    x: ArrayView2<'_, f64>,
    mode: AverageMode,
) -> Result<Array2<f64>> {
    average_predictions(&all_predictions(members, x)?, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorSource {
    /// Support points weighted by their coefficients, normalized per member.
    ReducedSet,
    /// `per_member` herded pseudo-samples from each spec.
    Herding { per_member: usize, seed: u64 },
}

/// Routes each row to the member whose specification it most resembles,
/// using a multinomial logistic classifier trained on spec-derived samples.
#[derive(Debug, Clone)]
pub struct JobSelector {
    members: Vec<Member>,
    classifier: Option<Logistic>,
}

impl JobSelector {
    pub fn fit(members: Vec<Member>, source: SelectorSource) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::param("job selector needs members"));
        }
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        let mut weights = Vec::new();
        for (k, m) in members.iter().enumerate() {
            if m.align.is_some() {
                return Err(Error::param(
                    "job selector members must share the user's feature space",
                ));
            }
            let spec = m.learnware.rkme().ok_or_else(|| {
                Error::param(format!(
                    "learnware {} has no rkme_table spec",
                    m.learnware.id
                ))
            })?;
            match source {
                SelectorSource::ReducedSet => {
                    let total: f64 = spec.beta().sum();
                    let total = if total > 0.0 { total } else { 1.0 };
                    xs.push(spec.z().clone());
                    weights.extend(spec.beta().iter().map(|b| b / total));
                    labels.extend(std::iter::repeat_n(k, spec.len()));
                }
                SelectorSource::Herding { per_member, seed } => {
                    if per_member == 0 {
                        return Err(Error::param("herding needs at least one sample per member"));
                    }
                    let pts = herd_samples(spec, per_member, seed.wrapping_add(k as u64))?;
                    weights.extend(std::iter::repeat_n(1.0 / per_member as f64, per_member));
                    labels.extend(std::iter::repeat_n(k, per_member));
                    xs.push(pts);
                }
            }
        }
        let dim = xs[0].ncols();
        if xs.iter().any(|x| x.ncols() != dim) {
            return Err(Error::dim("member specs live in different feature spaces"));
        }
        if members.len() == 1 {
            return Ok(Self {
                members,
                classifier: None,
            });
        }
        // Every member carries the same total weight; scale it to the average
        // sample count so the classifier's penalty keeps its usual strength.
        let scale = labels.len() as f64 / members.len() as f64;
        weights.iter_mut().for_each(|w| *w *= scale);
        let views: Vec<ArrayView2<'_, f64>> = xs.iter().map(|x| x.view()).collect();
        let x = concatenate(Axis(0), &views).map_err(|e| Error::dim(e.to_string()))?;
        let classifier = Logistic::fit(
            x.view(),
            &labels,
            members.len(),
            Some(&weights),
            &LogisticOptions::default(),
        )?;
        Ok(Self {
            members,
            classifier: Some(classifier),
        })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    /// Index of the member chosen for each row.
    pub fn route(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        match &self.classifier {
            Some(c) => c.predict_labels(x),
            None => vec![0; x.nrows()],
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let route = self.route(x);
        let width = self.members[0].output_dim();
        let mut out = Array2::zeros((x.nrows(), width));
        for (k, m) in self.members.iter().enumerate() {
            let rows: Vec<usize> = (0..x.nrows()).filter(|&i| route[i] == k).collect();
            if rows.is_empty() {
                continue;
            }
            let p = m.predict(x.select(Axis(0), &rows).view())?;
            if p.ncols() != width {
                return Err(Error::dim(format!(
                    "member {k} outputs {} columns, expected {width}",
                    p.ncols()
                )));
            }
            for (r, &i) in rows.iter().enumerate() {
                out.row_mut(i).assign(&p.row(r));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
enum Head {
    Ridge(Ridge),
    Logistic(Logistic),
}

/// Trains ridge or logistic regression on the user's features extended with
/// every member's predictions.
#[derive(Debug, Clone)]
pub struct FeatureAugment {
    members: Vec<Member>,
    head: Head,
}

pub const DEFAULT_AUGMENT_LAMBDA: f64 = 1.0;

impl FeatureAugment {
    pub fn fit(
        members: Vec<Member>,
        x: ArrayView2<'_, f64>,
        targets: &Targets,
        lambda: f64,
    ) -> Result<Self> {
        if targets.is_empty() || x.nrows() == 0 {
            return Err(Error::param(
                "feature augmentation needs a non-empty labeled set",
            ));
        }
        if x.nrows() != targets.len() {
            return Err(Error::dim(format!(
                "{} rows but {} labels",
                x.nrows(),
                targets.len()
            )));
        }
        let z = augment(&members, x)?;
        let head = match targets {
            Targets::Regression(y) => Head::Ridge(Ridge::fit(z.view(), y.view(), lambda)?),
            Targets::Classification { labels, n_classes } => {
                let opts = LogisticOptions {
                    lambda,
                    ..LogisticOptions::default()
                };
                Head::Logistic(Logistic::fit(z.view(), labels, *n_classes, None, &opts)?)
            }
        };
        Ok(Self { members, head })
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = augment(&self.members, x)?;
        Ok(match &self.head {
            Head::Ridge(r) => r.predict(z.view()),
            Head::Logistic(l) => l.predict_proba(z.view()),
        })
    }
}

fn augment(members: &[Member], x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut parts = vec![x.to_owned()];
    for m in members {
        parts.push(m.predict(x)?);
    }
    let views: Vec<ArrayView2<'_, f64>> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(1), &views).map_err(|e| Error::dim(e.to_string()))
}

/// Heterogeneous reuse: maps user rows into the learnware's input space with
/// `map`, then learns the output alignment as feature augmentation on the
/// user's labeled set.
pub fn reuse_hetero(
    learnware: Arc<Learnware>,
    map: AlignmentMap,
    x: ArrayView2<'_, f64>,
    targets: &Targets,
) -> Result<FeatureAugment> {
    if map.input_dim() != x.ncols() {
        return Err(Error::dim(format!(
            "aligner takes {} columns, data has {}",
            map.input_dim(),
            x.ncols()
        )));
    }
    if map.output_dim() != learnware.model.input_dim() {
        return Err(Error::dim(format!(
            "aligner produces {} columns, learnware takes {}",
            map.output_dim(),
            learnware.model.input_dim()
        )));
    }
    FeatureAugment::fit(
        vec![Member::aligned(learnware, map)],
        x,
        targets,
        DEFAULT_AUGMENT_LAMBDA,
    )
}

/// A plain ridge or logistic model on the user's own labels, the baseline
/// every data-dependent reuser is compared against.
pub fn fit_scratch(
    x: ArrayView2<'_, f64>,
    targets: &Targets,
    lambda: f64,
) -> Result<FeatureAugment> {
    FeatureAugment::fit(Vec::new(), x, targets, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReuseMode {
    AverageMean,
    AverageVote,
    JobSelector,
    EnsemblePruning,
    FeatureAugment,
}

impl std::str::FromStr for ReuseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "average_mean" => Ok(Self::AverageMean),
            "vote" | "vote_by_label" | "average_vote" => Ok(Self::AverageVote),
            "job-select" | "job_selector" => Ok(Self::JobSelector),
            "ensemble-prune" | "ensemble_pruning" => Ok(Self::EnsemblePruning),
            "feature-augment" | "feature_augment" => Ok(Self::FeatureAugment),
            other => Err(Error::param(format!("unknown reuse mode {other:?}"))),
        }
    }
}

/// Any fitted reuser behind one predict call.
#[derive(Debug, Clone)]
pub enum Reuser {
    Average {
        members: Vec<Member>,
        mode: AverageMode,
    },
    JobSelector(JobSelector),
    EnsemblePruning(EnsemblePruning),
    FeatureAugment(FeatureAugment),
}

impl Reuser {
    /// Builds the reuser for `mode`. Data-dependent modes need `labeled`.
    pub fn fit(
        mode: ReuseMode,
        members: Vec<Member>,
        labeled: Option<(ArrayView2<'_, f64>, &Targets)>,
        seed: u64,
    ) -> Result<Self> {
        if members.is_empty() && mode != ReuseMode::FeatureAugment {
            return Err(Error::param("reuse needs at least one learnware"));
        }
        let need = || labeled.ok_or_else(|| Error::param("this reuse mode needs labeled data"));
        Ok(match mode {
            ReuseMode::AverageMean => Reuser::Average {
                members,
                mode: AverageMode::Mean,
            },
            ReuseMode::AverageVote => Reuser::Average {
                members,
                mode: AverageMode::Vote,
            },
            ReuseMode::JobSelector => {
                Reuser::JobSelector(JobSelector::fit(members, SelectorSource::ReducedSet)?)
            }
            ReuseMode::EnsemblePruning => {
                let (x, y) = need()?;
                let opts = PruningOptions {
                    seed,
                    ..PruningOptions::default()
                };
                Reuser::EnsemblePruning(EnsemblePruning::fit(members, x, y, &opts)?)
            }
            ReuseMode::FeatureAugment => {
                let (x, y) = need()?;
                Reuser::FeatureAugment(FeatureAugment::fit(members, x, y, DEFAULT_AUGMENT_LAMBDA)?)
            }
        })
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Reuser::Average { members, mode } => average_reuse(members, x, *mode),
            Reuser::JobSelector(j) => j.predict(x),
            Reuser::EnsemblePruning(p) => p.predict(x),
            Reuser::FeatureAugment(f) => f.predict(x),
        }
    }
}

/// One-hot rows for `labels`.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), n_classes));
    for (i, &l) in labels.iter().enumerate() {
        out[[i, l]] = 1.0;
    }
    out
}

/// Argmax label of each row.
pub fn labels_of(pred: ArrayView2<'_, f64>) -> Vec<usize> {
    pred.rows().into_iter().map(argmax).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mean_of_three() {
        let preds = vec![array![[1.0]], array![[2.0]], array![[4.0]]];
        let m = average_predictions(&preds, AverageMode::Mean).unwrap();
        assert!((m[[0, 0]] - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn vote_majority_and_ties() {
        let a = array![[0.9, 0.1], [0.6, 0.4]];
        let b = array![[0.2, 0.8], [0.3, 0.7]];
        let c = array![[0.1, 0.9], [0.5, 0.5]];
        let v = average_predictions(&[a.clone(), b.clone(), c], AverageMode::Vote).unwrap();
        assert_eq!(v, array![[0.0, 1.0], [1.0, 0.0]]);
        let tie = average_predictions(&[a, b], AverageMode::Vote).unwrap();
        assert_eq!(tie, array![[1.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let err = average_predictions(&[array![[1.0]], array![[1.0, 2.0]]], AverageMode::Mean)
            .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }
}
