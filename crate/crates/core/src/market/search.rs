//! Statistical search: single-learnware scores and mixture (multiple) search.

use std::cmp::Ordering;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetero::SemanticProjector;
use crate::kernel::{mmd_squared, RkmeSpec};
use crate::learnware::Learnware;
use crate::linalg::{largest_eigenvalue, project_simplex};
use crate::specification::{semantic_match, DataType, StatKind, UserInfo};

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum MultipleStrategy {
    /// Add learnwares one at a time while the mixture MMD² keeps dropping.
    Greedy { max_k: usize, eps: f64 },
    /// Solve weights over all candidates and keep those above `min_weight`.
    Weights { min_weight: f64 },
}

impl Default for MultipleStrategy {
    fn default() -> Self {
        MultipleStrategy::Greedy {
            max_k: 5,
            eps: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub tau: f64,
    pub threshold: f64,
    pub strategy: MultipleStrategy,
    pub hetero: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            threshold: DEFAULT_THRESHOLD,
            strategy: MultipleStrategy::default(),
            hetero: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleHit {
    pub id: String,
    pub score: f64,
    /// Absent for semantic-only searches.
    pub mmd2: Option<f64>,
    /// The learnware's native feature space differs from the user's.
    pub heterogeneous: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultipleHit {
    pub ids: Vec<String>,
    pub weights: Vec<f64>,
    pub mmd2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub single: Vec<SingleHit>,
    /// No learnware reached the threshold; `single` holds the best one anyway.
    pub below_threshold: bool,
    pub multiple: MultipleHit,
}

pub fn score(mmd2: f64, tau: f64) -> f64 {
    (-mmd2 / tau).exp()
}

/// Objective `½ wᵀCw − bᵀw` of the mixture problem, with `C` the Gram matrix
/// of candidate embeddings and `b` their inner products with the user's.
/// Adding `½‖Φ_u‖²` and doubling gives the mixture MMD².
#[derive(Debug, Clone)]
pub struct MixtureProblem {
    pub c: Array2<f64>,
    pub b: Array1<f64>,
    pub user_norm: f64,
}

impl MixtureProblem {
    pub fn new(user: &RkmeSpec, specs: &[&RkmeSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::param("mixture weights need at least one candidate"));
        }
        let k = specs.len();
        let mut c = Array2::zeros((k, k));
        let mut b = Array1::zeros(k);
        for i in 0..k {
            b[i] = specs[i].inner(user)?;
            c[[i, i]] = specs[i].norm_squared();
            for j in 0..i {
                let v = specs[i].inner(specs[j])?;
                c[[i, j]] = v;
                c[[j, i]] = v;
            }
        }
        Ok(Self {
            c,
            b,
            user_norm: user.norm_squared(),
        })
    }

    /// `‖Σ_k w_k Φ_k − Φ_u‖²`, clamped at zero.
    pub fn mmd2(&self, w: &Array1<f64>) -> f64 {
        (w.dot(&self.c.dot(w)) - 2.0 * self.b.dot(w) + self.user_norm).max(0.0)
    }

    /// Projected gradient on the simplex with step `1/λ_max(C)`.
    pub fn solve(&self) -> Array1<f64> {
        let k = self.b.len();
        let mut w = Array1::from_elem(k, 1.0 / k as f64);
        if k == 1 {
            return w;
        }
        let lmax = largest_eigenvalue(&self.c);
        if !(lmax > 0.0) {
            return w;
        }
        let step = 1.0 / lmax;
        for _ in 0..2000 {
            let grad = self.c.dot(&w) - &self.b;
            let next = project_simplex(&(&w - &(grad * step)));
            let delta = (&next - &w).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            w = next;
            if delta < 1e-9 {
                break;
            }
        }
        w
    }
}

/// Simplex weights minimizing `‖Σ_k w_k Φ_k − Φ_u‖²`.
pub fn solve_mixture_weights(user: &RkmeSpec, specs: &[&RkmeSpec]) -> Result<Array1<f64>> {
    Ok(MixtureProblem::new(user, specs)?.solve())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    /// Indices into the candidate list, in the order they were added.
    pub selected: Vec<usize>,
    pub weights: Array1<f64>,
    pub mmd2: f64,
    /// Mixture MMD² after each round.
    pub trace: Vec<f64>,
}

/// Adds candidates one per round, each time the one that most lowers the
/// re-solved mixture MMD², until the relative improvement drops below `eps`
/// or `max_k` are selected.
pub fn greedy_multiple_search(
    user: &RkmeSpec,
    candidates: &[&RkmeSpec],
    max_k: usize,
    eps: f64,
) -> Result<GreedyOutcome> {
    if candidates.is_empty() {
        return Err(Error::param("greedy search needs at least one candidate"));
    }
    if max_k == 0 {
        return Err(Error::param("max_k must be positive"));
    }
    let full = MixtureProblem::new(user, candidates)?;
    let sub = |idx: &[usize]| MixtureProblem {
        c: Array2::from_shape_fn((idx.len(), idx.len()), |(i, j)| full.c[[idx[i], idx[j]]]),
        b: idx.iter().map(|&i| full.b[i]).collect(),
        user_norm: full.user_norm,
    };

    let mut selected: Vec<usize> = Vec::new();
    let mut weights = Array1::zeros(0);
    let mut current = f64::INFINITY;
    let mut trace = Vec::new();
    while selected.len() < max_k.min(candidates.len()) {
        let mut best: Option<(f64, usize, Array1<f64>)> = None;
        for c in 0..candidates.len() {
            if selected.contains(&c) {
                continue;
            }
            let mut idx = selected.clone();
            idx.push(c);
            let p = sub(&idx);
            let w = p.solve();
            let m = p.mmd2(&w);
            if best.as_ref().is_none_or(|(bm, _, _)| m < *bm) {
                best = Some((m, c, w));
            }
        }
        let Some((m, c, w)) = best else { break };
        if !selected.is_empty() {
            let improvement = if current > 0.0 {
                (current - m) / current
            } else {
                0.0
            };
            // relative improvement never exceeds one, so eps >= 1 rules out every addition
            if m > current || improvement < eps || eps >= 1.0 {
                break;
            }
        }
        selected.push(c);
        weights = w;
        current = m;
        trace.push(current);
        if current <= 0.0 {
            break;
        }
    }
    Ok(GreedyOutcome {
        selected,
        weights,
        mmd2: current,
        trace,
    })
}

fn rank(hits: &mut [SingleHit]) {
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.mmd2.partial_cmp(&b.mmd2).unwrap_or(Ordering::Equal))
            .then_with(|| a.id.cmp(&b.id))
    });
}

/// Scores `specs` against `user` and assembles single and multiple results.
fn statistical(
    user: &RkmeSpec,
    pool: &[(&Learnware, &RkmeSpec, bool)],
    opts: &SearchOptions,
) -> Result<SearchResult> {
    let mut hits = Vec::with_capacity(pool.len());
    for (lw, spec, hetero) in pool {
        let m = mmd_squared(user, spec)?;
        hits.push(SingleHit {
            id: lw.id.clone(),
            score: score(m, opts.tau),
            mmd2: Some(m),
            heterogeneous: *hetero,
        });
    }
    rank(&mut hits);
    let mut below_threshold = false;
    let passing = hits
        .iter()
        .take_while(|h| h.score >= opts.threshold)
        .count();
    if passing == 0 {
        below_threshold = !hits.is_empty();
        hits.truncate(1);
    } else {
        hits.truncate(passing);
    }

    let specs: Vec<&RkmeSpec> = pool.iter().map(|(_, s, _)| *s).collect();
    let multiple = if specs.is_empty() {
        MultipleHit::default()
    } else {
        match opts.strategy {
            MultipleStrategy::Greedy { max_k, eps } => {
                let g = greedy_multiple_search(user, &specs, max_k, eps)?;
                MultipleHit {
                    ids: g.selected.iter().map(|&i| pool[i].0.id.clone()).collect(),
                    weights: g.weights.to_vec(),
                    mmd2: Some(g.mmd2),
                }
            }
            MultipleStrategy::Weights { min_weight } => {
                let w = solve_mixture_weights(user, &specs)?;
                let mut keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] >= min_weight).collect();
                if keep.is_empty() {
                    keep.push(crate::linalg::argmax(w.view()));
                }
                let kept: Vec<&RkmeSpec> = keep.iter().map(|&i| specs[i]).collect();
                let p = MixtureProblem::new(user, &kept)?;
                let wk = p.solve();
                MultipleHit {
                    ids: keep.iter().map(|&i| pool[i].0.id.clone()).collect(),
                    mmd2: Some(p.mmd2(&wk)),
                    weights: wk.to_vec(),
                }
            }
        }
    };
    Ok(SearchResult {
        single: hits,
        below_threshold,
        multiple,
    })
}

/// Semantic filter followed by statistical search over `candidates`, which
/// are given in insertion order.
pub fn search_learnwares(
    user: &UserInfo,
    candidates: &[Arc<Learnware>],
    opts: &SearchOptions,
    projector: &SemanticProjector,
) -> Result<SearchResult> {
    let survivors: Vec<&Learnware> = candidates
        .iter()
        .map(|c| c.as_ref())
        .filter(|lw| {
            user.semantic()
                .is_none_or(|f| semantic_match(f, &lw.semantic))
        })
        .collect();

    let Some(stat) = user.stat() else {
        return Ok(SearchResult {
            single: survivors
                .iter()
                .map(|lw| SingleHit {
                    id: lw.id.clone(),
                    score: 1.0,
                    mmd2: None,
                    heterogeneous: false,
                })
                .collect(),
            below_threshold: false,
            multiple: MultipleHit::default(),
        });
    };
    if stat.kind != StatKind::RkmeTable {
        return Err(Error::param("user specifications must be rkme_table"));
    }
    let user_spec = &stat.payload;
    user_spec.validate()?;

    let homogeneous: Vec<(&Learnware, &RkmeSpec, bool)> = survivors
        .iter()
        .filter_map(|lw| {
            let s = lw.rkme()?;
            (s.dim() == user_spec.dim()
                && s.kernel().same_as(&user_spec.kernel())
                && s.validate().is_ok())
            .then_some((*lw, s, false))
        })
        .collect();
    if !homogeneous.is_empty() {
        return statistical(user_spec, &homogeneous, opts);
    }
    if opts.hetero && user.feature_descriptions().is_some() {
        return hetero_pool(user, user_spec, &survivors, opts, projector);
    }
    Ok(SearchResult::default())
}

/// Search in the projected space over every table learnware that carries a
/// projected spec, regardless of its native dimension.
pub fn hetero_search(
    user: &UserInfo,
    candidates: &[Arc<Learnware>],
    opts: &SearchOptions,
    projector: &SemanticProjector,
) -> Result<SearchResult> {
    let stat = user
        .stat()
        .ok_or_else(|| Error::param("heterogeneous search needs a statistical spec"))?;
    if user.feature_descriptions().is_none() {
        return Err(Error::param(
            "heterogeneous search needs the user's feature descriptions",
        ));
    }
    let survivors: Vec<&Learnware> = candidates
        .iter()
        .map(|c| c.as_ref())
        .filter(|lw| {
            user.semantic()
                .is_none_or(|f| semantic_match(f, &lw.semantic))
        })
        .collect();
    hetero_pool(user, &stat.payload, &survivors, opts, projector)
}

fn hetero_pool(
    user: &UserInfo,
    user_spec: &RkmeSpec,
    survivors: &[&Learnware],
    opts: &SearchOptions,
    projector: &SemanticProjector,
) -> Result<SearchResult> {
    let features = user
        .feature_descriptions()
        .ok_or_else(|| Error::param("missing feature descriptions"))?;
    let projected = projector.project_spec(user_spec, features)?;
    let pool: Vec<(&Learnware, &RkmeSpec, bool)> = survivors
        .iter()
        .filter(|lw| lw.semantic.data_type == DataType::Table)
        .filter_map(|lw| {
            let h = lw.stat_specs.get(&StatKind::HeteroMapTable)?;
            (h.projector == Some(projector.info()) && h.payload.kernel() == projector.kernel())
                .then_some((*lw, &h.payload, lw.semantic.input_dim != user_spec.dim()))
        })
        .collect();
    statistical(&projected.payload, &pool, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;
    use ndarray::array;

    fn point(x: f64) -> RkmeSpec {
        RkmeSpec::new(array![1.0], array![[x]], KernelParams::default()).unwrap()
    }

    #[test]
    fn single_candidate_gets_all_weight() {
        let w = solve_mixture_weights(&point(0.0), &[&point(3.0)]).unwrap();
        assert_eq!(w, array![1.0]);
        assert!(solve_mixture_weights(&point(0.0), &[]).is_err());
    }

    #[test]
    fn exact_member_is_recovered() {
        let w = solve_mixture_weights(&point(0.0), &[&point(0.0), &point(40.0)]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-4 && w[1].abs() < 1e-4, "{w}");
    }

    #[test]
    fn score_is_one_at_zero_distance() {
        assert_eq!(score(0.0, DEFAULT_TAU), 1.0);
        assert!(score(1.0, DEFAULT_TAU) < 1.0);
    }

    #[test]
    fn eps_one_returns_a_single_learnware() {
        let user = RkmeSpec::new(
            array![0.5, 0.5],
            array![[0.0], [20.0]],
            KernelParams::default(),
        )
        .unwrap();
        let g = greedy_multiple_search(&user, &[&point(0.0), &point(20.0)], 5, 1.0).unwrap();
        assert_eq!(g.selected.len(), 1);
        let g = greedy_multiple_search(&user, &[&point(0.0), &point(20.0)], 5, 0.01).unwrap();
        assert_eq!(g.selected.len(), 2);
    }
}
