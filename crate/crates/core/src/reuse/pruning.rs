//! Multi-objective ensemble pruning with a small NSGA-II loop.
//!
//! Individuals are bit masks over the members. Objectives, all minimized:
//! validation error of the averaged subset, negative mean margin
//! (classification only) and subset size.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{average_predictions, AverageMode, Member, Targets};
use crate::error::{Error, Result};
use crate::linalg::argmax;

#[derive(Debug, Clone)]
pub struct PruningOptions {
    pub population: usize,
    pub generations: usize,
    pub crossover: f64,
    pub seed: u64,
}

impl Default for PruningOptions {
    fn default() -> Self {
        Self {
            population: 20,
            generations: 50,
            crossover: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsemblePruning {
    members: Vec<Member>,
    mask: Vec<bool>,
    validation_error: f64,
}

type Mask = Vec<bool>;

struct Evaluator<'a> {
    preds: Vec<Array2<f64>>,
    targets: &'a Targets,
}

impl Evaluator<'_> {
    fn objectives(&self, mask: &Mask) -> Vec<f64> {
        let chosen: Vec<Array2<f64>> = mask
            .iter()
            .zip(&self.preds)
            .filter(|(&b, _)| b)
            .map(|(_, p)| p.clone())
            .collect();
        let avg = average_predictions(&chosen, AverageMode::Mean).expect("masks are never empty");
        let size = chosen.len() as f64;
        match self.targets {
            Targets::Regression(y) => {
                let mse = (&avg - y).mapv(|v| v * v).mean().unwrap_or(0.0);
                vec![mse, size]
            }
            Targets::Classification { labels, .. } => {
                let mut wrong = 0usize;
                let mut margin = 0.0;
                for (row, &l) in avg.rows().into_iter().zip(labels) {
                    if argmax(row) != l {
                        wrong += 1;
                    }
                    let other = row
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != l)
                        .map(|(_, &v)| v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    margin += row.get(l).copied().unwrap_or(0.0)
                        - if other.is_finite() { other } else { 0.0 };
                }
                let n = labels.len() as f64;
                vec![wrong as f64 / n, -margin / n, size]
            }
        }
    }
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Fronts of indices, best first.
fn non_dominated_sort(objs: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(&objs[i], &objs[j]) {
                dominates_list[i].push(j);
            } else if i != j && dominates(&objs[j], &objs[i]) {
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

fn crowding(front: &[usize], objs: &[Vec<f64>]) -> Vec<f64> {
    let mut dist = vec![0.0; front.len()];
    let n_obj = objs[front[0]].len();
    for m in 0..n_obj {
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| {
            objs[front[a]][m]
                .total_cmp(&objs[front[b]][m])
                .then(a.cmp(&b))
        });
        let lo = objs[front[order[0]]][m];
        let hi = objs[front[*order.last().expect("non-empty")]][m];
        dist[order[0]] = f64::INFINITY;
        dist[*order.last().expect("non-empty")] = f64::INFINITY;
        if hi > lo {
            for w in 1..order.len().saturating_sub(1) {
                dist[order[w]] +=
                    (objs[front[order[w + 1]]][m] - objs[front[order[w - 1]]][m]) / (hi - lo);
            }
        }
    }
    dist
}

impl EnsemblePruning {
    pub fn fit(
        members: Vec<Member>,
        x: ArrayView2<'_, f64>,
        targets: &Targets,
        opts: &PruningOptions,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::param("ensemble pruning needs members"));
        }
        if targets.is_empty() || x.nrows() != targets.len() {
            return Err(Error::param(
                "ensemble pruning needs a non-empty validation set matching its labels",
            ));
        }
        let k = members.len();
        let preds: Vec<Array2<f64>> = members
            .iter()
            .map(|m| m.predict(x))
            .collect::<Result<_>>()?;
        if let Some(p) = preds.iter().find(|p| p.dim() != preds[0].dim()) {
            return Err(Error::dim(format!(
                "member outputs {:?} and {:?}",
                preds[0].dim(),
                p.dim()
            )));
        }
        let eval = Evaluator { preds, targets };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let size = opts.population.max(k);

        let mut pop: Vec<Mask> = Vec::with_capacity(size);
        let mut seen: HashSet<Mask> = HashSet::new();
        for i in 0..k {
            let mut m = vec![false; k];
            m[i] = true;
            seen.insert(m.clone());
            pop.push(m);
        }
        let mut attempts = 0;
        while pop.len() < size && attempts < 50 * size {
            attempts += 1;
            let mut m: Mask = (0..k).map(|_| rng.gen_bool(0.5)).collect();
            if !m.iter().any(|&b| b) {
                m[rng.gen_range(0..k)] = true;
            }
            if seen.insert(m.clone()) {
                pop.push(m);
            }
        }
        let mut objs: Vec<Vec<f64>> = pop.iter().map(|m| eval.objectives(m)).collect();

        let flip = 1.0 / k as f64;
        for _ in 0..opts.generations {
            let fronts = non_dominated_sort(&objs);
            let mut rank = vec![0usize; pop.len()];
            let mut crowd = vec![0.0; pop.len()];
            for (r, f) in fronts.iter().enumerate() {
                for (i, d) in f.iter().zip(crowding(f, &objs)) {
                    rank[*i] = r;
                    crowd[*i] = d;
                }
            }
            let tournament = |rng: &mut ChaCha8Rng| {
                let a = rng.gen_range(0..pop.len());
                let b = rng.gen_range(0..pop.len());
                if rank[a] < rank[b] || (rank[a] == rank[b] && crowd[a] > crowd[b]) {
                    a
                } else {
                    b
                }
            };
            let mut children = Vec::with_capacity(pop.len());
            while children.len() < pop.len() {
                let pa = &pop[tournament(&mut rng)];
                let pb = &pop[tournament(&mut rng)];
                let mut child: Mask = if rng.gen_bool(opts.crossover) {
                    pa.iter()
                        .zip(pb)
                        .map(|(&a, &b)| if rng.gen_bool(0.5) { a } else { b })
                        .collect()
                } else {
                    pa.clone()
                };
                for bit in child.iter_mut() {
                    if rng.gen_bool(flip) {
                        *bit = !*bit;
                    }
                }
                if !child.iter().any(|&b| b) {
                    child[rng.gen_range(0..k)] = true;
                }
                children.push(child);
            }

            let mut present: HashSet<Mask> = pop.iter().cloned().collect();
            for c in children {
                if present.insert(c.clone()) {
                    objs.push(eval.objectives(&c));
                    pop.push(c);
                }
            }
            // survival: fill by fronts, breaking the last one by crowding
            let fronts = non_dominated_sort(&objs);
            let mut keep = Vec::with_capacity(size);
            for f in fronts {
                if keep.len() + f.len() <= size {
                    keep.extend(f);
                } else {
                    let d = crowding(&f, &objs);
                    let mut order: Vec<usize> = (0..f.len()).collect();
                    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(f[a].cmp(&f[b])));
                    keep.extend(order.into_iter().take(size - keep.len()).map(|i| f[i]));
                }
                if keep.len() == size {
                    break;
                }
            }
            keep.sort_unstable();
            pop = keep.iter().map(|&i| pop[i].clone()).collect();
            objs = keep.iter().map(|&i| objs[i].clone()).collect();
        }

        let front = &non_dominated_sort(&objs)[0];
        let best = *front
            .iter()
            .min_by(|&&a, &&b| {
                objs[a][0]
                    .total_cmp(&objs[b][0])
                    .then(
                        objs[a]
                            .last()
                            .expect("size")
                            .total_cmp(objs[b].last().expect("size")),
                    )
                    .then(pop[b].cmp(&pop[a]))
            })
            .expect("population is never empty");
        Ok(Self {
            members,
            mask: pop[best].clone(),
            validation_error: objs[best][0],
        })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Indices of the kept members.
    pub fn selected(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    /// Validation error (error rate or MSE) of the kept subset.
    pub fn validation_error(&self) -> f64 {
        self.validation_error
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let kept: Vec<Member> = self
            .selected()
            .into_iter()
            .map(|i| self.members[i].clone())
            .collect();
        super::average_reuse(&kept, x, AverageMode::Mean)
    }
}
