//! Heterogeneous feature spaces.
//!
//! [`SemanticProjector`] maps specs from any table feature space into one
//! shared space by embedding each feature's description. [`align_input`]
//! fits an affine map from a user's feature space into a learnware's so the
//! learnware can be applied to user rows.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelParams, RkmeSpec};
use crate::linalg::{all_finite, column_stats};
use crate::specification::{FeatureDescription, ProjectorInfo, StatKind, StatSpec};

pub const DEFAULT_D_SEM: usize = 64;
pub const DEFAULT_PROJECTOR_SEED: u64 = 0;
/// Kernel bandwidth in the projected space, whose rows have unit norm.
pub const DEFAULT_HETERO_GAMMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticProjector {
    d_sem: usize,
    seed: u64,
    kernel: KernelParams,
}

impl Default for SemanticProjector {
    fn default() -> Self {
        Self {
            d_sem: DEFAULT_D_SEM,
            seed: DEFAULT_PROJECTOR_SEED,
            kernel: KernelParams::new(DEFAULT_HETERO_GAMMA).expect("positive"),
        }
    }
}

impl SemanticProjector {
    pub fn new(d_sem: usize, seed: u64, kernel: KernelParams) -> Result<Self> {
        if d_sem == 0 {
            return Err(Error::param("d_sem must be positive"));
        }
        Ok(Self {
            d_sem,
            seed,
            kernel,
        })
    }

    pub fn from_info(info: ProjectorInfo) -> Result<Self> {
        Self::new(
            info.d_sem,
            info.seed,
            KernelParams::new(DEFAULT_HETERO_GAMMA)?,
        )
    }

    pub fn d_sem(&self) -> usize {
        self.d_sem
    }

    pub fn kernel(&self) -> KernelParams {
        self.kernel
    }

    pub fn info(&self) -> ProjectorInfo {
        ProjectorInfo {
            seed: self.seed,
            d_sem: self.d_sem,
        }
    }

    /// Unit vector for a feature description: signed hashes of its
    /// lower-cased character 3-grams, summed and normalized.
    pub fn embed_description(&self, description: &str) -> Array1<f64> {
        let chars: Vec<char> = format!(" {} ", description.to_lowercase())
            .chars()
            .collect();
        let grams: Vec<String> = if chars.len() >= 3 {
            chars.windows(3).map(|w| w.iter().collect()).collect()
        } else {
            vec![chars.iter().collect()]
        };
        let mut v = Array1::<f64>::zeros(self.d_sem);
        for g in &grams {
            let (bucket, sign) = self.hash(g.as_bytes());
            v[bucket] += sign;
        }
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            // every gram cancelled out; fall back to one hashed bucket
            let (bucket, _) = self.hash(description.as_bytes());
            v[bucket] = 1.0;
            return v;
        }
        v / norm
    }

    fn hash(&self, bytes: &[u8]) -> (usize, f64) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(bytes);
        let d = h.finalize();
        let idx = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        let sign = if d[8] & 1 == 0 { 1.0 } else { -1.0 };
        ((idx % self.d_sem as u64) as usize, sign)
    }

    /// Projects `spec` into the shared space. Coefficients are kept; each
    /// support row becomes the normalized sum of its standardized feature
    /// values times the feature embeddings.
    pub fn project_spec(
        &self,
        spec: &RkmeSpec,
        features: &[FeatureDescription],
    ) -> Result<StatSpec> {
        let descriptions: Vec<&str> = features.iter().map(|f| f.description.as_str()).collect();
        self.project_with(spec, &descriptions)
    }

    pub fn project_with(&self, spec: &RkmeSpec, descriptions: &[&str]) -> Result<StatSpec> {
        if descriptions.len() != spec.dim() {
            return Err(Error::dim(format!(
                "{} feature descriptions for a spec of dimension {}",
                descriptions.len(),
                spec.dim()
            )));
        }
        let z = spec.z();
        let (mean, std) = column_stats(z.view());
        let zs = Array2::from_shape_fn(z.raw_dim(), |(i, j)| {
            let s = if std[j] > 1e-12 { std[j] } else { 1.0 };
            (z[[i, j]] - mean[j]) / s
        });
        // Sum features in a canonical order so that permuting columns along
        // with their descriptions gives bit-identical output.
        let mut order: Vec<usize> = (0..descriptions.len()).collect();
        order.sort_by(|&a, &b| {
            descriptions[a]
                .cmp(descriptions[b])
                .then_with(|| lexicographic(zs.column(a), zs.column(b)))
        });
        let embeddings: Vec<Array1<f64>> = descriptions
            .iter()
            .map(|d| self.embed_description(d))
            .collect();

        let mut out = Array2::zeros((z.nrows(), self.d_sem));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            for &f in &order {
                row.scaled_add(zs[[i, f]], &embeddings[f]);
            }
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row /= norm;
            }
        }
        Ok(StatSpec {
            kind: StatKind::HeteroMapTable,
            payload: RkmeSpec::new(spec.beta().clone(), out, self.kernel)?,
            projector: Some(self.info()),
        })
    }
}

fn lexicographic(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Affine map `φ(z) = W z + b` from a user space (`d_u`) to a learnware space (`d_l`).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMap {
    /// `d_l × d_u`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl AlignmentMap {
    /// `0.1 · I`, zero-padded to `d_l × d_u`, and `b = 0`.
    pub fn initial(d_u: usize, d_l: usize) -> Self {
        let mut w = Array2::zeros((d_l, d_u));
        for i in 0..d_u.min(d_l) {
            w[[i, i]] = 0.1;
        }
        Self {
            w,
            b: Array1::zeros(d_l),
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            w: Array2::eye(d),
            b: Array1::zeros(d),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim(format!(
                "aligner expects {} features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.w.t()) + &self.b)
    }

    pub fn is_finite(&self) -> bool {
        all_finite(self.w.iter()) && all_finite(self.b.iter())
    }
}

/// `‖Σ_i β_ui k(φ(z_ui), ·) − Σ_j β_lj k(z_lj, ·)‖²` as a function of φ,
/// using the learnware spec's kernel.
pub struct AlignmentObjective<'a> {
    user: &'a RkmeSpec,
    target: &'a RkmeSpec,
    target_norm: f64,
}

impl<'a> AlignmentObjective<'a> {
    pub fn new(user: &'a RkmeSpec, target: &'a RkmeSpec) -> Self {
        Self {
            user,
            target,
            target_norm: target.norm_squared(),
        }
    }

    fn mapped(&self, map: &AlignmentMap) -> Array2<f64> {
        self.user.z().dot(&map.w.t()) + &map.b
    }

    pub fn value(&self, map: &AlignmentMap) -> f64 {
        let p = self.mapped(map);
        let beta = self.user.beta();
        let k = self.target.kernel();
        let own = beta.dot(&gram(p.view(), p.view(), k).dot(beta));
        let cross = beta.dot(&gram(p.view(), self.target.z().view(), k).dot(self.target.beta()));
        (own - 2.0 * cross + self.target_norm).max(0.0)
    }

    /// Gradient with respect to `(W, b)`.
    pub fn gradient(&self, map: &AlignmentMap) -> (Array2<f64>, Array1<f64>) {
        let p = self.mapped(map);
        let beta = self.user.beta();
        let k = self.target.kernel();
        let c = 4.0 * k.gamma();
        // a[i][j] = -c β_i β_j k(p_i, p_j), b[i][t] = c β_i β_t k(p_i, z_t)
        let mut a = gram(p.view(), p.view(), k);
        let mut b = gram(p.view(), self.target.z().view(), k);
        for (i, (mut ar, mut br)) in a.rows_mut().into_iter().zip(b.rows_mut()).enumerate() {
            ar *= &(beta * (-c * beta[i]));
            br *= &(self.target.beta() * (c * beta[i]));
        }
        let shift = a.sum_axis(Axis(1)) + b.sum_axis(Axis(1));
        let g = &p * &shift.insert_axis(Axis(1)) - a.dot(&p) - b.dot(self.target.z());
        let gw = g.t().dot(self.user.z());
        let gb = g.sum_axis(Axis(0));
        (gw, gb)
    }
}

#[derive(Debug, Clone)]
pub struct AlignOptions {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop when the objective improves by less than this fraction over `patience` iterations.
    pub tolerance: f64,
    pub patience: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_iters: 500,
            tolerance: 1e-6,
            patience: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentFit {
    pub map: AlignmentMap,
    /// Objective after each accepted step, starting from the initial map.
    pub trace: Vec<f64>,
}

impl AlignmentFit {
    pub fn objective(&self) -> f64 {
        *self
            .trace
            .last()
            .expect("trace starts with the initial value")
    }
}

/// Fits φ by Adam steps on the alignment objective. A step that would raise
/// the objective is shrunk until it does not, or skipped.
///
/// The objective has poor local minima (any column permutation is a
/// separate basin), so two starts are refined: the scaled identity and a map
/// that pairs columns whose one-dimensional marginals agree best. The fit
/// with the lower final objective wins.
pub fn align_input(
    user: &RkmeSpec,
    target: &RkmeSpec,
    opts: &AlignOptions,
) -> Result<AlignmentFit> {
    user.validate()?;
    target.validate()?;
    let plain = align_from(
        user,
        target,
        AlignmentMap::initial(user.dim(), target.dim()),
        opts,
    )?;
    let matched = align_from(user, target, marginal_start(user, target), opts)?;
    Ok(if matched.objective() < plain.objective() {
        matched
    } else {
        plain
    })
}

fn marginal(spec: &RkmeSpec, col: usize, sign: f64) -> (RkmeSpec, f64, f64) {
    let z = spec.z().column(col);
    let total: f64 = spec.beta().sum();
    let mean = spec
        .beta()
        .iter()
        .zip(z.iter())
        .map(|(b, v)| b * v)
        .sum::<f64>()
        / total;
    let var = spec
        .beta()
        .iter()
        .zip(z.iter())
        .map(|(b, v)| b * (v - mean).powi(2))
        .sum::<f64>()
        / total;
    let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let zs = Array2::from_shape_fn((z.len(), 1), |(i, _)| sign * (z[i] - mean) / std);
    let kernel = KernelParams::new(0.5).expect("positive");
    (
        RkmeSpec::from_parts_unchecked(spec.beta() / total, zs, kernel),
        mean,
        std,
    )
}

/// Largest dimension for which every column assignment is tried.
const EXHAUSTIVE_DIM: usize = 6;

/// A starting map that sends each user column to one learnware column by
/// the affine change of mean and scale, with the sign whose standardized
/// marginals agree best. For small dimensions every injective assignment is
/// scored by the full objective; otherwise pairs are picked greedily by
/// marginal MMD.
pub fn marginal_start(user: &RkmeSpec, target: &RkmeSpec) -> AlignmentMap {
    let (d_u, d_l) = (user.dim(), target.dim());
    let um: Vec<_> = (0..d_u).map(|a| marginal(user, a, 1.0)).collect();
    let tm: Vec<[(RkmeSpec, f64, f64); 2]> = (0..d_l)
        .map(|l| [marginal(target, l, 1.0), marginal(target, l, -1.0)])
        .collect();
    // cost[a][l] = (marginal MMD², sign)
    let cost: Vec<Vec<(f64, f64)>> = um
        .iter()
        .map(|(ua, _, _)| {
            tm.iter()
                .map(|pair| {
                    let pos = crate::kernel::mmd_squared_unclamped(ua, &pair[0].0)
                        .unwrap_or(f64::INFINITY);
                    let neg = crate::kernel::mmd_squared_unclamped(ua, &pair[1].0)
                        .unwrap_or(f64::INFINITY);
                    if neg < pos {
                        (neg, -1.0)
                    } else {
                        (pos, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    let build = |pairs: &[(usize, usize)]| {
        let mut map = AlignmentMap {
            w: Array2::zeros((d_l, d_u)),
            b: Array1::zeros(d_l),
        };
        for l in 0..d_l {
            map.b[l] = tm[l][0].1;
        }
        for &(a, l) in pairs {
            let scale = cost[a][l].1 * tm[l][0].2 / um[a].2;
            map.w[[l, a]] = scale;
            map.b[l] = tm[l][0].1 - scale * um[a].1;
        }
        map
    };

    if d_u.max(d_l) <= EXHAUSTIVE_DIM {
        let obj = AlignmentObjective::new(user, target);
        let mut best: Option<(f64, AlignmentMap)> = None;
        for pairs in injections(d_u, d_l) {
            let map = build(&pairs);
            let v = obj.value(&map);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, map));
            }
        }
        return best.expect("at least one assignment").1;
    }

    let mut ranked: Vec<(f64, usize, usize)> = (0..d_u)
        .flat_map(|a| (0..d_l).map(move |l| (a, l)))
        .map(|(a, l)| (cost[a][l].0, a, l))
        .collect();
    ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_u = vec![false; d_u];
    let mut used_l = vec![false; d_l];
    let mut pairs = Vec::new();
    for (_, a, l) in ranked {
        if !used_u[a] && !used_l[l] {
            used_u[a] = true;
            used_l[l] = true;
            pairs.push((a, l));
        }
    }
    build(&pairs)
}

/// All ways to pair `min(d_u, d_l)` user columns with distinct learnware
/// columns, as `(user, learnware)` index pairs.
fn injections(d_u: usize, d_l: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(
        small: usize,
        large: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == small {
            out.push(cur.clone());
            return;
        }
        for j in 0..large {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(small, large, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let (small, large) = (d_u.min(d_l), d_u.max(d_l));
    let mut raw = Vec::new();
    rec(
        small,
        large,
        &mut vec![false; large],
        &mut Vec::new(),
        &mut raw,
    );
    raw.into_iter()
        .map(|sel| {
            sel.into_iter()
                .enumerate()
                .map(|(i, j)| if d_u <= d_l { (i, j) } else { (j, i) })
                .collect()
        })
        .collect()
}

pub fn align_from(
    user: &RkmeSpec,
    target: &RkmeSpec,
    start: AlignmentMap,
    opts: &AlignOptions,
) -> Result<AlignmentFit> {
    if start.input_dim() != user.dim() || start.output_dim() != target.dim() {
        return Err(Error::dim(
            "starting map does not match the user and target dimensions",
        ));
    }
    let obj = AlignmentObjective::new(user, target);
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut map = start;
    let mut current = obj.value(&map);
    let mut trace = vec![current];
    let mut mw = Array2::<f64>::zeros(map.w.raw_dim());
    let mut vw = mw.clone();
    let mut mb = Array1::<f64>::zeros(map.b.raw_dim());
    let mut vb = mb.clone();
    let mut history = vec![current];

    for t in 1..=opts.max_iters {
        let (gw, gb) = obj.gradient(&map);
        mw = &mw * b1 + &gw * (1.0 - b1);
        vw = &vw * b2 + &gw.mapv(|g| g * g) * (1.0 - b2);
        mb = &mb * b1 + &gb * (1.0 - b1);
        vb = &vb * b2 + &gb.mapv(|g| g * g) * (1.0 - b2);
        let c1 = 1.0 - b1.powi(t as i32);
        let c2 = 1.0 - b2.powi(t as i32);
        let step_w = Array2::from_shape_fn(mw.raw_dim(), |ij| {
            (mw[ij] / c1) / ((vw[ij] / c2).sqrt() + eps)
        });
        let step_b =
            Array1::from_shape_fn(mb.raw_dim(), |i| (mb[i] / c1) / ((vb[i] / c2).sqrt() + eps));

        let mut scale = opts.learning_rate;
        for _ in 0..10 {
            let cand = AlignmentMap {
                w: &map.w - &(&step_w * scale),
                b: &map.b - &(&step_b * scale),
            };
            let value = obj.value(&cand);
            if value <= current {
                map = cand;
                current = value;
                trace.push(current);
                break;
            }
            scale *= 0.5;
        }
        history.push(current);
        if current == 0.0 {
            break;
        }
        if history.len() > opts.patience {
            let past = history[history.len() - 1 - opts.patience];
            if past - current < opts.tolerance * past {
                break;
            }
        }
    }
    Ok(AlignmentFit { map, trace })
}
