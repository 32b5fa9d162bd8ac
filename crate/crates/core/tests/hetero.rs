mod common;

use std::sync::Arc;

use common::{mixture_sample, spec_learnware};
use lwdock_core::hetero::{
    align_input, AlignOptions, AlignmentMap, AlignmentObjective, SemanticProjector,
};
use lwdock_core::kernel::{mmd_squared, KernelParams};
use lwdock_core::learners::{Logistic, LogisticOptions, Ridge};
use lwdock_core::market::{hetero_search, search_learnwares, SearchOptions};
use lwdock_core::model::Model;
use lwdock_core::reuse::{fit_scratch, reuse_hetero, Targets, DEFAULT_AUGMENT_LAMBDA};
use lwdock_core::specification::{
    FeatureDescription, SemanticFilter, StatKind, StatSpec, UserInfo,
};
use lwdock_core::{generate_rkme, Error, Learnware, RkmeOptions, RkmeSpec};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_spec(rng: &mut ChaCha8Rng, n: usize, d: usize, kernel: KernelParams) -> RkmeSpec {
    let beta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = beta.iter().sum();
    RkmeSpec::new(
        Array1::from_iter(beta.iter().map(|b| b / s)),
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-2.0..2.0)),
        kernel,
    )
    .unwrap()
}

#[test]
fn alignment_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    for case in 0..20 {
        let (d_u, d_l) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let kernel = KernelParams::new(rng.gen_range(0.05..1.0)).unwrap();
        let (n_u, n_l) = (rng.gen_range(2..8), rng.gen_range(2..8));
        let user = random_spec(&mut rng, n_u, d_u, kernel);
        let target = random_spec(&mut rng, n_l, d_l, kernel);
        let map = AlignmentMap {
            w: Array2::from_shape_fn((d_l, d_u), |_| rng.gen_range(-1.0..1.0)),
            b: Array1::from_shape_fn(d_l, |_| rng.gen_range(-1.0..1.0)),
        };
        let obj = AlignmentObjective::new(&user, &target);
        let (gw, gb) = obj.gradient(&map);
        let mut numeric_w = Array2::zeros(gw.raw_dim());
        for ij in ndarray::indices(gw.raw_dim()) {
            let (mut p, mut m) = (map.clone(), map.clone());
            p.w[ij] += h;
            m.w[ij] -= h;
            numeric_w[ij] = (obj.value(&p) - obj.value(&m)) / (2.0 * h);
        }
        let mut numeric_b = Array1::zeros(gb.raw_dim());
        for i in 0..d_l {
            let (mut p, mut m) = (map.clone(), map.clone());
            p.b[i] += h;
            m.b[i] -= h;
            numeric_b[i] = (obj.value(&p) - obj.value(&m)) / (2.0 * h);
        }
        let scale = numeric_w
            .iter()
            .chain(numeric_b.iter())
            .fold(1e-8_f64, |a, v| a.max(v.abs()));
        let gap = gw
            .iter()
            .zip(numeric_w.iter())
            .chain(gb.iter().zip(numeric_b.iter()))
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(
            gap / scale <= 1e-4,
            "case {case}: relative gap {}",
            gap / scale
        );
    }
}

/// Columns with distinct scales so that a permutation is identifiable.
fn structured_data(n: usize, seed: u64) -> Array2<f64> {
    let centers = vec![
        vec![-2.0, 1.0, 3.0, 0.0],
        vec![2.0, -1.0, 0.0, -3.0],
        vec![0.0, 2.5, -2.0, 2.0],
    ];
    let mut x = mixture_sample(&centers, &[0.5, 0.3, 0.2], 0.6, n, seed);
    for (j, s) in [0.5, 1.0, 1.5, 2.0].iter().enumerate() {
        x.column_mut(j).mapv_inplace(|v| v * s);
    }
    x
}

fn permute_spec(spec: &RkmeSpec, perm: &[usize]) -> RkmeSpec {
    let z = spec.z().select(Axis(1), perm);
    RkmeSpec::new(spec.beta().clone(), z, spec.kernel()).unwrap()
}

#[test]
fn identical_spec_aligns_to_zero() {
    let spec = generate_rkme(
        structured_data(300, 1).view(),
        &RkmeOptions::default().with_size(20),
    )
    .unwrap()
    .spec;
    let fit = align_input(&spec, &spec, &AlignOptions::default()).unwrap();
    assert!(fit.objective() <= 1e-6, "{}", fit.objective());
    assert!(fit.objective() <= fit.trace[0]);
}

#[test]
fn column_permutation_is_recovered() {
    let perms = [[1, 0, 2, 3], [3, 2, 1, 0], [2, 0, 3, 1], [1, 3, 0, 2]];
    for (seed, perm) in perms.iter().enumerate() {
        let target = generate_rkme(
            structured_data(400, seed as u64).view(),
            &RkmeOptions::default().with_size(20),
        )
        .unwrap()
        .spec;
        let user = permute_spec(&target, perm);
        // the permutation matrix itself reaches zero
        let mut exact = AlignmentMap {
            w: Array2::zeros((4, 4)),
            b: Array1::zeros(4),
        };
        for (a, &l) in perm.iter().enumerate() {
            exact.w[[l, a]] = 1.0;
        }
        assert!(AlignmentObjective::new(&user, &target).value(&exact) < 1e-12);

        let fit = align_input(&user, &target, &AlignOptions::default()).unwrap();
        assert!(
            fit.objective() <= 1e-3,
            "perm {perm:?}: {}",
            fit.objective()
        );
        for w in fit.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}

#[test]
fn line_target_beats_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t: Vec<f64> = (0..200).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let line = Array2::from_shape_fn(
        (200, 2),
        |(i, j)| if j == 0 { t[i] } else { 0.5 * t[i] + 1.0 },
    );
    let target = generate_rkme(line.view(), &RkmeOptions::default().with_size(15))
        .unwrap()
        .spec;
    let u = Array2::from_shape_fn((200, 1), |_| rng.gen_range(0.0..1.0));
    let user = generate_rkme(u.view(), &RkmeOptions::default().with_size(15))
        .unwrap()
        .spec;

    let obj = AlignmentObjective::new(&user, &target);
    let best_random = (0..20)
        .map(|_| {
            let map = AlignmentMap {
                w: Array2::from_shape_fn((2, 1), |_| rng.gen_range(-3.0..3.0)),
                b: Array1::from_shape_fn(2, |_| rng.gen_range(-3.0..3.0)),
            };
            obj.value(&map)
        })
        .fold(f64::INFINITY, f64::min);
    let fit = align_input(&user, &target, &AlignOptions::default()).unwrap();
    assert!(
        fit.objective() <= best_random,
        "{} vs {best_random}",
        fit.objective()
    );
}

fn ridge_learnware(id: &str, x: &Array2<f64>, y: &Array2<f64>) -> Arc<Learnware> {
    let spec = generate_rkme(x.view(), &RkmeOptions::default().with_size(30))
        .unwrap()
        .spec;
    let model = Ridge::fit(x.view(), y.view(), 1.0)
        .unwrap()
        .into_model()
        .unwrap();
    let mut lw = (*spec_learnware(id, spec)).clone();
    lw.model = Model::Portable(model);
    Arc::new(lw)
}

fn targets(x: &Array2<f64>, coef: &[f64], noise: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, noise).unwrap();
    Array2::from_shape_fn((x.nrows(), 1), |(i, _)| {
        x.row(i).iter().zip(coef).map(|(a, b)| a * b).sum::<f64>() + n.sample(&mut rng)
    })
}

/// Component index of each row of [`structured_data`].
fn components(n: usize) -> Vec<usize> {
    let counts = [0.5, 0.3, 0.2].map(|w: f64| (w * n as f64).round() as usize);
    counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
        .collect()
}

/// Target that is piecewise in the mixture component, so a component
/// classifier carries information a linear fit on a few labels cannot.
fn piecewise_targets(x: &Array2<f64>, comp: &[usize], seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, 0.3).unwrap();
    let level = [-3.0, 2.0, 0.5];
    Array2::from_shape_fn((x.nrows(), 1), |(i, _)| {
        level[comp[i]] + 0.2 * x[[i, 0]] + n.sample(&mut rng)
    })
}

#[test]
fn hetero_reuse_tracks_homogeneous_access() {
    let mut close = 0;
    let mut report = Vec::new();
    for seed in 0..10u64 {
        let xd = structured_data(500, 100 + seed);
        let spec = generate_rkme(xd.view(), &RkmeOptions::default().with_size(30))
            .unwrap()
            .spec;
        let clf = Logistic::fit(
            xd.view(),
            &components(500),
            3,
            None,
            &LogisticOptions::default(),
        )
        .unwrap();
        let mut lw = (*spec_learnware("dev", spec)).clone();
        lw.model = Model::Portable(clf.into_model().unwrap());
        let lw = Arc::new(lw);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..4).collect();
        while perm == [0, 1, 2, 3] {
            perm.shuffle(&mut rng);
        }
        let xo = structured_data(300, 200 + seed);
        let y = piecewise_targets(&xo, &components(300), 300 + seed);
        let xu = xo.select(Axis(1), &perm);
        let user_spec = generate_rkme(xu.view(), &RkmeOptions::default().with_size(30))
            .unwrap()
            .spec;
        let fit = align_input(&user_spec, lw.rkme().unwrap(), &AlignOptions::default()).unwrap();

        let mut truth = AlignmentMap {
            w: Array2::zeros((4, 4)),
            b: Array1::zeros(4),
        };
        for (a, &l) in perm.iter().enumerate() {
            truth.w[[l, a]] = 1.0;
        }
        let mut rows: Vec<usize> = (0..300).collect();
        rows.shuffle(&mut rng);
        let (labeled, test) = rows.split_at(20);
        let (xl, xt) = (xu.select(Axis(0), labeled), xu.select(Axis(0), test));
        let tl = Targets::Regression(y.select(Axis(0), labeled));
        let tt = Targets::Regression(y.select(Axis(0), test));

        let homo = reuse_hetero(lw.clone(), truth, xl.view(), &tl).unwrap();
        let hetero = reuse_hetero(lw.clone(), fit.map, xl.view(), &tl).unwrap();
        let o = tt.loss(homo.predict(xt.view()).unwrap().view()).unwrap();
        let h = tt.loss(hetero.predict(xt.view()).unwrap().view()).unwrap();
        report.push((seed, o, h));
        if (h - o).abs() <= 0.1 * o {
            close += 1;
        }
    }
    assert!(close >= 8, "{close}/10 within 10%: {report:?}");
}

#[test]
fn identity_learnware_lowers_training_loss() {
    let x = structured_data(200, 5);
    let y = targets(&x, &[1.0, 1.0, -1.0, 0.5], 0.3, 5);
    let lw = ridge_learnware("id", &x, &y);
    let t = Targets::Regression(y.clone());
    let aligned = reuse_hetero(lw, AlignmentMap::identity(4), x.view(), &t).unwrap();
    let scratch = fit_scratch(x.view(), &t, DEFAULT_AUGMENT_LAMBDA).unwrap();
    let a = t.loss(aligned.predict(x.view()).unwrap().view()).unwrap();
    let s = t.loss(scratch.predict(x.view()).unwrap().view()).unwrap();
    assert!(a <= s + 1e-12, "{a} vs {s}");
}

#[test]
fn hetero_reuse_needs_labels_and_matching_dims() {
    let x = structured_data(100, 6);
    let lw = ridge_learnware("id", &x, &targets(&x, &[1.0; 4], 0.1, 6));
    let empty = Targets::Regression(Array2::zeros((0, 1)));
    let err = reuse_hetero(
        lw.clone(),
        AlignmentMap::identity(4),
        x.slice(ndarray::s![..0, ..]),
        &empty,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Parameter(_)), "{err}");
    let t = Targets::Regression(Array2::zeros((100, 1)));
    let err = reuse_hetero(lw, AlignmentMap::initial(3, 4), x.view(), &t).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)), "{err}");
}

fn features(names: &[&str]) -> Vec<FeatureDescription> {
    fn text(n: &str) -> &str {
        match n {
            "price" => "unit price in dollars",
            "stock" => "items held in the warehouse",
            "visits" => "weekly visitor count",
            "returns" => "orders sent back by customers",
            other => other,
        }
    }
    names
        .iter()
        .map(|n| FeatureDescription::new(*n, text(n)))
        .collect()
}

#[test]
fn projection_keeps_weights_and_is_deterministic() {
    let spec = generate_rkme(
        structured_data(200, 7).view(),
        &RkmeOptions::default().with_size(12),
    )
    .unwrap()
    .spec;
    let f = features(&["price", "stock", "visits", "returns"]);
    let p = SemanticProjector::default();
    let a = p.project_spec(&spec, &f).unwrap();
    let b = p.project_spec(&spec, &f).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.payload.beta(), spec.beta());
    assert_eq!(a.payload.len(), spec.len());
    assert_eq!(a.payload.dim(), p.d_sem());

    // permuting columns together with their descriptions changes nothing
    let perm = [2, 0, 3, 1];
    let fp: Vec<FeatureDescription> = perm.iter().map(|&i| f[i].clone()).collect();
    let c = p.project_spec(&permute_spec(&spec, &perm), &fp).unwrap();
    let diff = (c.payload.z() - a.payload.z())
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    assert_eq!(c.payload, a.payload, "max diff {diff}");
    assert!(p.project_spec(&spec, &f[..3]).is_err());
}

/// Learnware `i` lies near a line along its own sign pattern, so the
/// distributions differ in correlation structure, which survives the
/// per-column standardization of the projection.
fn shaped_data(pattern: usize, n: usize, seed: u64) -> Array2<f64> {
    const SIGNS: [[f64; 4]; 4] = [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0, 1.0],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let mut x = Array2::zeros((n, 4));
    for mut row in x.rows_mut() {
        let t: f64 = rng.gen_range(-2.0..2.0);
        for (j, v) in row.iter_mut().enumerate() {
            *v = t * SIGNS[pattern][j] + noise.sample(&mut rng);
        }
    }
    x
}

fn projected_learnware(
    id: &str,
    x: &Array2<f64>,
    f: &[FeatureDescription],
    p: &SemanticProjector,
) -> Arc<Learnware> {
    let spec = generate_rkme(x.view(), &RkmeOptions::default().with_size(20))
        .unwrap()
        .spec;
    let mut lw = (*spec_learnware(id, spec.clone())).clone();
    lw.semantic.feature_descriptions = f.to_vec();
    lw.stat_specs
        .insert(StatKind::HeteroMapTable, p.project_spec(&spec, f).unwrap());
    Arc::new(lw)
}

#[test]
fn hetero_search_agrees_with_homogeneous_search() {
    let p = SemanticProjector::default();
    let f = features(&["price", "stock", "visits", "returns"]);
    let market: Vec<Arc<Learnware>> = (0..4)
        .map(|i| projected_learnware(&format!("L{i}"), &shaped_data(i, 300, i as u64), &f, &p))
        .collect();
    let mut agree = 0;
    for trial in 0..20u64 {
        let axis = (trial % 4) as usize;
        let x = shaped_data(axis, 200, 50 + trial);
        let spec = generate_rkme(
            x.view(),
            &RkmeOptions::default().with_size(20).with_seed(trial),
        )
        .unwrap()
        .spec;
        let filter = SemanticFilter {
            feature_descriptions: Some(f.clone()),
            ..Default::default()
        };
        let info = UserInfo::new(Some(filter), Some(StatSpec::rkme_table(spec))).unwrap();
        let homo = search_learnwares(&info, &market, &SearchOptions::default(), &p).unwrap();
        let het = hetero_search(&info, &market, &SearchOptions::default(), &p).unwrap();
        if homo.single[0].id == het.single[0].id {
            agree += 1;
        }
    }
    assert!(agree >= 18, "{agree}/20");
}

#[test]
fn different_dims_fall_back_to_the_projected_space() {
    let p = SemanticProjector::default();
    let f = features(&["price", "stock", "visits", "returns"]);
    let market: Vec<Arc<Learnware>> = (0..2)
        .map(|i| projected_learnware(&format!("L{i}"), &shaped_data(i, 300, i as u64), &f, &p))
        .collect();
    // the user has three of the four columns
    let x = shaped_data(1, 200, 9).select(Axis(1), &[1, 2, 3]);
    let spec = generate_rkme(x.view(), &RkmeOptions::default().with_size(20))
        .unwrap()
        .spec;
    let filter = SemanticFilter {
        feature_descriptions: Some(f[1..].to_vec()),
        ..Default::default()
    };
    let info = UserInfo::new(Some(filter), Some(StatSpec::rkme_table(spec.clone()))).unwrap();
    let r = search_learnwares(&info, &market, &SearchOptions::default(), &p).unwrap();
    assert_eq!(r.single[0].id, "L1");
    assert!(r.single.iter().all(|h| h.heterogeneous));

    let off = SearchOptions {
        hetero: false,
        ..Default::default()
    };
    assert!(search_learnwares(&info, &market, &off, &p)
        .unwrap()
        .single
        .is_empty());
    let plain = UserInfo::from_stat(StatSpec::rkme_table(spec));
    assert!(
        search_learnwares(&plain, &market, &SearchOptions::default(), &p)
            .unwrap()
            .single
            .is_empty()
    );
    assert!(mmd_squared(market[0].hetero().unwrap(), market[1].hetero().unwrap()).unwrap() > 0.0);
}
