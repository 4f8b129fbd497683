//! Hand-checked values through the public API, plus straight-line
//! reimplementations used as oracles for the weighted prototype and the
//! episode loss.

use ndarray::{array, Array1, Array2, ArrayView1, ArrayView2};
use protonet::embedder::episode_loss;
use protonet::{
    classify_episode, compute_prototype, euclidean_distance, influence_weights, leave_one_out_mmd, mmd, seeded_rng,
    softmax_neg_distances, Bandwidth, ClassId, Embedder64, Episode64, KernelConfig, PrototypeStrategy64,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn assert_all_close(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert!(close(*g, *w, tol), "{got:?} vs {want:?}");
    }
}

#[test]
fn distances_and_softmax() {
    let d = |a: Array1<f64>, b: Array1<f64>| euclidean_distance(a.view(), b.view()).unwrap();
    assert_eq!(d(array![1.0, 2.0], array![4.0, 6.0]), 5.0);
    assert!(close(
        d(array![1.0, 1.0, 1.0], array![2.0, 3.0, 4.0]),
        14f64.sqrt(),
        1e-15
    ));

    let p = softmax_neg_distances(&[0.0, 3f64.ln()]).unwrap();
    assert_all_close(p.probs(), &[0.75, 0.25], 1e-15);
    // 1 / (1 + e^-1) = 0.7310585786300049 to double precision.
    let p = softmax_neg_distances(&[1000.0, 1001.0]).unwrap();
    assert_all_close(p.probs(), &[0.7310585786300049, 0.2689414213699951], 1e-15);
}

#[test]
fn discrepancy_values() {
    let lin = KernelConfig::Linear;
    assert_eq!(mmd(array![[1.0]].view(), array![[3.0]].view(), lin).unwrap(), 2.0);
    let rbf = mmd(
        array![[0.0]].view(),
        array![[1.0]].view(),
        KernelConfig::Rbf(Bandwidth::Fixed(1.0)),
    )
    .unwrap();
    assert!(close(rbf, (2.0 - 2.0 * (-0.5f64).exp()).sqrt(), 1e-15));

    let loo = leave_one_out_mmd(array![[0.0], [0.0], [3.0]].view(), lin).unwrap();
    assert_all_close(&loo, &[0.5, 0.5, 1.0], 1e-15);
    let scores = influence_weights(&loo).unwrap();
    assert_all_close(&scores.if_weights, &[0.5, 0.5, 0.0], 1e-15);
    assert_eq!(influence_weights(&[1.0, 1.0]).unwrap().if_weights, [1.0, 1.0]);
    assert_eq!(influence_weights(&[0.0, 0.0, 0.0]).unwrap().if_weights, [1.0, 1.0, 1.0]);
}

#[test]
fn three_strategies_on_one_outlier() {
    let support = array![[0.0], [0.0], [3.0]];
    let (p, w) = compute_prototype(support.view(), &PrototypeStrategy64::UniformMean).unwrap();
    assert!(close(p[0], 1.0, 1e-15));
    assert_all_close(&w, &[1.0 / 3.0; 3], 1e-15);

    let (p, w) = compute_prototype(support.view(), &PrototypeStrategy64::influence()).unwrap();
    assert_eq!(p[0], 0.0);
    assert_all_close(&w, &[0.5, 0.5, 0.0], 1e-15);

    let (p, w) = compute_prototype(support.view(), &PrototypeStrategy64::inverse_distance()).unwrap();
    assert_all_close(&w, &[0.4, 0.4, 0.2], 1e-8);
    assert!(close(p[0], 0.6, 1e-8));
}

fn one_dim_episode(a: &[f64], b: &[f64], query: f64) -> Episode64 {
    let support: Vec<f64> = a.iter().chain(b).copied().collect();
    let labels = a
        .iter()
        .map(|_| ClassId(0))
        .chain(b.iter().map(|_| ClassId(1)))
        .collect();
    Episode64 {
        support: Array2::from_shape_vec((support.len(), 1), support).unwrap(),
        support_labels: labels,
        query: array![[query]],
        query_labels: vec![ClassId(0)],
        class_ids: vec![ClassId(0), ClassId(1)],
    }
}

#[test]
fn planted_outlier_margins() {
    // Class A prototype: 1.8 under the mean, 0 under influence weights (the
    // outlier at 9 gets weight 0). Class B stays at 10. The query at 2.5 is
    // 0.7 from the mean prototype but 2.5 from the robust one, so the mean
    // strategy happens to give the larger probability for A here.
    let ep = one_dim_episode(&[0.0, 0.0, 0.0, 0.0, 9.0], &[10.0; 5], 2.5);
    let uniform = classify_episode(&ep, &Embedder64::Identity, &PrototypeStrategy64::UniformMean).unwrap();
    let robust = classify_episode(&ep, &Embedder64::Identity, &PrototypeStrategy64::influence()).unwrap();
    assert!(close(uniform.prototypes.vectors[[0, 0]], 1.8, 1e-12));
    assert_eq!(robust.prototypes.vectors[[0, 0]], 0.0);
    assert_eq!(uniform.predictions, [ClassId(0)]);
    assert_eq!(robust.predictions, [ClassId(0)]);
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    assert!(close(uniform.probabilities[0].probs()[0], sigmoid(7.5 - 0.7), 1e-12));
    assert!(close(robust.probabilities[0].probs()[0], sigmoid(7.5 - 2.5), 1e-12));
}

#[test]
fn saturation_and_ties() {
    let ep = one_dim_episode(&[0.0, 0.0], &[10.0, 10.0], 1.0);
    let c = classify_episode(&ep, &Embedder64::Identity, &PrototypeStrategy64::UniformMean).unwrap();
    assert!(c.probabilities[0].probs()[0] > 0.99);

    let ep = one_dim_episode(&[0.0, 0.0], &[10.0, 10.0], 5.0);
    let c = classify_episode(&ep, &Embedder64::Identity, &PrototypeStrategy64::UniformMean).unwrap();
    assert_eq!(c.probabilities[0].probs(), [0.5, 0.5]);
    assert_eq!(c.predictions, [ClassId(0)]);
}

/// Leave-one-out MMD with the linear kernel written from its definition:
/// distance between the full mean and the mean without row i.
fn oracle_influence_prototype(rows: ArrayView2<'_, f64>) -> Vec<f64> {
    let k = rows.nrows();
    let dim = rows.ncols();
    let mean = |skip: Option<usize>| -> Vec<f64> {
        let mut m = vec![0.0; dim];
        let mut n = 0.0;
        for (i, r) in rows.outer_iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
            n += 1.0;
        }
        m.iter().map(|a| a / n).collect()
    };
    let full = mean(None);
    let scores: Vec<f64> = (0..k)
        .map(|i| {
            let loo = mean(Some(i));
            full.iter().zip(&loo).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    let top = scores.iter().cloned().fold(0.0, f64::max);
    let mut w: Vec<f64> = scores.iter().map(|s| 1.0 - s / top).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    (0..dim).map(|j| (0..k).map(|i| w[i] * rows[[i, j]]).sum()).collect()
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

#[test]
fn influence_prototype_matches_oracle() {
    let mut rng = seeded_rng(192);
    for _ in 0..200 {
        let k = rng.random_range(3..8);
        let dim = rng.random_range(1..6);
        let rows = random_matrix(&mut rng, k, dim);
        let (got, _) = compute_prototype(rows.view(), &PrototypeStrategy64::influence()).unwrap();
        let want = oracle_influence_prototype(rows.view());
        assert_all_close(got.as_slice().unwrap(), &want, 1e-9);
    }
}

fn dist(a: ArrayView1<'_, f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn episode_loss_matches_oracle() {
    let mut rng = seeded_rng(249);
    for _ in 0..100 {
        let (n, k, q, dim) = (
            rng.random_range(2..5),
            rng.random_range(1..5),
            rng.random_range(1..4),
            3,
        );
        let class_ids: Vec<ClassId> = (0..n as u32).map(ClassId).collect();
        let ep = Episode64 {
            support: random_matrix(&mut rng, n * k, dim),
            support_labels: class_ids.iter().flat_map(|&c| vec![c; k]).collect(),
            query: random_matrix(&mut rng, n * q, dim),
            query_labels: class_ids.iter().flat_map(|&c| vec![c; q]).collect(),
            class_ids,
        };
        let protos: Vec<Vec<f64>> = (0..n)
            .map(|c| {
                (0..dim)
                    .map(|j| (0..k).map(|i| ep.support[[c * k + i, j]]).sum::<f64>() / k as f64)
                    .collect()
            })
            .collect();
        let mut want = 0.0;
        for (row, label) in ep.query.outer_iter().zip(&ep.query_labels) {
            let logits: Vec<f64> = protos.iter().map(|p| -dist(row, p)).collect();
            let log_norm = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
            want -= logits[label.0 as usize] - log_norm;
        }
        want /= ep.query.nrows() as f64;
        let got = episode_loss(&Embedder64::Identity, &ep, &PrototypeStrategy64::UniformMean).unwrap();
        assert!(close(got, want, 1e-9), "{got} vs {want}");
    }
}
