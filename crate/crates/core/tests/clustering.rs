mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use ssc_core::clustering::*;
use ssc_core::data::{Labels, SelfRepresentation};
use ssc_core::rng;
use rand::seq::SliceRandom;
use rand::Rng;

/// Best agreement over all label permutations (pred relabeled onto truth).
fn error_by_permutations(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    fn permute(perm: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
        if start == perm.len() {
            f(perm);
            return;
        }
        for i in start..perm.len() {
            perm.swap(start, i);
            permute(perm, start + 1, f);
            perm.swap(start, i);
        }
    }
    let mut best = 0usize;
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |p| {
        let agree = pred.iter().zip(truth).filter(|&(&a, &b)| p[a] == b).count();
        best = best.max(agree);
    });
    1.0 - best as f64 / pred.len() as f64
}

fn random_labels(n: usize, k: usize, g: &mut impl Rng) -> Labels {
    let mut a: Vec<usize> = (0..n).map(|i| if i < k { i } else { g.random_range(0..k) }).collect();
    a.shuffle(g);
    Labels::new(a, k).unwrap()
}

fn block_graph(sizes: &[usize]) -> (SimilarityGraph, Labels) {
    let truth = Labels::from_counts(sizes).unwrap();
    let n = truth.len();
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i != j && truth.get(i) == truth.get(j) { 1.0 } else { 0.0 }
    });
    (SimilarityGraph::from_weights(w).unwrap(), truth)
}

#[test]
fn error_examples() {
    let truth = Labels::from_counts(&[5, 5]).unwrap();
    assert_eq!(clustering_error(&truth, &truth).unwrap(), 0.0);
    let renamed = Labels::new(truth.assignments().iter().map(|&a| 1 - a).collect(), 2).unwrap();
    assert_eq!(clustering_error(&renamed, &truth).unwrap(), 0.0);
    let mut moved = truth.assignments().to_vec();
    moved[0] = 1;
    let moved = Labels::new(moved, 2).unwrap();
    assert!((clustering_error(&moved, &truth).unwrap() - 0.1).abs() < 1e-15);
    let short = Labels::from_counts(&[3, 3]).unwrap();
    assert!(clustering_error(&short, &truth).is_err());
}

#[test]
fn hungarian_matches_permutation_oracle() {
    let mut g = rng::stream(3, 0);
    for _ in 0..300 {
        let k = g.random_range(1..=5);
        let n = g.random_range(k..30);
        let pred = random_labels(n, k, &mut g);
        let truth = random_labels(n, k, &mut g);
        let got = clustering_error(&pred, &truth).unwrap();
        let oracle = error_by_permutations(pred.assignments(), truth.assignments(), k);
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }
}

#[test]
fn unequal_cluster_counts() {
    let truth = Labels::from_counts(&[4, 4, 2]).unwrap();
    let pred = Labels::from_counts(&[8, 2]).unwrap();
    // best: pred 0 -> truth 0 (4 agree), pred 1 -> truth 2 (2 agree)
    assert!((clustering_error(&pred, &truth).unwrap() - 0.4).abs() < 1e-15);
    assert!((clustering_error(&truth, &pred).unwrap() - 0.4).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn error_is_symmetric_and_permutation_invariant(seed in 0u64..100_000) {
        let mut g = rng::stream(seed, 1);
        let k = g.random_range(1..=6);
        let n = g.random_range(k..40);
        let pred = random_labels(n, k, &mut g);
        let truth = random_labels(n, k, &mut g);
        let e = clustering_error(&pred, &truth).unwrap();
        prop_assert_eq!(e, clustering_error(&truth, &pred).unwrap());
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut g);
        let relabeled = Labels::new(pred.assignments().iter().map(|&a| perm[a]).collect(), k).unwrap();
        prop_assert_eq!(e, clustering_error(&relabeled, &truth).unwrap());
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn rel_violation_is_scale_invariant(seed in 0u64..100_000, alpha in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]) {
        let mut g = rng::stream(seed, 2);
        let truth = random_labels(12, 3, &mut g);
        let trip: Vec<(usize, usize, f64)> = (0..30)
            .map(|_| {
                let i = g.random_range(0..12);
                let j = (i + g.random_range(1..12)) % 12;
                (i, j, g.random::<f64>() - 0.5)
            })
            .collect();
        let mut dedup = std::collections::BTreeMap::new();
        for (i, j, v) in trip {
            dedup.insert((i, j), v);
        }
        let trip: Vec<_> = dedup.into_iter().map(|((i, j), v)| (i, j, v)).collect();
        let c = SelfRepresentation::from_triplets(12, &trip).unwrap();
        let a = rel_violation(&c, &truth).unwrap();
        let b = rel_violation(&c.scaled(alpha), &truth).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}

#[test]
fn rel_violation_examples() {
    let truth = Labels::from_counts(&[2, 2]).unwrap();
    let block = SelfRepresentation::from_triplets(4, &[(0, 1, 0.5), (1, 0, -1.0), (3, 2, 2.0)]).unwrap();
    assert_eq!(rel_violation(&block, &truth).unwrap(), 0.0);
    let mixed = SelfRepresentation::from_triplets(4, &[(0, 1, 2.0), (2, 0, -1.0)]).unwrap();
    assert_eq!(rel_violation(&mixed, &truth).unwrap(), 0.5);
    assert_eq!(rel_violation(&SelfRepresentation::<f64>::zeros(4), &truth).unwrap(), 0.0);
    let only_cross = SelfRepresentation::from_triplets(4, &[(2, 0, 1.0)]).unwrap();
    assert_eq!(rel_violation(&only_cross, &truth).unwrap(), f64::INFINITY);
}

#[test]
fn detection_examples() {
    let truth = Labels::from_counts(&[2, 2]).unwrap();
    let block =
        SelfRepresentation::from_triplets(4, &[(1, 0, 0.5), (0, 1, -1.0), (3, 2, 2.0), (2, 3, 1.0)]).unwrap();
    let d = check_sdp(&block, &truth, ZERO_TOL).unwrap();
    assert!(d.sdp && d.sep && d.trivial_columns == 0);
    let d = check_sdp(&SelfRepresentation::<f64>::zeros(4), &truth, ZERO_TOL).unwrap();
    assert!(d.sep && !d.sdp);
    assert_eq!(d.trivial_columns, 4);
    let cross =
        SelfRepresentation::from_triplets(4, &[(1, 0, 0.5), (2, 0, 0.3), (0, 1, -1.0), (3, 2, 2.0), (2, 3, 1.0)])
            .unwrap();
    let d = check_sdp(&cross, &truth, ZERO_TOL).unwrap();
    assert!(!d.sep && !d.sdp);
    // a cross entry below the relative tolerance is ignored
    let tiny =
        SelfRepresentation::from_triplets(4, &[(1, 0, 0.5), (2, 0, 1e-12), (0, 1, -1.0), (3, 2, 2.0), (2, 3, 1.0)])
            .unwrap();
    assert!(check_sdp(&tiny, &truth, ZERO_TOL).unwrap().sdp);
}

#[test]
fn report_invariants() {
    let truth = Labels::from_counts(&[2, 2]).unwrap();
    let c = SelfRepresentation::from_triplets(4, &[(1, 0, 0.5), (0, 1, -1.0), (3, 2, 2.0)]).unwrap();
    let r = evaluate(&c, &truth, &truth, ZERO_TOL).unwrap();
    assert!(!r.sdp_holds && r.sep_holds && r.trivial_columns == 1);
    assert_eq!(r.clustering_error, 0.0);
}

#[test]
fn similarity_is_symmetric() {
    let mut g = rng::stream(5, 0);
    let trip: Vec<(usize, usize, f64)> = (0..10)
        .flat_map(|j| (0..10).map(move |i| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| (i, j, g.random::<f64>() - 0.5))
        .collect();
    let c = SelfRepresentation::from_triplets(10, &trip).unwrap();
    let w = build_similarity(&c);
    assert_eq!(w.weights(), &w.weights().transpose());
    assert!(w.weights().iter().all(|&v| v >= 0.0));
    assert!((0..10).all(|i| w.weights()[(i, i)] == 0.0));
    assert_eq!(build_similarity(&SelfRepresentation::<f64>::zeros(5)).weights().sum(), 0.0);
}

#[test]
fn block_graph_is_recovered_exactly() {
    let (w, truth) = block_graph(&[6, 9]);
    let pred = spectral_cluster(&w, 2, 1).unwrap();
    assert_eq!(clustering_error(&pred, &truth).unwrap(), 0.0);
    let (w, truth) = block_graph(&[5, 7, 4, 6]);
    let out = spectral_cluster_detailed(&w, 4, 2).unwrap();
    assert_eq!(clustering_error(&out.labels, &truth).unwrap(), 0.0);
    assert!(!out.degenerate);
}

#[test]
fn laplacian_spectrum() {
    let (w, _) = block_graph(&[4, 5, 6]);
    let eig = w.normalized_laplacian().symmetric_eigenvalues();
    assert!(eig.iter().all(|&e| (-1e-9..=2.0 + 1e-9).contains(&e)));
    assert_eq!(eig.iter().filter(|&&e| e.abs() < 1e-8).count(), 3);
}

#[test]
fn empty_graph_with_one_cluster() {
    let w = SimilarityGraph::from_weights(DMatrix::zeros(5, 5)).unwrap();
    let out = spectral_cluster_detailed(&w, 1, 0).unwrap();
    assert!(out.labels.assignments().iter().all(|&a| a == 0));
    assert_eq!(out.isolated, 5);
    // more than N − k isolated vertices is flagged even when k = 1
    assert!(out.degenerate);
    let out = spectral_cluster_detailed(&w, 2, 0).unwrap();
    assert!(out.degenerate);
    assert!(out.warning().is_some());
    assert_eq!(out.labels.k(), 2);
}

#[test]
fn isolated_vertices_are_still_assigned() {
    let (w, _) = block_graph(&[5, 5]);
    let mut m = DMatrix::zeros(12, 12);
    m.view_mut((0, 0), (10, 10)).copy_from(w.weights());
    let w = SimilarityGraph::from_weights(m).unwrap();
    let out = spectral_cluster_detailed(&w, 2, 3).unwrap();
    assert_eq!(out.isolated, 2);
    assert!(!out.degenerate);
    assert_eq!(out.labels.len(), 12);
}

#[test]
fn noisy_blocks_survive_scaling_and_permutation() {
    let truth = Labels::from_counts(&[10, 12, 8]).unwrap();
    let n = truth.len();
    let mut g = rng::stream(11, 0);
    let mut m = DMatrix::from_fn(n, n, |i, j| {
        let base = if truth.get(i) == truth.get(j) { 1.0 } else { 0.0 };
        base * g.random::<f64>() + 0.05 * g.random::<f64>()
    });
    m.fill_diagonal(0.0);
    let w = SimilarityGraph::from_weights(m.clone()).unwrap();
    let pred = spectral_cluster(&w, 3, 7).unwrap();
    assert_eq!(clustering_error(&pred, &truth).unwrap(), 0.0);
    let scaled = SimilarityGraph::from_weights(&m * 37.5).unwrap();
    let pred_s = spectral_cluster(&scaled, 3, 7).unwrap();
    assert_eq!(clustering_error(&pred_s, &pred).unwrap(), 0.0);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut g);
    let mp = DMatrix::from_fn(n, n, |i, j| m[(perm[i], perm[j])]);
    let truth_p = Labels::new(perm.iter().map(|&p| truth.get(p)).collect(), 3).unwrap();
    let pred_p = spectral_cluster(&SimilarityGraph::from_weights(mp).unwrap(), 3, 7).unwrap();
    assert_eq!(clustering_error(&pred_p, &truth_p).unwrap(), 0.0);
}

#[test]
fn spectral_clustering_is_deterministic() {
    let (w, _) = block_graph(&[7, 7, 7]);
    assert_eq!(spectral_cluster(&w, 3, 9).unwrap(), spectral_cluster(&w, 3, 9).unwrap());
}
