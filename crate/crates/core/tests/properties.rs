use dxml::cluster::kmeans;
use dxml::data_io::{normalize_vector, parse_repo_str, write_repo_file, Dataset, LabelSet, Normalization, Point, SparseVector};
use dxml::embedding::EmbeddingMatrix;
use dxml::label_graph::build_label_graph;
use dxml::label_projection::project_label_vector;
use dxml::metrics::{ndcg_at_k, precision_at_k, rank_k};
use dxml::predictor::{aggregate_labels, top_p, Scores, Weighting};
use proptest::collection::{btree_map, btree_set, vec};
use proptest::prelude::*;

fn point(d: usize, num_labels: usize) -> impl Strategy<Value = Point> {
    (
        btree_map(0..d as u32, -1e3..1e3f64, 0..=d.min(8)),
        btree_set(0..num_labels as u32, 0..=num_labels.min(5)),
    )
        .prop_map(|(feats, labels)| Point {
            features: SparseVector::from_pairs(feats.into_iter().collect()).unwrap(),
            labels: LabelSet::new(labels.into_iter().collect()),
        })
}

fn dataset() -> impl Strategy<Value = Dataset> {
    (1usize..25, 1usize..12)
        .prop_flat_map(|(d, l)| (Just(d), Just(l), vec(point(d, l), 0..20)))
        .prop_map(|(d, l, points)| Dataset::new(d, l, points).unwrap())
}

fn label_sets(max_labels: usize) -> impl Strategy<Value = (usize, Vec<Vec<u32>>)> {
    (1..=max_labels).prop_flat_map(|l| (Just(l), vec(btree_set(0..l as u32, 0..=l.min(6)), 0..25)))
        .prop_map(|(l, sets)| (l, sets.into_iter().map(|s| s.into_iter().collect()).collect()))
}

fn matrix(dim: usize, count: usize) -> impl Strategy<Value = EmbeddingMatrix> {
    vec(-1.0..1.0f64, dim * count).prop_map(move |v| EmbeddingMatrix::from_values(dim, v))
}

proptest! {
    #[test]
    fn dataset_text_round_trip(data in dataset()) {
        let text = write_repo_file(&data);
        prop_assert_eq!(parse_repo_str(&text).unwrap(), data);
    }

    #[test]
    fn unit_l2_gives_unit_norm(feats in btree_map(0u32..50, -1e6..1e6f64, 1..20)) {
        let mut v = SparseVector::from_pairs(feats.into_iter().collect()).unwrap();
        prop_assume!(v.norm() > 0.0);
        normalize_vector(&mut v, Normalization::UnitL2);
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn graph_matches_brute_force((l, sets) in label_sets(30)) {
        let points = sets
            .iter()
            .map(|s| Point { features: SparseVector::new(), labels: LabelSet::new(s.clone()) })
            .collect();
        let data = Dataset::new(1, l, points).unwrap();
        let g = build_label_graph(&data);
        prop_assert_eq!(g.num_nodes(), l);
        let mut edges = 0;
        for a in 0..l {
            for b in 0..l {
                let both = sets.iter().filter(|s| s.contains(&(a as u32)) && s.contains(&(b as u32))).count();
                let want = (a != b && both > 0).then_some(both as u32);
                prop_assert_eq!(g.edge_weight(a, b).unwrap(), want);
                prop_assert_eq!(g.edge_weight(a, b).unwrap(), g.edge_weight(b, a).unwrap());
                if a < b && want.is_some() {
                    edges += 1;
                }
            }
        }
        prop_assert_eq!(g.num_edges(), edges);
        let degree_sum: usize = (0..l).map(|n| g.degree(n).unwrap()).sum();
        prop_assert_eq!(degree_sum, 2 * edges);
    }

    #[test]
    fn projection_is_order_free_and_unit(
        v in matrix(6, 10),
        labels in vec(0u32..10, 1..8).prop_shuffle(),
    ) {
        let Ok(target) = project_label_vector(&v, &LabelSet::new(labels.clone()), true) else {
            return Ok(());
        };
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let mut want = vec![0.0; 6];
        for &l in distinct.iter().rev() {
            for (w, x) in want.iter_mut().zip(v.column(l as usize)) {
                *w += x;
            }
        }
        let n = want.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, b) in target.0.iter().zip(&want) {
            prop_assert!((a - b / n).abs() < 1e-12);
        }
        let norm = target.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_bounded_and_monotone_invariant(
        scores in vec(0u8..20, 1..30),
        truth in btree_set(0u32..30, 0..6),
        k in 1usize..12,
    ) {
        let truth: Vec<u32> = truth.into_iter().filter(|&l| (l as usize) < scores.len()).collect();
        let truth = LabelSet::new(truth);
        let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
        let t: Vec<f64> = s.iter().map(|x| 3.0 * x + 7.0).collect();
        let p = precision_at_k(&s, &truth, k);
        let n = ndcg_at_k(&s, &truth, k);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
        prop_assert_eq!(p, precision_at_k(&t, &truth, k));
        prop_assert_eq!(n, ndcg_at_k(&t, &truth, k));
    }

    #[test]
    fn rank_k_matches_sort(scores in vec(0u8..10, 0..40), k in 0usize..50) {
        let s: Vec<f64> = scores.iter().map(|&x| x as f64 / 3.0).collect();
        let mut order: Vec<u32> = (0..s.len() as u32).collect();
        order.sort_by(|&a, &b| s[b as usize].partial_cmp(&s[a as usize]).unwrap());
        order.truncate(k);
        prop_assert_eq!(rank_k(&s, k), order);
    }

    #[test]
    fn top_p_matches_sort(entries in btree_map(0u32..100, 0u8..8, 0..30), p in 1usize..20) {
        let scores: Scores = entries.iter().map(|(&l, &s)| (l, s as f64)).collect();
        let mut pairs: Vec<(u32, f64)> = scores.iter().map(|(&l, &s)| (l, s)).collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let want: Vec<u32> = pairs.into_iter().take(p).map(|(l, _)| l).collect();
        prop_assert_eq!(top_p(&scores, p), want);
    }

    #[test]
    fn count_and_uniform_agree_on_top_p(
        sets in vec(btree_set(0u32..15, 0..5), 1..12),
        p in 1usize..10,
    ) {
        let sets: Vec<LabelSet> = sets.into_iter().map(|s| LabelSet::new(s.into_iter().collect())).collect();
        let neighbors: Vec<(&LabelSet, f64)> = sets.iter().map(|s| (s, 1.0)).collect();
        let sum = aggregate_labels(&neighbors, Weighting::Count);
        let avg = aggregate_labels(&neighbors, Weighting::Uniform);
        prop_assert_eq!(top_p(&sum, p), top_p(&avg, p));
    }

    #[test]
    fn kmeans_partitions_and_wcss_decreases(
        (n, m, pts) in (1usize..40).prop_flat_map(|n| (Just(n), 1..=n.min(6), matrix(3, n))),
        seed in any::<u64>(),
    ) {
        let out = kmeans(&pts, m, 50, seed).unwrap();
        let idx = &out.index;
        prop_assert_eq!(idx.num_clusters(), m);
        prop_assert_eq!(idx.assignments().len(), n);
        let mut seen = vec![0usize; n];
        for c in 0..m {
            prop_assert!(!idx.members(c).is_empty());
            for &i in idx.members(c) {
                prop_assert_eq!(idx.assignments()[i as usize] as usize, c);
                seen[i as usize] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        for w in out.wcss_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", out.wcss_history);
        }
    }
}
