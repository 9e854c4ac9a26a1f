mod common;

use std::collections::{BTreeSet, HashMap};

use interest_core::features::{FeatureStore, FeatureVector};
use interest_core::storyboard::{
    average_linkage, cluster_baseline, medoid, select_top_spaced, select_top_spaced_indices,
    StoryboardSpec,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn store(vectors: &[Vec<f64>], ids: &[String]) -> FeatureStore<f64> {
    FeatureStore::from_records(vectors.iter().zip(ids).map(|(v, id)| FeatureVector {
        image_id: id.clone(),
        image_path: format!("{id}.png"),
        features: v.clone(),
    }))
    .unwrap()
}

fn numbered(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("i{k:03}")).collect()
}

/// Scores drawn from a small alphabet so ties are common.
fn scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..12).prop_map(|x| x as f64 * 0.5), 0..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn selection_respects_spacing_and_matches_greedy(s in scores(120), n in 1usize..30, d in 0usize..20) {
        let spec = StoryboardSpec::new(n, d).unwrap();
        let picked = select_top_spaced_indices(&s, &spec).unwrap();
        prop_assert!(picked.len() <= n);
        for (i, &a) in picked.iter().enumerate() {
            for &b in &picked[i + 1..] {
                prop_assert!(a.abs_diff(b) >= d, "{a} and {b} closer than {d}");
            }
        }
        prop_assert_eq!(picked, common::greedy_spacing_oracle(&s, n, d));
    }
}

proptest! {
    #[test]
    fn selection_ignores_monotone_rescaling(s in scores(80), n in 1usize..15, d in 0usize..10, k in 0.1f64..10.0, c in -5.0f64..5.0) {
        let spec = StoryboardSpec::new(n, d).unwrap();
        let warped: Vec<f64> = s.iter().map(|x| (k * x + c).exp()).collect();
        prop_assert_eq!(
            select_top_spaced_indices(&s, &spec).unwrap(),
            select_top_spaced_indices(&warped, &spec).unwrap()
        );
    }

    #[test]
    fn selected_ids_are_unique_members(s in scores(80), n in 1usize..15, d in 0usize..10) {
        let ids = numbered(s.len());
        let map: HashMap<String, f64> = ids.iter().cloned().zip(s.iter().copied()).collect();
        let spec = StoryboardSpec::new(n, d).unwrap();
        let sel = select_top_spaced(&map, &ids, &spec).unwrap();
        let unique: BTreeSet<&String> = sel.ids.iter().collect();
        prop_assert_eq!(unique.len(), sel.ids.len());
        prop_assert!(sel.ids.iter().all(|id| map.contains_key(id)));
        prop_assert_eq!(sel.short, sel.ids.len() < n);
        prop_assert!(sel.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn clusters_do_not_depend_on_input_order(seed in any::<u64>(), n in 3usize..25, k in 1usize..6) {
        prop_assume!(k <= n);
        let mut rng = common::seeded(seed);
        let vectors = common::blob(&mut rng, &[0.0; 4], 1.0, n);
        let ids = numbered(n);
        let partition = |vs: &[Vec<f64>], ids: &[String]| -> BTreeSet<BTreeSet<String>> {
            average_linkage(&store(vs, ids), k)
                .unwrap()
                .into_iter()
                .map(|members| members.into_iter().map(|m| ids[m].clone()).collect())
                .collect()
        };
        let reference = partition(&vectors, &ids);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let shuffled_vectors: Vec<Vec<f64>> = order.iter().map(|&i| vectors[i].clone()).collect();
        let shuffled_ids: Vec<String> = order.iter().map(|&i| ids[i].clone()).collect();
        prop_assert_eq!(reference, partition(&shuffled_vectors, &shuffled_ids));
    }
}

#[test]
fn two_separated_clusters_yield_their_medoids() {
    for seed in 0..20 {
        let mut rng = common::seeded(seed);
        let mut a_center = vec![0.0; 8];
        a_center[0] = 1.0;
        let mut b_center = vec![0.0; 8];
        b_center[1] = 1.0;
        let mut vectors = common::blob(&mut rng, &a_center, 0.08, 10);
        vectors.extend(common::blob(&mut rng, &b_center, 0.08, 10));
        let mut order: Vec<usize> = (0..20).collect();
        order.shuffle(&mut rng);
        let vectors: Vec<Vec<f64>> = order.iter().map(|&i| vectors[i].clone()).collect();
        let ids = numbered(20);
        let s = store(&vectors, &ids);

        let clusters = average_linkage(&s, 2).unwrap();
        let truth: BTreeSet<BTreeSet<usize>> = [
            (0..20).filter(|&k| order[k] < 10).collect(),
            (0..20).filter(|&k| order[k] >= 10).collect(),
        ]
        .into_iter()
        .collect();
        let found: BTreeSet<BTreeSet<usize>> = clusters
            .iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        assert_eq!(found, truth, "seed {seed}");

        for c in &clusters {
            assert_eq!(medoid(&s, c), Some(common::exhaustive_medoid(&vectors, c)));
        }
        let (m1, m2) = common::exhaustive_two_medoids(&vectors);
        assert_eq!(
            cluster_baseline(&s, 2).unwrap(),
            vec![ids[m1].clone(), ids[m2].clone()],
            "seed {seed}"
        );
    }
}

#[test]
fn spaced_example_from_descending_scores() {
    let spec = StoryboardSpec::new(3, 2).unwrap();
    let picked = select_top_spaced_indices(&[5.0, 4.0, 3.0, 2.0, 1.0, 0.0], &spec).unwrap();
    assert_eq!(picked, vec![0, 2, 4]);
}
