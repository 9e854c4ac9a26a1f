use interest_core::features::{load_features, FeatureStore, FeatureVector};
use interest_core::Error;
use proptest::prelude::*;

fn records() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6).prop_flat_map(|dim| {
        prop::collection::vec(
            prop::collection::vec(-1e12f64..1e12, dim)
                .prop_filter("non-zero", |v| v.iter().any(|x| *x != 0.0)),
            1..12,
        )
    })
}

fn store_of(vectors: &[Vec<f64>]) -> FeatureStore<f64> {
    FeatureStore::from_records(vectors.iter().enumerate().map(|(k, v)| FeatureVector {
        image_id: format!("frame-{k}"),
        image_path: format!("frames/{k:04}.jpg"),
        features: v.clone(),
    }))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jsonl_round_trip_is_exact(vectors in records()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.jsonl");
        let store = store_of(&vectors);
        store.write_jsonl(&path).unwrap();
        let back: FeatureStore<f64> = load_features(&path).unwrap();
        prop_assert_eq!(back.records(), store.records());
        prop_assert_eq!(back.base_dir(), dir.path());
    }

    #[test]
    fn binary_round_trip_keeps_single_precision(vectors in records()) {
        let vectors: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| v.iter().map(|x| (x.clamp(-1e30, 1e30) as f32) as f64).filter(|x| *x != 0.0).collect())
            .collect();
        let dim = vectors.iter().map(Vec::len).min().unwrap();
        prop_assume!(dim > 0);
        let vectors: Vec<Vec<f64>> = vectors.into_iter().map(|v| v[..dim].to_vec()).collect();
        let dir = tempfile::tempdir().unwrap();
        let store = store_of(&vectors);
        store.write_binary(dir.path().join("features.json"), dir.path().join("features.f32")).unwrap();
        let back: FeatureStore<f64> = load_features(dir.path().join("features.json")).unwrap();
        prop_assert_eq!(back.records(), store.records());
    }
}

#[test]
fn malformed_lines_are_reported_by_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.jsonl");
    std::fs::write(
        &path,
        "{\"id\":\"a\",\"path\":\"a.png\",\"features\":[1,0]}\n\n{\"id\":\"b\",\"path\":\"b.png\",\"features\":\"x\"}\n",
    )
    .unwrap();
    match load_features::<f64>(&path) {
        Err(Error::Load { record, .. }) => assert_eq!(record, 2),
        other => panic!("expected a load error, got {other:?}"),
    }
}

#[test]
fn truncated_binary_data_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_of(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
    let data = dir.path().join("features.f32");
    store
        .write_binary(dir.path().join("features.json"), &data)
        .unwrap();
    let bytes = std::fs::read(&data).unwrap();
    std::fs::write(&data, &bytes[..bytes.len() - 4]).unwrap();
    assert!(load_features::<f64>(dir.path().join("features.json")).is_err());
}

#[test]
fn single_precision_store_loads_the_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.jsonl");
    store_of(&[vec![0.25, -0.5], vec![1.5, 2.0]])
        .write_jsonl(&path)
        .unwrap();
    let narrow: FeatureStore<f32> = load_features(&path).unwrap();
    assert_eq!(narrow.records()[1].features, vec![1.5f32, 2.0]);
}
