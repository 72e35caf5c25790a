mod common;

use common::{gaussian, rng, two_class_dataset};
use idc::infer::predict;
use idc::persist::{load_model, model_from_json, model_to_json, save_model, FORMAT_VERSION};
use idc::trainer::{train, TrainConfig};
use idc::{IdcError, IdcModel};

fn trained() -> IdcModel {
    let ds = two_class_dataset(6, 40, 5, 1.5);
    let config = TrainConfig {
        iterations: 80,
        batch_size: 16,
        memory_capacity: 24,
        seed: 6,
        ..TrainConfig::default()
    };
    train(&config, &ds).unwrap().model
}

#[test]
fn round_trip_preserves_predictions_and_banks() {
    let model = trained();
    let back = model_from_json(&model_to_json(&model, Some("abc")).unwrap()).unwrap();
    assert_eq!(back, model);
    for c in 0..2 {
        let (a, b) = (model.memory.bank(c).unwrap(), back.memory.bank(c).unwrap());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.slots().iter().zip(b.slots()) {
            assert_eq!(x.key(), y.key());
            assert_eq!(x.value().to_bits(), y.value().to_bits());
            assert_eq!(x.age(), y.age());
            assert_eq!(x.provenance(), y.provenance());
        }
    }
    let mut r = rng(1);
    for _ in 0..100 {
        let x = gaussian(&mut r, 5);
        let (p, q) = (predict(&model, &x).unwrap(), predict(&back, &x).unwrap());
        assert_eq!(p.predicted, q.predicted);
        assert_eq!(p.scores, q.scores);
        assert_eq!(model.fc_probabilities(&x).unwrap(), back.fc_probabilities(&x).unwrap());
    }
}

#[test]
fn file_round_trip() {
    let model = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path, None).unwrap();
    assert_eq!(load_model(&path).unwrap(), model);
    assert!(matches!(load_model(dir.path().join("absent.json")), Err(IdcError::Io { .. })));
}

#[test]
fn other_format_versions_are_refused() {
    let text = model_to_json(&trained(), None).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["format_version"] = serde_json::json!(FORMAT_VERSION + 1);
    match model_from_json(&v.to_string()) {
        Err(IdcError::VersionMismatch { found, expected }) => {
            assert_eq!((found, expected), (FORMAT_VERSION + 1, FORMAT_VERSION));
        }
        other => panic!("expected a version mismatch, got {other:?}"),
    }
}

#[test]
fn damaged_files_are_corrupt() {
    let text = model_to_json(&trained(), None).unwrap();
    assert!(matches!(model_from_json(&text[..text.len() / 2]), Err(IdcError::CorruptFile(_))));
    assert!(matches!(model_from_json("not json"), Err(IdcError::CorruptFile(_))));
    assert!(matches!(model_from_json("{\"format_version\": 1}"), Err(IdcError::CorruptFile(_))));
}
