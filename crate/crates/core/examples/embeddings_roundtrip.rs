//! Save a dataset and a trained model, load both back and check they agree.

use idc::data::{generate, load_embeddings, save_embeddings, SyntheticShiftSpec};
use idc::infer::predict;
use idc::persist::{load_model, save_model};
use idc::trainer::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("idc-roundtrip");
    std::fs::create_dir_all(&dir)?;
    let data = generate(&SyntheticShiftSpec::default())?;
    let csv = dir.join("embeddings.csv");
    save_embeddings(&data.dataset, &csv)?;
    let loaded = load_embeddings(&csv)?;
    println!("dataset round trip equal: {}", loaded == data.dataset);

    let config = TrainConfig {
        iterations: 200,
        ..TrainConfig::default()
    };
    let model = train(&config, &loaded)?.model;
    let path = dir.join("model.json");
    save_model(&model, &path, None)?;
    let back = load_model(&path)?;
    let same = loaded
        .target
        .iter()
        .all(|t| predict(&model, &t.feature).ok() == predict(&back, &t.feature).ok());
    println!("model round trip equal: {}, predictions agree: {same}", back == model);
    println!("files in {}", dir.display());
    Ok(())
}
