//! Show which stored source samples drive a target prediction.

use idc::data::{generate, SyntheticShiftSpec};
use idc::infer::explain;
use idc::trainer::{train, TrainConfig};

fn main() -> idc::Result<()> {
    let data = generate(&SyntheticShiftSpec::default())?;
    let config = TrainConfig {
        iterations: 600,
        ..TrainConfig::default()
    };
    let model = train(&config, &data.dataset)?.model;

    for t in data.dataset.target.iter().take(3) {
        let e = explain(&model, &t.feature, 3)?;
        let truth = data.target_labels.get(&t.id).unwrap_or(usize::MAX);
        println!("{}: predicted {} (true {truth}), confidence {:.4}", t.id, e.predicted, e.confidence);
        for item in &e.most_contributing {
            println!("  + {} sim {:.3} value {:.3}", item.provenance, item.similarity, item.value);
        }
        for item in &e.least_contributing {
            println!("  - {} sim {:.3} value {:.3}", item.provenance, item.similarity, item.value);
        }
    }
    Ok(())
}
