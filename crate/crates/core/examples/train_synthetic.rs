//! Train on the default shifted benchmark and compare the memory classifier
//! with the FC head.
//!
//! cargo run --release --example train_synthetic -- [seed]

use idc::data::{generate, SyntheticShiftSpec};
use idc::infer::{evaluate_fc, evaluate_idc};
use idc::trainer::{train, TrainConfig};

fn main() -> idc::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = generate(&SyntheticShiftSpec {
        seed,
        ..SyntheticShiftSpec::default()
    })?;
    let labels = data.target_labels.aligned(&data.dataset)?;
    let out = train(
        &TrainConfig {
            seed,
            ..TrainConfig::default()
        },
        &data.dataset,
    )?;
    for r in out.history.iter().step_by(250) {
        println!(
            "iter {:5}  L_fc {:.4}  L_adv {:.4}  L_idc {:.4}  src_acc {:.3}",
            r.iteration, r.l_fc, r.l_adv, r.l_idc, r.src_acc
        );
    }
    let idc = evaluate_idc(&out.model, &data.dataset, &labels)?;
    let fc = evaluate_fc(&out.model, &data.dataset, &labels)?;
    println!("target accuracy: IDC {:.4}  FC {:.4}", idc.accuracy(), fc.accuracy());
    println!("slots in memory: {}", out.model.memory.total_slots());
    Ok(())
}
