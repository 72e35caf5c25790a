//! Accuracy on the retained targets as low-confidence predictions are dropped.

use idc::data::{generate, SyntheticShiftSpec};
use idc::infer::{evaluate_fc, evaluate_idc};
use idc::trainer::{train, TrainConfig};

fn main() -> idc::Result<()> {
    let data = generate(&SyntheticShiftSpec::default())?;
    let labels = data.target_labels.aligned(&data.dataset)?;
    let model = train(&TrainConfig::default(), &data.dataset)?.model;

    let rates: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let idc = evaluate_idc(&model, &data.dataset, &labels)?.rejection_curve(&rates)?;
    let fc = evaluate_fc(&model, &data.dataset, &labels)?.rejection_curve(&rates)?;
    println!("rate  retained  IDC     FC");
    for (a, b) in idc.points.iter().zip(&fc.points) {
        println!("{:.1}   {:8}  {:.4}  {:.4}", a.rate, a.retained, a.accuracy, b.accuracy);
    }
    Ok(())
}
