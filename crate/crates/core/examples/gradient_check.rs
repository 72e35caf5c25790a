//! Central differences against the analytic gradients of one training batch.

use idc::data::{generate, SyntheticShiftSpec};
use idc::trainer::{compute_batch, LossWeights, TrainConfig, Trainer};

fn main() -> idc::Result<()> {
    let data = generate(&SyntheticShiftSpec {
        num_classes: 3,
        input_dim: 4,
        samples_per_class: 10,
        ..SyntheticShiftSpec::default()
    })?;
    let config = TrainConfig {
        feature_dim: 5,
        encoder_hidden: 8,
        discriminator_hidden: 4,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(config, 3, 4)?;
    for _ in 0..20 {
        let (s, t) = trainer.sample_batch(&data.dataset);
        trainer.train_step(&s, &t)?;
    }
    let (s, t) = trainer.sample_batch(&data.dataset);
    let model = trainer.into_model();
    let w = LossWeights::default();
    let lambda = 0.5;

    let analytic = compute_batch(&model, &s, &t, lambda, w)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (ti, g) in analytic.fc_grads.tensors().iter().enumerate() {
        for j in 0..g.len() {
            let loss = |d: f64| -> idc::Result<f64> {
                let mut m = model.clone();
                m.fc.0.params_mut()[ti][j] += d;
                Ok(compute_batch(&m, &s, &t, lambda, w)?.l_fc)
            };
            let fd = (loss(h)? - loss(-h)?) / (2.0 * h);
            let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    println!("FC head: worst relative error {worst:.2e}");
    Ok(())
}
