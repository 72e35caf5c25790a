mod common;

use common::two_class_dataset;
use idc::data::{generate, Dataset, SourceSample, SyntheticShiftSpec};
use idc::trainer::{train, TrainConfig, Trainer};
use idc::IdcError;

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: 100,
        batch_size: 16,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_gives_bit_identical_history() {
    let ds = two_class_dataset(1, 40, 5, 1.5);
    let a = train(&small_config(4), &ds).unwrap();
    let b = train(&small_config(4), &ds).unwrap();
    let bits = |h: &[idc::trainer::LossRecord]| -> Vec<[u64; 4]> {
        h.iter()
            .map(|r| [r.l_fc.to_bits(), r.l_adv.to_bits(), r.l_idc.to_bits(), r.src_acc.to_bits()])
            .collect()
    };
    assert_eq!(bits(&a.history), bits(&b.history));
    assert_eq!(a.model, b.model);
    let c = train(&small_config(5), &ds).unwrap();
    assert_ne!(bits(&a.history), bits(&c.history));
}

#[test]
fn one_write_per_source_sample() {
    let ds = two_class_dataset(2, 30, 4, 1.0);
    let config = small_config(2);
    let mut trainer = Trainer::new(config.clone(), 2, 4).unwrap();
    for t in 1..=37u64 {
        let (s, tg) = trainer.sample_batch(&ds);
        trainer.train_step(&s, &tg).unwrap();
        assert_eq!(trainer.total_writes(), t * config.batch_size as u64 / 2);
    }
    assert_eq!(trainer.history().len(), 37);
}

#[test]
fn occupancy_tracks_writes_until_full() {
    let ds = two_class_dataset(3, 30, 4, 1.0);
    let config = TrainConfig {
        memory_capacity: 40,
        batch_size: 8,
        ..small_config(3)
    };
    let mut trainer = Trainer::new(config, 2, 4).unwrap();
    let mut written = [0usize; 2];
    for _ in 0..30 {
        let (s, tg) = trainer.sample_batch(&ds);
        for x in &s {
            written[x.label] += 1;
        }
        trainer.train_step(&s, &tg).unwrap();
        for c in 0..2 {
            let len = trainer.model().memory.bank(c).unwrap().len();
            assert_eq!(len, written[c].min(40));
        }
    }
    assert!(written.iter().any(|&w| w > 40), "banks should have filled");
}

#[test]
fn separable_source_is_learned_within_500_steps() {
    for seed in 0..5 {
        let ds = two_class_dataset(100 + seed, 100, 4, 4.0);
        let config = TrainConfig {
            iterations: 500,
            seed,
            ..TrainConfig::default()
        };
        let model = train(&config, &ds).unwrap().model;
        let hits = ds
            .source
            .iter()
            .filter(|s| model.fc_predict(&s.feature).unwrap().0 == s.label)
            .count();
        let acc = hits as f64 / ds.source.len() as f64;
        assert!(acc >= 0.99, "seed {seed}: source accuracy {acc}");
    }
}

#[test]
fn benchmark_training_behaviour() {
    let data = generate(&SyntheticShiftSpec::default()).unwrap();
    let out = train(&TrainConfig::default(), &data.dataset).unwrap();
    let h = &out.history;
    let tenth = h.len() / 10;
    let mean = |r: &[idc::trainer::LossRecord]| r.iter().map(|x| x.l_fc).sum::<f64>() / r.len() as f64;
    let (first, last) = (mean(&h[..tenth]), mean(&h[h.len() - tenth..]));
    assert!(last < first, "classification loss {first} -> {last}");

    let d: f64 = data
        .dataset
        .target
        .iter()
        .map(|t| out.model.domain_probability(&t.feature).unwrap())
        .sum::<f64>()
        / data.dataset.target.len() as f64;
    assert!((d - 0.5).abs() <= 0.15, "mean discriminator output on targets {d}");
}

#[test]
fn zero_encoder_is_reported() {
    let ds = two_class_dataset(4, 10, 3, 1.0);
    let mut trainer = Trainer::new(small_config(1), 2, 3).unwrap();
    for p in trainer.model_mut().encoder.0.params_mut() {
        p.fill(0.0);
    }
    let (s, t) = trainer.sample_batch(&ds);
    assert!(matches!(trainer.train_step(&s, &t), Err(IdcError::ZeroNormVector)));
}

#[test]
fn missing_class_is_rejected() {
    let ds = two_class_dataset(5, 10, 3, 1.0);
    let only_zero: Vec<SourceSample> = ds.source.iter().filter(|s| s.label == 0).cloned().collect();
    let ds = Dataset::new(2, 3, only_zero, ds.target.clone()).unwrap();
    assert!(matches!(train(&small_config(1), &ds), Err(IdcError::ConfigInvalid(_))));
}
