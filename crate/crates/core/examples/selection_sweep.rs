//! Every method and strategy at a few ratios, written as CSV to stdout.
//!
//! cargo run --release --example selection_sweep -- [seeds]

use idc::data::{generate, SyntheticShiftSpec};
use idc::select::{retrain_on_selection, select, sweep_csv, Method, Strategy, SweepCell};
use idc::trainer::{train, TrainConfig};

fn main() -> idc::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let methods = [Method::Random, Method::In, Method::Adv, Method::Idc];
    let strategies = [Strategy::S, Strategy::P, Strategy::M];
    let ratios = [0.05, 0.1, 0.2];

    let mut cells: Vec<SweepCell> = Vec::new();
    for &m in &methods {
        for &s in &strategies {
            for &r in &ratios {
                cells.push(SweepCell {
                    method: m,
                    strategy: s,
                    ratio: r,
                    accuracies: Vec::new(),
                });
            }
        }
    }
    for seed in 0..seeds {
        let data = generate(&SyntheticShiftSpec {
            seed,
            ..SyntheticShiftSpec::default()
        })?;
        let config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let model = train(&config, &data.dataset)?.model;
        for cell in cells.iter_mut() {
            let (_, plan) = select(cell.method, cell.strategy, cell.ratio, &data.dataset, Some(&model), seed, 0.9)?;
            let o = retrain_on_selection(&plan, &data.dataset, &config, &data.target_labels)?;
            cell.accuracies.push(o.fc_accuracy);
        }
        eprintln!("seed {seed} done");
    }
    print!("{}", sweep_csv(&cells));
    Ok(())
}
