//! Rank source samples by transfer importance and keep a tenth of them.

use idc::data::{generate, SyntheticShiftSpec};
use idc::select::{retrain_on_selection, select, Method, Strategy};
use idc::trainer::{train, TrainConfig};

fn main() -> idc::Result<()> {
    let data = generate(&SyntheticShiftSpec::default())?;
    let config = TrainConfig::default();
    let model = train(&config, &data.dataset)?.model;

    let (table, plan) = select(Method::Idc, Strategy::M, 0.1, &data.dataset, Some(&model), 0, 0.9)?;
    println!("quota {} per class {:?}", plan.quota, plan.per_class_counts);

    let mut top = table.rows.clone();
    top.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    for r in top.iter().take(5) {
        println!("  {} class {} importance {:.4}", r.id, r.label, r.importance);
    }

    let outcome = retrain_on_selection(&plan, &data.dataset, &config, &data.target_labels)?;
    println!("retrained on {} samples: FC target accuracy {:.4}", plan.selected.len(), outcome.fc_accuracy);
    Ok(())
}
