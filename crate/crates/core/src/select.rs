//! Importance-ranked source selection.
//!
//! An importance measure scores every source sample against the unlabeled
//! target set; a strategy turns scores into a subset of a given size:
//!
//! * `S`: global top scores.
//! * `P`: top scores within each class, class quotas proportional to the
//!   original class sizes (largest-remainder apportionment).
//! * `M`: a fixed fraction of the quota split evenly across classes, the rest
//!   filled by global top scores among the samples not yet chosen.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TargetLabels};
use crate::error::{IdcError, Result};
use crate::infer;
use crate::math::{l2_norm, similarity_with_norms};
use crate::model::IdcModel;
use crate::seeding::{stream_rng, Stream};
use crate::trainer::{self, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Random,
    In,
    Adv,
    Idc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    S,
    P,
    M,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Random => "random",
            Method::In => "in",
            Method::Adv => "adv",
            Method::Idc => "idc",
        })
    }
}

impl FromStr for Method {
    type Err = IdcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Method::Random),
            "in" => Ok(Method::In),
            "adv" => Ok(Method::Adv),
            "idc" => Ok(Method::Idc),
            other => Err(IdcError::ConfigInvalid(format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::S => "S",
            Strategy::P => "P",
            Strategy::M => "M",
        })
    }
}

impl FromStr for Strategy {
    type Err = IdcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S" => Ok(Strategy::S),
            "P" => Ok(Strategy::P),
            "M" => Ok(Strategy::M),
            other => Err(IdcError::ConfigInvalid(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceRow {
    pub id: String,
    pub label: usize,
    pub importance: f64,
}

/// One row per source sample, in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceTable {
    pub rows: Vec<ImportanceRow>,
}

impl ImportanceTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Per source sample, the mean normalized similarity to every target.
pub fn importance_similarity(
    sources: &[(String, usize, Vec<f64>)],
    targets: &[Vec<f64>],
) -> Result<ImportanceTable> {
    if targets.is_empty() {
        return Err(IdcError::EmptyTargetSet);
    }
    let target_norms = norms(targets)?;
    let rows = sources
        .iter()
        .map(|(id, label, f)| {
            let fnorm = checked_norm(f, targets[0].len())?;
            let mean = mean_similarity(f, fnorm, targets, &target_norms);
            Ok(ImportanceRow {
                id: id.clone(),
                label: *label,
                importance: mean,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ImportanceTable { rows })
}

fn checked_norm(f: &[f64], dim: usize) -> Result<f64> {
    if f.len() != dim {
        return Err(IdcError::DimensionMismatch {
            expected: dim,
            actual: f.len(),
        });
    }
    let n = l2_norm(f);
    if n == 0.0 {
        return Err(IdcError::ZeroNormVector);
    }
    Ok(n)
}

fn norms(vs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = vs[0].len();
    vs.iter().map(|v| checked_norm(v, dim)).collect()
}

fn mean_similarity(f: &[f64], fnorm: f64, targets: &[Vec<f64>], target_norms: &[f64]) -> f64 {
    targets
        .iter()
        .zip(target_norms)
        .map(|(t, &tn)| similarity_with_norms(f, fnorm, t, tn))
        .sum::<f64>()
        / targets.len() as f64
}

/// Raw input features of every source sample, as importance inputs.
pub fn raw_sources(dataset: &Dataset) -> Vec<(String, usize, Vec<f64>)> {
    dataset
        .source
        .iter()
        .map(|s| (s.id.clone(), s.label, s.feature.to_vec()))
        .collect()
}

pub fn raw_targets(dataset: &Dataset) -> Vec<Vec<f64>> {
    dataset.target.iter().map(|t| t.feature.to_vec()).collect()
}

/// Adapted encoder features of every source sample.
pub fn encoded_sources(model: &IdcModel, dataset: &Dataset) -> Result<Vec<(String, usize, Vec<f64>)>> {
    dataset
        .source
        .iter()
        .map(|s| Ok((s.id.clone(), s.label, model.encode(&s.feature)?)))
        .collect()
}

pub fn encoded_targets(model: &IdcModel, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    dataset.target.iter().map(|t| model.encode(&t.feature)).collect()
}

/// Representative score of a source sample: the value of its most recent
/// surviving slot in its class bank, else the bank's own read score for it.
pub fn representative_score(model: &IdcModel, label: usize, id: &str, feature: &[f64]) -> Result<f64> {
    let bank = model.memory.bank(label)?;
    match bank.find_by_provenance(id) {
        Some(i) => Ok(bank.slots()[i].value()),
        None => Ok(bank.read(feature, model.memory.read_k())?.score),
    }
}

/// Mean over targets of `representative score × similarity` in the adapted
/// feature space.
pub fn importance_idc(model: &IdcModel, dataset: &Dataset) -> Result<ImportanceTable> {
    let sources = encoded_sources(model, dataset)?;
    let targets = encoded_targets(model, dataset)?;
    let scores = sources
        .iter()
        .map(|(id, label, f)| representative_score(model, *label, id, f))
        .collect::<Result<Vec<_>>>()?;
    importance_weighted(&sources, &scores, &targets)
}

/// `score_i × mean_t s(f_i, f_t)` for each source.
pub fn importance_weighted(
    sources: &[(String, usize, Vec<f64>)],
    scores: &[f64],
    targets: &[Vec<f64>],
) -> Result<ImportanceTable> {
    if scores.len() != sources.len() {
        return Err(IdcError::DimensionMismatch {
            expected: sources.len(),
            actual: scores.len(),
        });
    }
    let mut table = importance_similarity(sources, targets)?;
    for (row, &v) in table.rows.iter_mut().zip(scores) {
        row.importance *= v;
    }
    Ok(table)
}

/// I.i.d. uniform scores from the selection sub-stream of `seed`.
pub fn importance_random(dataset: &Dataset, seed: u64) -> ImportanceTable {
    let mut rng = stream_rng(seed, Stream::Selection);
    ImportanceTable {
        rows: dataset
            .source
            .iter()
            .map(|s| ImportanceRow {
                id: s.id.clone(),
                label: s.label,
                importance: rng.random::<f64>(),
            })
            .collect(),
    }
}

/// Importance table for any method. `model` is required for `Adv` and `Idc`.
pub fn importance(method: Method, dataset: &Dataset, model: Option<&IdcModel>, seed: u64) -> Result<ImportanceTable> {
    let need_model = || {
        model.ok_or_else(|| IdcError::ConfigInvalid(format!("method {method} needs a trained model")))
    };
    match method {
        Method::Random => Ok(importance_random(dataset, seed)),
        Method::In => importance_similarity(&raw_sources(dataset), &raw_targets(dataset)),
        Method::Adv => {
            let m = need_model()?;
            importance_similarity(&encoded_sources(m, dataset)?, &encoded_targets(m, dataset)?)
        }
        Method::Idc => importance_idc(need_model()?, dataset),
    }
}

/// Why a sample ended up in a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectedBy {
    Class,
    Global,
    None,
}

impl SelectedBy {
    fn as_str(self) -> &'static str {
        match self {
            SelectedBy::Class => "class",
            SelectedBy::Global => "global",
            SelectedBy::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionPlan {
    pub method: Option<Method>,
    pub strategy: Strategy,
    pub ratio: f64,
    pub quota: usize,
    /// Selected ids in the order they were chosen.
    pub selected: Vec<String>,
    pub per_class_counts: Vec<usize>,
    /// Aligned with the importance table rows.
    pub selected_by: Vec<SelectedBy>,
}

impl SelectionPlan {
    pub fn selected_set(&self) -> HashSet<String> {
        self.selected.iter().cloned().collect()
    }

    /// `sample_id,label,importance,selected_by`, one row per source sample.
    pub fn to_csv(&self, table: &ImportanceTable) -> String {
        let mut out = String::from("sample_id,label,importance,selected_by\n");
        for (row, by) in table.rows.iter().zip(&self.selected_by) {
            let _ = writeln!(out, "{},{},{},{}", row.id, row.label, row.importance, by.as_str());
        }
        out
    }
}

/// `max(1, floor(ratio · n))`, ignoring floating-point residue below 1e-9.
pub fn quota_for(ratio: f64, n: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(IdcError::ConfigInvalid(format!("ratio {ratio} outside (0, 1]")));
    }
    Ok((((ratio * n as f64) + 1e-9).floor() as usize).clamp(1, n.max(1)))
}

/// Splits `total` across classes in proportion to `sizes` by largest
/// remainder; ties go to the lower class index.
pub fn largest_remainder(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let mut shares: Vec<usize> = sizes.iter().map(|&s| total * s / n).collect();
    let remainders: Vec<usize> = sizes.iter().map(|&s| (total * s) % n).collect();
    let mut left = total - shares.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    for c in order {
        if left == 0 {
            break;
        }
        if remainders[c] > 0 {
            shares[c] += 1;
            left -= 1;
        }
    }
    shares
}

/// Row indices ranked by importance, highest first, ties by row index.
fn ranked(table: &ImportanceTable, rows: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = rows.collect();
    idx.sort_by(|&a, &b| {
        table.rows[b]
            .importance
            .total_cmp(&table.rows[a].importance)
            .then(a.cmp(&b))
    });
    idx
}

/// Builds a plan of `quota_for(ratio, N)` samples. `class_split` is the
/// evenly-distributed fraction used by `M` (0.9 by default).
pub fn apply_strategy(
    table: &ImportanceTable,
    strategy: Strategy,
    ratio: f64,
    num_classes: usize,
    class_split: f64,
) -> Result<SelectionPlan> {
    if table.is_empty() {
        return Err(IdcError::EmptyInput);
    }
    if !(0.0..=1.0).contains(&class_split) {
        return Err(IdcError::ConfigInvalid(format!("class split {class_split} outside [0, 1]")));
    }
    if let Some(r) = table.rows.iter().find(|r| r.label >= num_classes) {
        return Err(IdcError::LabelOutOfRange {
            label: r.label as i64,
            num_classes,
        });
    }
    let n = table.len();
    let quota = quota_for(ratio, n)?;
    let mut by = vec![SelectedBy::None; n];
    let mut order = Vec::with_capacity(quota);

    let class_rows: Vec<Vec<usize>> = (0..num_classes)
        .map(|c| ranked(table, (0..n).filter(|&i| table.rows[i].label == c)))
        .collect();
    let take_from_classes = |shares: &[usize], by: &mut Vec<SelectedBy>, order: &mut Vec<usize>| {
        for (rows, &share) in class_rows.iter().zip(shares) {
            for &i in rows.iter().take(share) {
                by[i] = SelectedBy::Class;
                order.push(i);
            }
        }
    };

    match strategy {
        Strategy::S => {}
        Strategy::P => {
            let sizes: Vec<usize> = class_rows.iter().map(Vec::len).collect();
            take_from_classes(&largest_remainder(quota, &sizes), &mut by, &mut order);
        }
        Strategy::M => {
            let even = (((class_split * quota as f64) + 1e-9).floor() as usize).min(quota);
            let shares: Vec<usize> = (0..num_classes)
                .map(|c| even / num_classes + usize::from(c < even % num_classes))
                .collect();
            // Classes smaller than their share give up the shortfall to the
            // global part below.
            take_from_classes(&shares, &mut by, &mut order);
        }
    }
    if order.len() < quota {
        let remaining = ranked(table, (0..n).filter(|&i| by[i] == SelectedBy::None));
        for i in remaining.into_iter().take(quota - order.len()) {
            by[i] = SelectedBy::Global;
            order.push(i);
        }
    }

    let mut per_class_counts = vec![0; num_classes];
    for &i in &order {
        per_class_counts[table.rows[i].label] += 1;
    }
    Ok(SelectionPlan {
        method: None,
        strategy,
        ratio,
        quota,
        selected: order.iter().map(|&i| table.rows[i].id.clone()).collect(),
        per_class_counts,
        selected_by: by,
    })
}

/// Full importance + strategy pipeline.
pub fn select(
    method: Method,
    strategy: Strategy,
    ratio: f64,
    dataset: &Dataset,
    model: Option<&IdcModel>,
    seed: u64,
    class_split: f64,
) -> Result<(ImportanceTable, SelectionPlan)> {
    let table = importance(method, dataset, model, seed)?;
    let mut plan = apply_strategy(&table, strategy, ratio, dataset.num_classes(), class_split)?;
    plan.method = Some(method);
    Ok((table, plan))
}

/// Target accuracy of a model retrained on a selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RetrainOutcome {
    /// Accuracy of the retrained FC head.
    pub fc_accuracy: f64,
    /// Accuracy of the retrained memory classifier; `None` when some class
    /// had no selected sources and its bank stayed empty.
    pub idc_accuracy: Option<f64>,
}

/// Trains a fresh model on the selected sources plus all targets and
/// evaluates it on the target ground truth.
pub fn retrain_on_selection(
    plan: &SelectionPlan,
    dataset: &Dataset,
    config: &TrainConfig,
    truth: &TargetLabels,
) -> Result<RetrainOutcome> {
    if plan.selected.is_empty() {
        return Err(IdcError::EmptyInput);
    }
    let subset = dataset.with_source_subset(&plan.selected_set());
    let trained = trainer::train_unchecked_classes(config, &subset)?;
    let labels = truth.aligned(&subset)?;
    let fc_accuracy = infer::evaluate_fc(&trained.model, &subset, &labels)?.accuracy();
    let idc_accuracy = match infer::evaluate_idc(&trained.model, &subset, &labels) {
        Ok(o) => Some(o.accuracy()),
        Err(IdcError::EmptyBank(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(RetrainOutcome {
        fc_accuracy,
        idc_accuracy,
    })
}

/// One cell of a selection sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub method: Method,
    pub strategy: Strategy,
    pub ratio: f64,
    pub accuracies: Vec<f64>,
}

impl SweepCell {
    pub fn mean(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len().max(1) as f64
    }

    /// Sample standard deviation (0 for a single run).
    pub fn std(&self) -> f64 {
        let n = self.accuracies.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.accuracies.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

/// `method,strategy,ratio,mean,std,runs`
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("method,strategy,ratio,mean,std,runs\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.method,
            c.strategy,
            c.ratio,
            c.mean(),
            c.std(),
            c.accuracies.len()
        );
    }
    out
}
