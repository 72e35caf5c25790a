//! Memory-based prediction, evidence reports, and classification with
//! rejection.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{IdcError, Result};
use crate::math;
use crate::membank::{EvidenceItem, MemoryBankSet};
use crate::model::IdcModel;

/// Per-class memory scores for one input. Scores are not probabilities and
/// may be negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub predicted: usize,
    pub confidence: f64,
    /// Evidence per class, most similar slot first.
    pub evidence: Vec<Vec<EvidenceItem>>,
}

/// Reads every bank with an already-encoded feature. Pure: no ages change.
pub fn predict_feature(memory: &MemoryBankSet, feature: &[f64]) -> Result<Prediction> {
    let mut scores = Vec::with_capacity(memory.num_classes());
    let mut evidence = Vec::with_capacity(memory.num_classes());
    for c in 0..memory.num_classes() {
        let read = memory.read(c, feature)?;
        scores.push(read.score);
        evidence.push(read.evidence);
    }
    let predicted = math::argmax(&scores).ok_or(IdcError::EmptyInput)?;
    Ok(Prediction {
        confidence: scores[predicted],
        predicted,
        scores,
        evidence,
    })
}

pub fn predict(model: &IdcModel, x: &[f64]) -> Result<Prediction> {
    predict_feature(&model.memory, &model.encode(x)?)
}

/// Evidence for the predicted class ranked by contribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub predicted: usize,
    pub confidence: f64,
    pub scores: Vec<f64>,
    /// Highest contributions first.
    pub most_contributing: Vec<EvidenceItem>,
    /// Lowest contributions first.
    pub least_contributing: Vec<EvidenceItem>,
}

pub fn explain_prediction(prediction: &Prediction, top_n: usize) -> Explanation {
    let mut ranked = prediction.evidence[prediction.predicted].clone();
    // Stable sort keeps the similarity order among equal contributions.
    ranked.sort_by(|a, b| b.contribution.total_cmp(&a.contribution));
    let most = ranked.iter().take(top_n).cloned().collect();
    let least = ranked.iter().rev().take(top_n).cloned().collect();
    Explanation {
        predicted: prediction.predicted,
        confidence: prediction.confidence,
        scores: prediction.scores.clone(),
        most_contributing: most,
        least_contributing: least,
    }
}

pub fn explain(model: &IdcModel, x: &[f64], top_n: usize) -> Result<Explanation> {
    Ok(explain_prediction(&predict(model, x)?, top_n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RejectionPoint {
    pub rate: f64,
    /// Accuracy on the retained samples; 1.0 when nothing is retained.
    pub accuracy: f64,
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionCurve {
    pub points: Vec<RejectionPoint>,
}

impl RejectionCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rate,accuracy,retained\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.rate, p.accuracy, p.retained));
        }
        out
    }

    pub fn at(&self, rate: f64) -> Option<&RejectionPoint> {
        self.points.iter().find(|p| (p.rate - rate).abs() < 1e-12)
    }
}

/// `ceil((1 - rate) * n)`, ignoring floating-point residue below 1e-9.
pub fn retained_count(rate: f64, n: usize) -> usize {
    let keep = (1.0 - rate) * n as f64;
    ((keep - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Samples ranked by confidence, highest first, ties by ascending index.
pub fn confidence_ranking(confidences: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]).then(a.cmp(&b)));
    order
}

/// Accuracy after rejecting the least confident fraction `rate` of samples,
/// for each rate. Rates are sorted and deduplicated.
pub fn rejection_curve(confidences: &[f64], correct: &[bool], rates: &[f64]) -> Result<RejectionCurve> {
    if confidences.is_empty() {
        return Err(IdcError::EmptyInput);
    }
    if confidences.len() != correct.len() {
        return Err(IdcError::DimensionMismatch {
            expected: confidences.len(),
            actual: correct.len(),
        });
    }
    if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(IdcError::ConfigInvalid(format!("rejection rate {r} outside [0, 1]")));
    }
    let mut rates = rates.to_vec();
    rates.sort_by(f64::total_cmp);
    rates.dedup();

    let order = confidence_ranking(confidences);
    // prefix_correct[k] = correct among the k most confident
    let mut prefix_correct = vec![0usize; order.len() + 1];
    for (k, &i) in order.iter().enumerate() {
        prefix_correct[k + 1] = prefix_correct[k] + usize::from(correct[i]);
    }
    let n = order.len();
    let points = rates
        .into_iter()
        .map(|rate| {
            let retained = retained_count(rate, n);
            let accuracy = if retained == 0 {
                1.0
            } else {
                prefix_correct[retained] as f64 / retained as f64
            };
            RejectionPoint { rate, accuracy, retained }
        })
        .collect();
    Ok(RejectionCurve { points })
}

/// Per-sample outcome of evaluating a classifier on labeled targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    pub predicted: Vec<usize>,
    pub confidence: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Outcomes {
    pub fn correct(&self) -> Vec<bool> {
        self.predicted.iter().zip(&self.labels).map(|(p, l)| p == l).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let c = self.correct();
        c.iter().filter(|&&b| b).count() as f64 / c.len().max(1) as f64
    }

    /// Recall of each class; `None` for classes absent from the labels.
    pub fn per_class_accuracy(&self, num_classes: usize) -> Vec<Option<f64>> {
        let mut hit = vec![0usize; num_classes];
        let mut total = vec![0usize; num_classes];
        for (&p, &l) in self.predicted.iter().zip(&self.labels) {
            total[l] += 1;
            if p == l {
                hit[l] += 1;
            }
        }
        hit.iter()
            .zip(&total)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect()
    }

    /// Mean of per-class recalls over classes present in the labels.
    pub fn mean_class_accuracy(&self, num_classes: usize) -> f64 {
        let present: Vec<f64> = self.per_class_accuracy(num_classes).into_iter().flatten().collect();
        present.iter().sum::<f64>() / present.len().max(1) as f64
    }

    pub fn rejection_curve(&self, rates: &[f64]) -> Result<RejectionCurve> {
        rejection_curve(&self.confidence, &self.correct(), rates)
    }
}

/// Memory-based predictions for every target sample.
pub fn evaluate_idc(model: &IdcModel, dataset: &Dataset, labels: &[usize]) -> Result<Outcomes> {
    check_labels(dataset, labels)?;
    let mut predicted = Vec::with_capacity(labels.len());
    let mut confidence = Vec::with_capacity(labels.len());
    for t in &dataset.target {
        let p = predict(model, &t.feature)?;
        predicted.push(p.predicted);
        confidence.push(p.confidence);
    }
    Ok(Outcomes {
        predicted,
        confidence,
        labels: labels.to_vec(),
    })
}

/// FC-head predictions (raw softmax confidence) for every target sample.
pub fn evaluate_fc(model: &IdcModel, dataset: &Dataset, labels: &[usize]) -> Result<Outcomes> {
    check_labels(dataset, labels)?;
    let mut predicted = Vec::with_capacity(labels.len());
    let mut confidence = Vec::with_capacity(labels.len());
    for t in &dataset.target {
        let (c, p) = model.fc_predict(&t.feature)?;
        predicted.push(c);
        confidence.push(p);
    }
    Ok(Outcomes {
        predicted,
        confidence,
        labels: labels.to_vec(),
    })
}

fn check_labels(dataset: &Dataset, labels: &[usize]) -> Result<()> {
    if dataset.target.is_empty() {
        return Err(IdcError::EmptyTargetSet);
    }
    if labels.len() != dataset.target.len() {
        return Err(IdcError::DimensionMismatch {
            expected: dataset.target.len(),
            actual: labels.len(),
        });
    }
    Ok(())
}
