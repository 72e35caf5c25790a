//! Labeled source samples, unlabeled target samples, and their file formats.
//!
//! Target ground truth never lives inside a [`Dataset`]: it is carried by a
//! separate [`TargetLabels`] value so that nothing handed to the trainer can
//! see it.

mod embeddings;
mod synthetic;

use std::collections::{HashMap, HashSet};

pub use embeddings::{load_embeddings, load_target_labels, save_embeddings, save_target_labels};
pub use synthetic::{generate, SyntheticData, SyntheticShiftSpec};

use serde::{Deserialize, Serialize};

use crate::error::{IdcError, Result};
use crate::math::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

/// File-level row: target rows carry the label sentinel `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub domain: Domain,
    pub label: i64,
    pub feature: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSample {
    pub id: String,
    pub label: usize,
    pub feature: FeatureVector,
}

/// A target sample as the trainer sees it: no label field at all.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSample {
    pub id: String,
    pub feature: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_classes: usize,
    dim: usize,
    pub source: Vec<SourceSample>,
    pub target: Vec<TargetSample>,
    /// Original interleaving of the two domains, for order-preserving saves.
    order: Vec<(Domain, usize)>,
}

impl Dataset {
    pub fn new(num_classes: usize, dim: usize, source: Vec<SourceSample>, target: Vec<TargetSample>) -> Result<Self> {
        let order = (0..source.len())
            .map(|i| (Domain::Source, i))
            .chain((0..target.len()).map(|i| (Domain::Target, i)))
            .collect();
        let ds = Dataset {
            num_classes,
            dim,
            source,
            target,
            order,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn from_records(num_classes: usize, dim: usize, records: Vec<SampleRecord>) -> Result<Self> {
        let mut source = Vec::new();
        let mut target = Vec::new();
        let mut order = Vec::with_capacity(records.len());
        for r in records {
            match r.domain {
                Domain::Source => {
                    if r.label < 0 || r.label as usize >= num_classes {
                        return Err(IdcError::LabelOutOfRange {
                            label: r.label,
                            num_classes,
                        });
                    }
                    order.push((Domain::Source, source.len()));
                    source.push(SourceSample {
                        id: r.id,
                        label: r.label as usize,
                        feature: r.feature,
                    });
                }
                Domain::Target => {
                    order.push((Domain::Target, target.len()));
                    target.push(TargetSample {
                        id: r.id,
                        feature: r.feature,
                    });
                }
            }
        }
        let ds = Dataset {
            num_classes,
            dim,
            source,
            target,
            order,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn to_records(&self) -> Vec<SampleRecord> {
        self.order
            .iter()
            .map(|&(domain, i)| match domain {
                Domain::Source => {
                    let s = &self.source[i];
                    SampleRecord {
                        id: s.id.clone(),
                        domain,
                        label: s.label as i64,
                        feature: s.feature.clone(),
                    }
                }
                Domain::Target => {
                    let t = &self.target[i];
                    SampleRecord {
                        id: t.id.clone(),
                        domain,
                        label: -1,
                        feature: t.feature.clone(),
                    }
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 {
            return Err(IdcError::ConfigInvalid("dataset needs C ≥ 1 and D ≥ 1".into()));
        }
        let mut seen = HashSet::new();
        for (id, feature) in self
            .source
            .iter()
            .map(|s| (&s.id, &s.feature))
            .chain(self.target.iter().map(|t| (&t.id, &t.feature)))
        {
            if !seen.insert(id.as_str()) {
                return Err(IdcError::DuplicateId(id.clone()));
            }
            if feature.len() != self.dim {
                return Err(IdcError::DimensionMismatch {
                    expected: self.dim,
                    actual: feature.len(),
                });
            }
        }
        if let Some(s) = self.source.iter().find(|s| s.label >= self.num_classes) {
            return Err(IdcError::LabelOutOfRange {
                label: s.label as i64,
                num_classes: self.num_classes,
            });
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source_labels(&self) -> Vec<usize> {
        self.source.iter().map(|s| s.label).collect()
    }

    /// Number of source samples in each class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.source {
            counts[s.label] += 1;
        }
        counts
    }

    /// Same targets, sources restricted to `ids` (kept in original order).
    pub fn with_source_subset(&self, ids: &HashSet<String>) -> Dataset {
        let source: Vec<SourceSample> = self.source.iter().filter(|s| ids.contains(&s.id)).cloned().collect();
        let target = self.target.clone();
        let order = (0..source.len())
            .map(|i| (Domain::Source, i))
            .chain((0..target.len()).map(|i| (Domain::Target, i)))
            .collect();
        Dataset {
            num_classes: self.num_classes,
            dim: self.dim,
            source,
            target,
            order,
        }
    }

    pub fn target_index(&self, id: &str) -> Option<usize> {
        self.target.iter().position(|t| t.id == id)
    }
}

/// Ground-truth labels of target samples, kept apart from [`Dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TargetLabels {
    by_id: HashMap<String, usize>,
    order: Vec<String>,
}

impl TargetLabels {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, usize)>) -> Result<Self> {
        let mut labels = TargetLabels::default();
        for (id, label) in pairs {
            if labels.by_id.insert(id.clone(), label).is_some() {
                return Err(IdcError::DuplicateId(id));
            }
            labels.order.push(id);
        }
        Ok(labels)
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.order.iter().map(|id| (id.as_str(), self.by_id[id]))
    }

    /// Labels aligned with `dataset.target`.
    pub fn aligned(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        dataset
            .target
            .iter()
            .map(|t| {
                let label = self.get(&t.id).ok_or_else(|| IdcError::UnknownId(t.id.clone()))?;
                if label >= dataset.num_classes() {
                    return Err(IdcError::LabelOutOfRange {
                        label: label as i64,
                        num_classes: dataset.num_classes(),
                    });
                }
                Ok(label)
            })
            .collect()
    }
}
