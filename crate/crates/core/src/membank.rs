//! Per-class key-value memory banks.
//!
//! Each bank holds up to `capacity` slots. A slot stores the feature of one
//! source sample (the key), a learnable representative score (the value), and
//! an age counting touch events since the slot was last selected by a read.
//!
//! Reading a bank scores a query by the mean of `value × similarity` over the
//! `k` slots whose keys are most similar to it. Reads never mutate the bank;
//! ages change only through [`MemoryBank::touch`] and
//! [`MemoryBankSet::refresh_with_target`]. Writing fills an empty slot or
//! overwrites the slot with the largest age.

use serde::Serialize;

use crate::error::{IdcError, Result};
use crate::math::{self, l2_norm, similarity_with_norms};

#[derive(Debug, Clone, PartialEq)]
pub struct MemorySlot {
    key: Vec<f64>,
    key_norm: f64,
    value: f64,
    age: u64,
    provenance: String,
    written_at: u64,
}

impl MemorySlot {
    /// Rebuilds a slot from persisted fields.
    pub fn restore(key: Vec<f64>, value: f64, age: u64, provenance: String, written_at: u64) -> Result<Self> {
        if key.iter().any(|v| !v.is_finite()) || !value.is_finite() {
            return Err(IdcError::NonFinite("memory slot"));
        }
        let key_norm = l2_norm(&key);
        if key_norm == 0.0 {
            return Err(IdcError::ZeroNormKey);
        }
        Ok(MemorySlot {
            key,
            key_norm,
            value,
            age,
            provenance,
            written_at,
        })
    }

    pub fn key(&self) -> &[f64] {
        &self.key
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn age(&self) -> u64 {
        self.age
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Bank-local write sequence number; larger means more recent.
    pub fn written_at(&self) -> u64 {
        self.written_at
    }
}

/// One retrieved slot and its share of a class score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceItem {
    pub class_id: usize,
    pub slot_index: usize,
    pub provenance: String,
    pub similarity: f64,
    pub value: f64,
    pub contribution: f64,
}

/// Result of reading one bank with one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadResult {
    pub class_id: usize,
    /// Mean of `value × similarity` over the selected slots.
    pub score: f64,
    /// Selected slots, most similar first.
    pub evidence: Vec<EvidenceItem>,
}

impl ReadResult {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.evidence.iter().map(|e| e.slot_index).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Inserted(usize),
    Evicted(usize),
}

impl WriteOutcome {
    pub fn slot_index(self) -> usize {
        match self {
            WriteOutcome::Inserted(i) | WriteOutcome::Evicted(i) => i,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    class_id: usize,
    capacity: usize,
    dim: usize,
    slots: Vec<MemorySlot>,
    write_clock: u64,
}

impl MemoryBank {
    pub fn new(class_id: usize, capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(IdcError::ConfigInvalid(
                "bank capacity and key dimension must be positive".into(),
            ));
        }
        Ok(MemoryBank {
            class_id,
            capacity,
            dim,
            slots: Vec::with_capacity(capacity),
            write_clock: 0,
        })
    }

    /// Rebuilds a bank from persisted slots.
    pub fn restore(class_id: usize, capacity: usize, dim: usize, slots: Vec<MemorySlot>, write_clock: u64) -> Result<Self> {
        let mut bank = Self::new(class_id, capacity, dim)?;
        if slots.len() > capacity {
            return Err(IdcError::CorruptFile(format!(
                "bank {class_id} holds {} slots but capacity is {capacity}",
                slots.len()
            )));
        }
        if let Some(s) = slots.iter().find(|s| s.key.len() != dim) {
            return Err(IdcError::DimensionMismatch {
                expected: dim,
                actual: s.key.len(),
            });
        }
        bank.slots = slots;
        bank.write_clock = write_clock;
        Ok(bank)
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[MemorySlot] {
        &self.slots
    }

    pub fn write_clock(&self) -> u64 {
        self.write_clock
    }

    pub fn values(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.value).collect()
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.slots.len() {
            return Err(IdcError::DimensionMismatch {
                expected: self.slots.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IdcError::NonFinite("memory values"));
        }
        for (s, &v) in self.slots.iter_mut().zip(values) {
            s.value = v;
        }
        Ok(())
    }

    /// Slot holding the most recent write of `provenance`, if any survives.
    pub fn find_by_provenance(&self, provenance: &str) -> Option<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.provenance == provenance)
            .max_by_key(|(_, s)| s.written_at)
            .map(|(i, _)| i)
    }

    fn check_query(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.dim {
            return Err(IdcError::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let norm = l2_norm(query);
        if norm == 0.0 {
            return Err(IdcError::ZeroNormVector);
        }
        Ok(norm)
    }

    /// Similarity of the query to every slot, in slot order.
    pub fn similarities(&self, query: &[f64]) -> Result<Vec<f64>> {
        let qn = self.check_query(query)?;
        Ok(self
            .slots
            .iter()
            .map(|s| similarity_with_norms(query, qn, &s.key, s.key_norm))
            .collect())
    }

    /// Slots selected by a read with `n_k` neighbours, most similar first.
    pub fn select(&self, query: &[f64], n_k: usize) -> Result<Vec<usize>> {
        if self.slots.is_empty() {
            return Err(IdcError::EmptyBank(self.class_id));
        }
        math::top_k_indices(&self.similarities(query)?, n_k)
    }

    /// Scores the query against this bank. Does not touch ages.
    pub fn read(&self, query: &[f64], n_k: usize) -> Result<ReadResult> {
        if self.slots.is_empty() {
            return Err(IdcError::EmptyBank(self.class_id));
        }
        let sims = self.similarities(query)?;
        let selected = math::top_k_indices(&sims, n_k)?;
        let evidence: Vec<EvidenceItem> = selected
            .iter()
            .map(|&i| {
                let slot = &self.slots[i];
                EvidenceItem {
                    class_id: self.class_id,
                    slot_index: i,
                    provenance: slot.provenance.clone(),
                    similarity: sims[i],
                    value: slot.value,
                    contribution: slot.value * sims[i],
                }
            })
            .collect();
        let score = evidence.iter().map(|e| e.contribution).sum::<f64>() / evidence.len() as f64;
        Ok(ReadResult {
            class_id: self.class_id,
            score,
            evidence,
        })
    }

    /// Resets the ages of `selected` to zero and ages every other slot by one.
    pub fn touch(&mut self, selected: &[usize]) -> Result<()> {
        let len = self.slots.len();
        let mut hit = vec![false; len];
        for &i in selected {
            if i >= len {
                return Err(IdcError::IndexOutOfRange { index: i, len });
            }
            hit[i] = true;
        }
        for (slot, was_hit) in self.slots.iter_mut().zip(hit) {
            if was_hit {
                slot.age = 0;
            } else {
                slot.age += 1;
            }
        }
        Ok(())
    }

    /// Stores a key-value pair, evicting the oldest slot when full
    /// (lowest index among equally old slots).
    pub fn write(&mut self, key: &[f64], value: f64, provenance: impl Into<String>) -> Result<WriteOutcome> {
        if key.len() != self.dim {
            return Err(IdcError::DimensionMismatch {
                expected: self.dim,
                actual: key.len(),
            });
        }
        if key.iter().any(|v| !v.is_finite()) || !value.is_finite() {
            return Err(IdcError::NonFinite("memory write"));
        }
        let key_norm = l2_norm(key);
        if key_norm == 0.0 {
            return Err(IdcError::ZeroNormKey);
        }
        self.write_clock += 1;
        let slot = MemorySlot {
            key: key.to_vec(),
            key_norm,
            value,
            age: 0,
            provenance: provenance.into(),
            written_at: self.write_clock,
        };
        if self.slots.len() < self.capacity {
            self.slots.push(slot);
            return Ok(WriteOutcome::Inserted(self.slots.len() - 1));
        }
        let victim = self
            .slots
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.age.cmp(&b.age).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .expect("full bank is non-empty");
        self.slots[victim] = slot;
        Ok(WriteOutcome::Evicted(victim))
    }
}

/// One bank per class plus the read width `n_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBankSet {
    banks: Vec<MemoryBank>,
    read_k: usize,
}

impl MemoryBankSet {
    pub fn new(num_classes: usize, capacity: usize, dim: usize, read_k: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(IdcError::ConfigInvalid("need at least one class".into()));
        }
        if read_k == 0 {
            return Err(IdcError::ConfigInvalid("read width must be at least 1".into()));
        }
        let banks = (0..num_classes)
            .map(|c| MemoryBank::new(c, capacity, dim))
            .collect::<Result<_>>()?;
        Ok(MemoryBankSet { banks, read_k })
    }

    pub fn from_banks(banks: Vec<MemoryBank>, read_k: usize) -> Result<Self> {
        if banks.is_empty() || read_k == 0 {
            return Err(IdcError::ConfigInvalid("empty bank set or zero read width".into()));
        }
        for (c, b) in banks.iter().enumerate() {
            if b.class_id != c {
                return Err(IdcError::CorruptFile(format!("bank at position {c} has class {}", b.class_id)));
            }
        }
        Ok(MemoryBankSet { banks, read_k })
    }

    pub fn num_classes(&self) -> usize {
        self.banks.len()
    }

    pub fn read_k(&self) -> usize {
        self.read_k
    }

    pub fn banks(&self) -> &[MemoryBank] {
        &self.banks
    }

    pub fn bank(&self, class_id: usize) -> Result<&MemoryBank> {
        self.banks.get(class_id).ok_or(IdcError::LabelOutOfRange {
            label: class_id as i64,
            num_classes: self.banks.len(),
        })
    }

    pub fn bank_mut(&mut self, class_id: usize) -> Result<&mut MemoryBank> {
        let n = self.banks.len();
        self.banks.get_mut(class_id).ok_or(IdcError::LabelOutOfRange {
            label: class_id as i64,
            num_classes: n,
        })
    }

    pub fn read(&self, class_id: usize, query: &[f64]) -> Result<ReadResult> {
        self.bank(class_id)?.read(query, self.read_k)
    }

    pub fn write(&mut self, class_id: usize, key: &[f64], value: f64, provenance: impl Into<String>) -> Result<WriteOutcome> {
        self.bank_mut(class_id)?.write(key, value, provenance)
    }

    /// Reads every non-empty bank with a target query and touches the
    /// selected slots. Keys, values and bank sizes are unchanged.
    pub fn refresh_with_target(&mut self, query: &[f64]) -> Result<()> {
        let k = self.read_k;
        for bank in &mut self.banks {
            if bank.is_empty() {
                continue;
            }
            let selected = bank.select(query, k)?;
            bank.touch(&selected)?;
        }
        Ok(())
    }

    pub fn total_slots(&self) -> usize {
        self.banks.iter().map(MemoryBank::len).sum()
    }
}

/// Highest-probability class other than `true_label` (lowest index on ties).
pub fn most_confusing_negative(probs: &[f64], true_label: usize) -> Result<usize> {
    if probs.len() < 2 {
        return Err(IdcError::SingleClass);
    }
    if true_label >= probs.len() {
        return Err(IdcError::LabelOutOfRange {
            label: true_label as i64,
            num_classes: probs.len(),
        });
    }
    let mut best: Option<usize> = None;
    for (c, &p) in probs.iter().enumerate() {
        if c == true_label {
            continue;
        }
        if best.is_none_or(|b| p > probs[b]) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one negative class"))
}

/// Loss and value gradients for one source sample.
#[derive(Debug, Clone, PartialEq)]
pub struct IdcLoss {
    pub loss: f64,
    /// `(slot_index, dLoss/dValue)` for the positive bank.
    pub positive_grads: Vec<(usize, f64)>,
    /// `(slot_index, dLoss/dValue)` for the negative bank.
    pub negative_grads: Vec<(usize, f64)>,
}

/// `(P_pos - 1)² + P_neg²` with gradients flowing only into the selected
/// values; keys and the query are constants.
pub fn idc_loss_and_value_grads(positive: &ReadResult, negative: &ReadResult) -> IdcLoss {
    let loss = math::mse(positive.score, 1.0) + math::mse(negative.score, 0.0);
    let grads = |read: &ReadResult, target: f64| -> Vec<(usize, f64)> {
        let k = read.evidence.len() as f64;
        let outer = 2.0 * (read.score - target);
        read.evidence
            .iter()
            .map(|e| (e.slot_index, outer * e.similarity / k))
            .collect()
    };
    IdcLoss {
        loss,
        positive_grads: grads(positive, 1.0),
        negative_grads: grads(negative, 0.0),
    }
}
