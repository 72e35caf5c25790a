//! Oracles and criterion runners shared by the integration tests and the
//! acceptance binary.

#![allow(dead_code)]

use std::time::{Duration, Instant};

use idc::data::{Dataset, SourceSample, TargetSample};
use idc::membank::{MemoryBank, MemoryBankSet, WriteOutcome};
use idc::nn::{self, Mlp, MlpGrads};
use idc::trainer::{compute_batch, BatchPass, LossWeights, TrainConfig, Trainer};
use idc::{FeatureVector, IdcModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Verdict {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
            elapsed: Duration::ZERO,
        }
    }
}

pub fn timed(f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let mut v = f();
    v.elapsed = start.elapsed();
    v
}

// ---------------------------------------------------------------------------
// Brute-force memory read

pub fn oracle_similarity(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    let cos = ab / (aa.sqrt() * bb.sqrt());
    ((cos + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// Full sort of every slot, descending similarity then ascending index.
pub fn oracle_select(keys: &[Vec<f64>], query: &[f64], k: usize) -> (Vec<usize>, Vec<f64>) {
    let sims: Vec<f64> = keys.iter().map(|key| oracle_similarity(key, query)).collect();
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap().then(a.cmp(&b)));
    order.truncate(k.min(keys.len()));
    (order, sims)
}

pub fn oracle_read(keys: &[Vec<f64>], values: &[f64], query: &[f64], k: usize) -> (Vec<usize>, f64) {
    let (order, sims) = oracle_select(keys, query, k);
    let total: f64 = order.iter().map(|&i| values[i] * sims[i]).sum();
    let score = total / order.len() as f64;
    (order, score)
}

/// A bank filled without eviction, with some exact duplicate keys.
pub fn random_bank(rng: &mut ChaCha8Rng, slots: usize, dim: usize) -> MemoryBank {
    let mut bank = MemoryBank::new(0, slots, dim).unwrap();
    let mut keys: Vec<Vec<f64>> = Vec::with_capacity(slots);
    for i in 0..slots {
        let key = if i > 0 && rng.random_bool(0.15) {
            keys[rng.random_range(0..i)].clone()
        } else {
            gaussian(rng, dim)
        };
        let value = rng.random_range(-1.0..1.0);
        bank.write(&key, value, format!("s{i}")).unwrap();
        keys.push(key);
    }
    bank
}

pub fn read_oracle_equivalence(instances: usize, seed: u64) -> Verdict {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for n in 0..instances {
        let dim = rng.random_range(2..=12);
        let slots = rng.random_range(1..=200);
        let k = rng.random_range(1..=16);
        let bank = random_bank(&mut rng, slots, dim);
        let keys: Vec<Vec<f64>> = bank.slots().iter().map(|s| s.key().to_vec()).collect();
        let values = bank.values();
        let query = if rng.random_bool(0.2) {
            keys[rng.random_range(0..slots)].iter().map(|x| x * 2.5).collect()
        } else {
            gaussian(&mut rng, dim)
        };
        let before = bank.clone();
        let read = bank.read(&query, k).unwrap();
        if bank != before {
            return Verdict::new(false, format!("instance {n}: read mutated the bank"));
        }
        let (order, score) = oracle_read(&keys, &values, &query, k);
        if read.selected_indices() != order {
            return Verdict::new(
                false,
                format!("instance {n}: selected {:?}, oracle {:?}", read.selected_indices(), order),
            );
        }
        for e in &read.evidence {
            if (e.contribution - e.value * e.similarity).abs() > 1e-12 {
                return Verdict::new(false, format!("instance {n}: contribution != value * similarity"));
            }
        }
        worst = worst.max((read.score - score).abs());
        if worst > 1e-9 {
            return Verdict::new(false, format!("instance {n}: score error {worst:e}"));
        }
    }
    Verdict::new(true, format!("{instances} instances, indices exact, max score error {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Memory lifecycle replay

#[derive(Debug, Clone)]
pub struct ReplaySlot {
    pub key: Vec<f64>,
    pub value: f64,
    pub age: u64,
    pub provenance: String,
}

/// Straight-line model of one bank's key/value/age bookkeeping.
#[derive(Debug, Clone)]
pub struct ReplayBank {
    pub capacity: usize,
    pub slots: Vec<ReplaySlot>,
}

impl ReplayBank {
    pub fn new(capacity: usize) -> Self {
        ReplayBank {
            capacity,
            slots: Vec::new(),
        }
    }

    pub fn touch(&mut self, selected: &[usize]) {
        for (i, s) in self.slots.iter_mut().enumerate() {
            if selected.contains(&i) {
                s.age = 0;
            } else {
                s.age += 1;
            }
        }
    }

    pub fn write(&mut self, key: Vec<f64>, value: f64, provenance: String) -> Option<usize> {
        let slot = ReplaySlot {
            key,
            value,
            age: 0,
            provenance,
        };
        if self.slots.len() < self.capacity {
            self.slots.push(slot);
            return None;
        }
        let mut victim = 0;
        for i in 1..self.slots.len() {
            if self.slots[i].age > self.slots[victim].age {
                victim = i;
            }
        }
        self.slots[victim] = slot;
        Some(victim)
    }

    pub fn refresh(&mut self, query: &[f64], k: usize) {
        if self.slots.is_empty() {
            return;
        }
        let keys: Vec<Vec<f64>> = self.slots.iter().map(|s| s.key.clone()).collect();
        let (order, _) = oracle_select(&keys, query, k);
        self.touch(&order);
    }

    pub fn max_age(&self) -> u64 {
        self.slots.iter().map(|s| s.age).max().unwrap_or(0)
    }
}

fn banks_match(real: &MemoryBank, replay: &ReplayBank) -> bool {
    real.len() == replay.slots.len()
        && real.slots().iter().zip(&replay.slots).all(|(a, b)| {
            a.key() == b.key.as_slice() && a.value() == b.value && a.age() == b.age && a.provenance() == b.provenance
        })
}

pub fn memory_lifecycle(events: usize, capacity: usize, seed: u64) -> Verdict {
    const CLASSES: usize = 3;
    const DIM: usize = 4;
    let mut rng = rng(seed);
    let read_k = rng.random_range(1..=5);
    let mut real = MemoryBankSet::new(CLASSES, capacity, DIM, read_k).unwrap();
    let mut replay: Vec<ReplayBank> = (0..CLASSES).map(|_| ReplayBank::new(capacity)).collect();
    let mut pool: Vec<Vec<f64>> = Vec::new();
    let (mut writes, mut evictions, mut touches, mut refreshes) = (0, 0, 0, 0);

    for e in 0..events {
        let roll: f64 = rng.random();
        if roll < 0.45 {
            let c = rng.random_range(0..CLASSES);
            let key = if !pool.is_empty() && rng.random_bool(0.1) {
                pool[rng.random_range(0..pool.len())].clone()
            } else {
                gaussian(&mut rng, DIM)
            };
            pool.push(key.clone());
            let value = rng.random_range(-1.0..1.0);
            let id = format!("w{e}");
            let ages: Vec<u64> = real.bank(c).unwrap().slots().iter().map(|s| s.age()).collect();
            let oldest = replay[c].max_age();
            let expected = replay[c].write(key.clone(), value, id.clone());
            let got = real.write(c, &key, value, id).unwrap();
            writes += 1;
            match (got, expected) {
                (WriteOutcome::Inserted(_), None) => {}
                (WriteOutcome::Evicted(i), Some(j)) if i == j => {
                    evictions += 1;
                    if ages[i] != oldest {
                        return Verdict::new(false, format!("event {e}: victim age {} below maximum {oldest}", ages[i]));
                    }
                }
                (g, x) => return Verdict::new(false, format!("event {e}: write outcome {g:?}, replay {x:?}")),
            }
        } else if roll < 0.7 {
            let c = rng.random_range(0..CLASSES);
            let len = replay[c].slots.len();
            if len == 0 {
                continue;
            }
            let mut picked: Vec<usize> = (0..len).filter(|_| rng.random_bool(0.2)).collect();
            if picked.is_empty() {
                picked.push(rng.random_range(0..len));
            }
            replay[c].touch(&picked);
            real.bank_mut(c).unwrap().touch(&picked).unwrap();
            touches += 1;
        } else {
            let q = gaussian(&mut rng, DIM);
            for b in &mut replay {
                b.refresh(&q, read_k);
            }
            real.refresh_with_target(&q).unwrap();
            refreshes += 1;
        }
        for c in 0..CLASSES {
            if real.bank(c).unwrap().len() > capacity {
                return Verdict::new(false, format!("event {e}: bank {c} exceeds capacity"));
            }
        }
    }
    for c in 0..CLASSES {
        if !banks_match(real.bank(c).unwrap(), &replay[c]) {
            return Verdict::new(false, format!("bank {c} differs from replay"));
        }
    }
    Verdict::new(
        true,
        format!(
            "{events} events ({writes} writes, {evictions} evictions, {touches} touches, {refreshes} refreshes), final state exact"
        ),
    )
}

/// Checks every eviction victim against the ages recorded just before the
/// write; separate from the replay so a shared bug in both cannot hide it.
pub fn eviction_victims_oldest(events: usize, capacity: usize, seed: u64) -> Verdict {
    let mut rng = rng(seed);
    let mut bank = MemoryBank::new(0, capacity, 3).unwrap();
    let mut checked = 0;
    for e in 0..events {
        if rng.random_bool(0.5) || bank.is_empty() {
            let ages: Vec<u64> = bank.slots().iter().map(|s| s.age()).collect();
            let key = gaussian(&mut rng, 3);
            match bank.write(&key, 0.0, format!("w{e}")).unwrap() {
                WriteOutcome::Evicted(i) => {
                    let max = *ages.iter().max().unwrap();
                    let first = ages.iter().position(|&a| a == max).unwrap();
                    if i != first {
                        return Verdict::new(false, format!("event {e}: evicted {i}, oldest first at {first}"));
                    }
                    checked += 1;
                }
                WriteOutcome::Inserted(_) => {
                    if ages.len() >= capacity {
                        return Verdict::new(false, format!("event {e}: inserted into a full bank"));
                    }
                }
            }
        } else {
            let picked: Vec<usize> = (0..bank.len()).filter(|_| rng.random_bool(0.3)).collect();
            bank.touch(&picked).unwrap();
        }
    }
    Verdict::new(true, format!("{checked} evictions, each took the oldest slot"))
}

// ---------------------------------------------------------------------------
// Gradients

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps round-off on
/// near-zero gradients from reading as a large relative error.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Net {
    Encoder,
    Fc,
    Discriminator,
}

pub fn net_mut(model: &mut IdcModel, which: Net) -> &mut Mlp {
    match which {
        Net::Encoder => &mut model.encoder.0,
        Net::Fc => &mut model.fc.0,
        Net::Discriminator => &mut model.discriminator.0,
    }
}

pub struct GradFixture {
    pub model: IdcModel,
    pub source: Vec<SourceSample>,
    pub target: Vec<TargetSample>,
    pub lambda: f64,
}

impl GradFixture {
    /// Random small model and batch; redraws until no feature has zero norm.
    pub fn new(seed: u64) -> Self {
        (0..)
            .map(|attempt: u64| Self::draw(seed ^ 0x9e37_79b9 ^ (attempt << 40)))
            .find(|fx| {
                let s: Vec<&SourceSample> = fx.source.iter().collect();
                let t: Vec<&TargetSample> = fx.target.iter().collect();
                compute_batch(&fx.model, &s, &t, fx.lambda, LossWeights::default()).is_ok()
            })
            .unwrap()
    }

    fn draw(seed: u64) -> Self {
        let mut rng = rng(seed);
        let classes = rng.random_range(2..=4);
        let input = rng.random_range(3..=6);
        let config = TrainConfig {
            feature_dim: rng.random_range(3..=6),
            encoder_hidden: rng.random_range(6..=10),
            discriminator_hidden: rng.random_range(3..=6),
            memory_capacity: 12,
            read_k: rng.random_range(1..=4),
            batch_size: 8,
            seed,
            ..TrainConfig::default()
        };
        let dim = config.feature_dim;
        let mut model = Trainer::new(config, classes, input).unwrap().into_model();
        for c in 0..classes {
            for i in 0..rng.random_range(2..=12) {
                let key = gaussian(&mut rng, dim);
                let v = rng.random_range(-1.0..1.0);
                model.memory.write(c, &key, v, format!("m{c}-{i}")).unwrap();
            }
        }
        let source = (0..4)
            .map(|i| SourceSample {
                id: format!("s{i}"),
                label: rng.random_range(0..classes),
                feature: FeatureVector::new(gaussian(&mut rng, input)).unwrap(),
            })
            .collect();
        let target = (0..4)
            .map(|i| TargetSample {
                id: format!("t{i}"),
                feature: FeatureVector::new(gaussian(&mut rng, input).iter().map(|x| x * 1.5 + 0.3).collect()).unwrap(),
            })
            .collect();
        let lambda = rng.random_range(0.1..1.0);
        GradFixture {
            model,
            source,
            target,
            lambda,
        }
    }

    pub fn pass(&self, model: &IdcModel, weights: LossWeights) -> BatchPass {
        let s: Vec<&SourceSample> = self.source.iter().collect();
        let t: Vec<&TargetSample> = self.target.iter().collect();
        compute_batch(model, &s, &t, self.lambda, weights).unwrap()
    }

    /// Central differences of `objective` for `per_tensor` random entries of
    /// every parameter tensor of `which`; returns the largest relative error.
    pub fn check_net(
        &self,
        which: Net,
        analytic: &MlpGrads,
        objective: impl Fn(&BatchPass) -> f64,
        per_tensor: usize,
        rng: &mut ChaCha8Rng,
    ) -> (f64, usize) {
        let mut worst = 0.0f64;
        let mut checked = 0;
        let tensors = analytic.tensors();
        for (t, grads) in tensors.iter().enumerate() {
            for _ in 0..per_tensor.min(grads.len()) {
                let j = rng.random_range(0..grads.len());
                let eval = |delta: f64| {
                    let mut m = self.model.clone();
                    net_mut(&mut m, which).params_mut()[t][j] += delta;
                    objective(&self.pass(&m, LossWeights::default()))
                };
                let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
                worst = worst.max(rel_error(grads[j], numeric));
                checked += 1;
            }
        }
        (worst, checked)
    }

    /// Central differences of `L_idc` for every memory value.
    pub fn check_values(&self, analytic: &[Vec<f64>]) -> (f64, usize) {
        let mut worst = 0.0f64;
        let mut checked = 0;
        for (c, grads) in analytic.iter().enumerate() {
            for i in 0..grads.len() {
                let eval = |delta: f64| {
                    let mut m = self.model.clone();
                    let bank = m.memory.bank_mut(c).unwrap();
                    let mut v = bank.values();
                    v[i] += delta;
                    bank.set_values(&v).unwrap();
                    self.pass(&m, LossWeights::default()).l_idc
                };
                let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
                worst = worst.max(rel_error(grads[i], numeric));
                checked += 1;
            }
        }
        (worst, checked)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradientReport {
    pub encoder: f64,
    pub fc: f64,
    pub discriminator: f64,
    pub values: f64,
    pub entries: usize,
}

impl GradientReport {
    pub fn worst(&self) -> f64 {
        self.encoder.max(self.fc).max(self.discriminator).max(self.values)
    }
}

/// Finite-difference check of all four gradient families on `instances`
/// random models and batches.
pub fn gradient_fd(instances: usize, seed: u64) -> GradientReport {
    let mut report = GradientReport::default();
    let mut pick = rng(seed);
    for n in 0..instances {
        let fx = GradFixture::new(seed.wrapping_mul(1000).wrapping_add(n as u64));
        let pass = fx.pass(&fx.model, LossWeights::default());
        let lambda = fx.lambda;
        // The encoder sees L_fc directly and L_adv through the reversal.
        let (e, k1) = fx.check_net(Net::Encoder, &pass.encoder_grads, |p| p.l_fc - lambda * p.l_adv, 6, &mut pick);
        let (f, k2) = fx.check_net(Net::Fc, &pass.fc_grads, |p| p.l_fc, 6, &mut pick);
        let (d, k3) = fx.check_net(Net::Discriminator, &pass.discriminator_grads, |p| p.l_adv, 6, &mut pick);
        let (v, k4) = fx.check_values(&pass.value_grads);
        report.encoder = report.encoder.max(e);
        report.fc = report.fc.max(f);
        report.discriminator = report.discriminator.max(d);
        report.values = report.values.max(v);
        report.entries += k1 + k2 + k3 + k4;
    }
    report
}

/// Bitwise check of the reversal layer plus a comparison of the encoder
/// gradient under reversal against plain backprop through the
/// discriminator.
pub fn grl_exactness(instances: usize, seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    for _ in 0..instances {
        let u = gaussian(&mut r, 7);
        let lambda: f64 = r.random_range(0.0..2.0);
        let g = nn::grl_backward(&u, lambda);
        if g.iter().zip(&u).any(|(a, b)| a.to_bits() != (-lambda * b).to_bits()) {
            return Err("grl_backward differs from -lambda * upstream".into());
        }
    }
    let mut worst = 0.0f64;
    for n in 0..instances {
        let fx = GradFixture::new(seed + 77 + n as u64);
        let adv_only = LossWeights {
            fc: 0.0,
            adv: 1.0,
            idc: 0.0,
        };
        let pass = fx.pass(&fx.model, adv_only);
        let enc = &fx.model.encoder.0;
        let disc = &fx.model.discriminator.0;
        let mut plain = MlpGrads::zeros_like(enc);
        let halves: [(Vec<&[f64]>, bool); 2] = [
            (fx.source.iter().map(|s| s.feature.as_slice()).collect(), false),
            (fx.target.iter().map(|t| t.feature.as_slice()).collect(), true),
        ];
        for (xs, is_target) in halves {
            let n = xs.len() as f64;
            for x in xs {
                let (f, cache) = enc.forward(x).unwrap();
                let (logit, dcache) = disc.forward(&f).unwrap();
                let (_, dl) = nn::domain_log_loss(logit[0], is_target);
                let (_, dfeat) = disc.backward(&dcache, &[dl / n]).unwrap();
                let (g, _) = enc.backward(&cache, &dfeat).unwrap();
                plain.add_scaled(&g, 1.0);
            }
        }
        let scale = plain.max_abs().max(1e-300);
        for (a, b) in pass.encoder_grads.tensors().into_iter().flatten().zip(plain.tensors().into_iter().flatten()) {
            worst = worst.max((a - (-fx.lambda * b)).abs() / scale);
        }
    }
    if worst > 1e-12 {
        return Err(format!("reversed encoder gradient off by {worst:e} (relative)"));
    }
    Ok(worst)
}

/// Zeroing `L_idc` zeroes every value gradient; zeroing `L_fc` and `L_adv`
/// zeroes every encoder gradient even while `L_idc` is active.
pub fn loss_zeroing(instances: usize, seed: u64) -> Result<(), String> {
    for n in 0..instances {
        let fx = GradFixture::new(seed + 500 + n as u64);
        let no_idc = fx.pass(
            &fx.model,
            LossWeights {
                fc: 1.0,
                adv: 1.0,
                idc: 0.0,
            },
        );
        if no_idc.value_grads.iter().flatten().any(|g| *g != 0.0) {
            return Err(format!("instance {n}: value gradient without L_idc"));
        }
        let idc_only = fx.pass(
            &fx.model,
            LossWeights {
                fc: 0.0,
                adv: 0.0,
                idc: 1.0,
            },
        );
        if idc_only.encoder_grads.max_abs() != 0.0 || idc_only.fc_grads.max_abs() != 0.0 {
            return Err(format!("instance {n}: network gradient from L_idc alone"));
        }
        if idc_only.l_idc > 0.0 && idc_only.value_grads.iter().flatten().all(|g| *g == 0.0) {
            return Err(format!("instance {n}: L_idc active but no value gradient"));
        }
        if idc_only.discriminator_grads.max_abs() != 0.0 {
            return Err(format!("instance {n}: discriminator gradient without L_adv"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Misc helpers

pub fn two_class_dataset(seed: u64, per_class: usize, dim: usize, separation: f64) -> Dataset {
    let mut r = rng(seed);
    let mut source = Vec::new();
    let mut target = Vec::new();
    for c in 0..2 {
        let sign = if c == 0 { -1.0 } else { 1.0 };
        for i in 0..per_class {
            let mut x = gaussian(&mut r, dim);
            x[0] += sign * separation;
            source.push(SourceSample {
                id: format!("s{c}-{i}"),
                label: c,
                feature: FeatureVector::new(x).unwrap(),
            });
            let mut y = gaussian(&mut r, dim);
            y[0] += sign * separation;
            target.push(TargetSample {
                id: format!("t{c}-{i}"),
                feature: FeatureVector::new(y).unwrap(),
            });
        }
    }
    Dataset::new(2, dim, source, target).unwrap()
}
