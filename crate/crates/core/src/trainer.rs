//! Joint adversarial training of the encoder, FC head, discriminator and
//! memory banks.
//!
//! One step, on a batch of `B/2` labeled source and `B/2` unlabeled target
//! samples:
//!
//! 1. Encode both halves; FC probabilities for the source half.
//! 2. For each source sample, read its own class bank and the bank of its
//!    most confusing negative class. For each target sample, read (refresh)
//!    every bank.
//! 3. Losses: mean cross-entropy `L_fc`, mean domain log-loss `L_adv`, and
//!    mean memory loss `L_idc`.
//! 4. Encoder and head minimize `L_fc + L_idc - L_adv`; the `-L_adv` part
//!    arrives through gradient reversal and `L_idc` never reaches the
//!    encoder because queries and keys are constants for the memory. The
//!    discriminator minimizes `L_adv`. Networks step with SGD-momentum and
//!    memory values with Adam.
//! 5. Apply the read touches, then write `(feature, p_true)` for each source
//!    sample into its class bank.
//!
//! All reads and losses see the banks as they were before this step's writes.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SourceSample, TargetSample};
use crate::error::{IdcError, Result};
use crate::math::{self, l2_norm};
use crate::membank::{idc_loss_and_value_grads, most_confusing_negative, MemoryBankSet, WriteOutcome};
use crate::model::IdcModel;
use crate::nn::{self, DiscriminatorNet, EncoderNet, FcHead, MlpGrads, OptimizerState};
use crate::seeding::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Encoder output (memory key) dimension.
    pub feature_dim: usize,
    pub encoder_hidden: usize,
    pub discriminator_hidden: usize,
    /// Slots per memory bank.
    pub memory_capacity: usize,
    /// Slots selected by each read.
    pub read_k: usize,
    /// Total batch size; half source, half target.
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub discriminator_learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub memory_learning_rate: f64,
    /// Steepness of the reversal-coefficient ramp.
    pub grl_gamma: f64,
    /// Reversal coefficient reached at the end of training.
    pub grl_max: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            feature_dim: 32,
            encoder_hidden: 64,
            discriminator_hidden: 32,
            memory_capacity: 256,
            read_k: 4,
            batch_size: 32,
            iterations: 2000,
            learning_rate: 1e-3,
            discriminator_learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            memory_learning_rate: 1e-5,
            grl_gamma: 10.0,
            grl_max: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Memory sizes and batch composition used on full-size image benchmarks.
    pub fn large_scale() -> Self {
        TrainConfig {
            memory_capacity: 8192,
            read_k: 64,
            batch_size: 72,
            iterations: 5000,
            learning_rate: 3e-4,
            discriminator_learning_rate: 3e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IdcError::ConfigInvalid(m));
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return bad(format!("batch_size must be even and at least 2, got {}", self.batch_size));
        }
        for (name, lr) in [
            ("learning_rate", self.learning_rate),
            ("discriminator_learning_rate", self.discriminator_learning_rate),
            ("memory_learning_rate", self.memory_learning_rate),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.feature_dim == 0 || self.encoder_hidden == 0 || self.discriminator_hidden == 0 {
            return bad("network widths must be positive".into());
        }
        if self.memory_capacity == 0 || self.read_k == 0 {
            return bad("memory_capacity and read_k must be positive".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)".into());
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative".into());
        }
        if !(self.grl_gamma.is_finite() && self.grl_gamma >= 0.0 && self.grl_max.is_finite() && self.grl_max >= 0.0) {
            return bad("GRL schedule parameters must be non-negative".into());
        }
        Ok(())
    }

    pub fn source_batch(&self) -> usize {
        self.batch_size / 2
    }
}

/// Losses and source accuracy of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub l_fc: f64,
    pub l_adv: f64,
    pub l_idc: f64,
    pub src_acc: f64,
}

impl LossRecord {
    fn is_finite(&self) -> bool {
        self.l_fc.is_finite() && self.l_adv.is_finite() && self.l_idc.is_finite()
    }
}

pub fn losses_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("iteration,L_fc,L_adv,L_idc,src_acc\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{},{}", r.iteration, r.l_fc, r.l_adv, r.l_idc, r.src_acc);
    }
    out
}

/// Scales applied to each loss when forming gradients. Training uses all
/// ones; zeroing a weight isolates which parameters a loss reaches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub fc: f64,
    pub adv: f64,
    pub idc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            fc: 1.0,
            adv: 1.0,
            idc: 1.0,
        }
    }
}

/// A pending memory write produced by a step.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingWrite {
    pub class_id: usize,
    pub key: Vec<f64>,
    pub value: f64,
    pub provenance: String,
}

/// Losses, gradients and deferred memory effects of one batch, computed
/// without changing the model.
#[derive(Debug, Clone)]
pub struct BatchPass {
    pub l_fc: f64,
    pub l_adv: f64,
    pub l_idc: f64,
    pub src_acc: f64,
    pub encoder_grads: MlpGrads,
    pub fc_grads: MlpGrads,
    pub discriminator_grads: MlpGrads,
    /// Dense value gradients per bank, indexed by slot.
    pub value_grads: Vec<Vec<f64>>,
    /// `(bank, selected slots)` for each source read, in order.
    pub source_touches: Vec<(usize, Vec<usize>)>,
    /// Encoded target features, used for the age refresh.
    pub target_features: Vec<Vec<f64>>,
    pub writes: Vec<PendingWrite>,
    /// Source samples whose memory loss was skipped because a bank was empty.
    pub skipped_idc: usize,
}

/// Forward and backward pass over one batch.
///
/// `lambda` is the gradient-reversal coefficient applied to the adversarial
/// gradient on its way into the encoder.
pub fn compute_batch(
    model: &IdcModel,
    source: &[&SourceSample],
    target: &[&TargetSample],
    lambda: f64,
    weights: LossWeights,
) -> Result<BatchPass> {
    if source.is_empty() || target.is_empty() {
        return Err(IdcError::EmptyInput);
    }
    let num_classes = model.num_classes();
    let enc = &model.encoder.0;
    let fc = &model.fc.0;
    let disc = &model.discriminator.0;
    let memory = &model.memory;

    let mut encoder_grads = MlpGrads::zeros_like(enc);
    let mut fc_grads = MlpGrads::zeros_like(fc);
    let mut discriminator_grads = MlpGrads::zeros_like(disc);
    let mut value_grads: Vec<Vec<f64>> = memory.banks().iter().map(|b| vec![0.0; b.len()]).collect();

    let ns = source.len() as f64;
    let nt = target.len() as f64;
    let mut l_fc = 0.0;
    let mut l_adv = 0.0;
    let mut l_idc = 0.0;
    let mut correct = 0usize;
    let mut skipped_idc = 0;
    let mut source_touches = Vec::with_capacity(2 * source.len());
    let mut writes = Vec::with_capacity(source.len());

    for s in source {
        if s.label >= num_classes {
            return Err(IdcError::LabelOutOfRange {
                label: s.label as i64,
                num_classes,
            });
        }
        let (feature, enc_cache) = enc.forward(&s.feature)?;
        if l2_norm(&feature) == 0.0 {
            return Err(IdcError::ZeroNormVector);
        }

        // Classification.
        let (logits, fc_cache) = fc.forward(&feature)?;
        let probs = math::softmax(&logits);
        l_fc += math::cross_entropy(&probs, s.label)? / ns;
        if math::argmax(&probs) == Some(s.label) {
            correct += 1;
        }
        let mut dlogits = probs.clone();
        dlogits[s.label] -= 1.0;
        for d in &mut dlogits {
            *d *= weights.fc / ns;
        }
        let (g_fc, mut d_feature) = fc.backward(&fc_cache, &dlogits)?;
        fc_grads.add_scaled(&g_fc, 1.0);

        // Adversarial: source features should look like source (label 0).
        let (dlogit, dcache) = disc.forward(&feature)?;
        let (loss, dl) = nn::domain_log_loss(dlogit[0], false);
        l_adv += loss / ns;
        let (g_disc, d_feat_adv) = disc.backward(&dcache, &[weights.adv * dl / ns])?;
        discriminator_grads.add_scaled(&g_disc, 1.0);
        for (a, b) in d_feature.iter_mut().zip(nn::grl_backward(&d_feat_adv, lambda)) {
            *a += b;
        }
        let (g_enc, _) = enc.backward(&enc_cache, &d_feature)?;
        encoder_grads.add_scaled(&g_enc, 1.0);

        // Memory.
        let negative = most_confusing_negative(&probs, s.label)?;
        let pos_bank = memory.bank(s.label)?;
        let neg_bank = memory.bank(negative)?;
        if pos_bank.is_empty() || neg_bank.is_empty() {
            skipped_idc += 1;
        } else {
            let pos = pos_bank.read(&feature, memory.read_k())?;
            let neg = neg_bank.read(&feature, memory.read_k())?;
            let idc = idc_loss_and_value_grads(&pos, &neg);
            l_idc += idc.loss / ns;
            for (i, g) in idc.positive_grads {
                value_grads[s.label][i] += weights.idc * g / ns;
            }
            for (i, g) in idc.negative_grads {
                value_grads[negative][i] += weights.idc * g / ns;
            }
            source_touches.push((s.label, pos.selected_indices()));
            source_touches.push((negative, neg.selected_indices()));
        }

        writes.push(PendingWrite {
            class_id: s.label,
            key: feature,
            value: probs[s.label],
            provenance: s.id.clone(),
        });
    }

    let mut target_features = Vec::with_capacity(target.len());
    for t in target {
        let (feature, enc_cache) = enc.forward(&t.feature)?;
        if l2_norm(&feature) == 0.0 {
            return Err(IdcError::ZeroNormVector);
        }
        let (dlogit, dcache) = disc.forward(&feature)?;
        let (loss, dl) = nn::domain_log_loss(dlogit[0], true);
        l_adv += loss / nt;
        let (g_disc, d_feat_adv) = disc.backward(&dcache, &[weights.adv * dl / nt])?;
        discriminator_grads.add_scaled(&g_disc, 1.0);
        let (g_enc, _) = enc.backward(&enc_cache, &nn::grl_backward(&d_feat_adv, lambda))?;
        encoder_grads.add_scaled(&g_enc, 1.0);
        target_features.push(feature);
    }

    Ok(BatchPass {
        l_fc,
        l_adv,
        l_idc,
        src_acc: correct as f64 / ns,
        encoder_grads,
        fc_grads,
        discriminator_grads,
        value_grads,
        source_touches,
        target_features,
        writes,
        skipped_idc,
    })
}

/// A model under training together with its optimizers and sampler.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: IdcModel,
    encoder_opt: OptimizerState,
    fc_opt: OptimizerState,
    discriminator_opt: OptimizerState,
    value_opts: Vec<OptimizerState>,
    sampler: ChaCha8Rng,
    iteration: usize,
    total_writes: u64,
    history: Vec<LossRecord>,
}

impl Trainer {
    /// Fresh networks and empty banks for `num_classes` classes over
    /// `input_dim`-dimensional inputs.
    pub fn new(config: TrainConfig, num_classes: usize, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if num_classes < 2 {
            return Err(IdcError::SingleClass);
        }
        if input_dim == 0 {
            return Err(IdcError::ConfigInvalid("input_dim must be positive".into()));
        }
        let mut init = stream_rng(config.seed, Stream::Init);
        let encoder = EncoderNet::random(input_dim, config.encoder_hidden, config.feature_dim, &mut init)?;
        let fc = FcHead::random(config.feature_dim, num_classes, &mut init)?;
        let discriminator = DiscriminatorNet::random(config.feature_dim, config.discriminator_hidden, &mut init)?;
        let memory = MemoryBankSet::new(num_classes, config.memory_capacity, config.feature_dim, config.read_k)?;
        let model = IdcModel {
            config: config.clone(),
            input_dim,
            encoder,
            fc,
            discriminator,
            memory,
        };
        Ok(Self::from_model(model))
    }

    /// Continues training an existing model with fresh optimizer state.
    pub fn from_model(model: IdcModel) -> Self {
        let c = &model.config;
        let sgd = |lr| OptimizerState::sgd(lr, c.momentum, c.weight_decay);
        Trainer {
            encoder_opt: sgd(c.learning_rate),
            fc_opt: sgd(c.learning_rate),
            discriminator_opt: sgd(c.discriminator_learning_rate),
            value_opts: (0..model.num_classes())
                .map(|_| OptimizerState::adam(c.memory_learning_rate))
                .collect(),
            sampler: stream_rng(c.seed, Stream::Sampling),
            iteration: 0,
            total_writes: 0,
            history: Vec::new(),
            model,
        }
    }

    pub fn model(&self) -> &IdcModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut IdcModel {
        &mut self.model
    }

    pub fn into_model(self) -> IdcModel {
        self.model
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn total_writes(&self) -> u64 {
        self.total_writes
    }

    pub fn history(&self) -> &[LossRecord] {
        &self.history
    }

    /// Reversal coefficient for the current iteration.
    pub fn current_lambda(&self) -> f64 {
        let c = &self.model.config;
        let progress = self.iteration as f64 / c.iterations as f64;
        nn::grl_lambda(progress, c.grl_gamma, c.grl_max)
    }

    /// One optimization step on the given batch.
    pub fn train_step(&mut self, source: &[&SourceSample], target: &[&TargetSample]) -> Result<LossRecord> {
        let lambda = self.current_lambda();
        let pass = compute_batch(&self.model, source, target, lambda, LossWeights::default())?;
        let record = LossRecord {
            iteration: self.iteration,
            l_fc: pass.l_fc,
            l_adv: pass.l_adv,
            l_idc: pass.l_idc,
            src_acc: pass.src_acc,
        };
        if !record.is_finite() {
            return Err(IdcError::NonFinite("training loss"));
        }
        self.apply(pass)?;
        self.iteration += 1;
        self.history.push(record);
        Ok(record)
    }

    fn apply(&mut self, pass: BatchPass) -> Result<()> {
        let model = &mut self.model;
        self.encoder_opt
            .step(model.encoder.0.params_mut(), pass.encoder_grads.tensors())?;
        self.fc_opt.step(model.fc.0.params_mut(), pass.fc_grads.tensors())?;
        self.discriminator_opt
            .step(model.discriminator.0.params_mut(), pass.discriminator_grads.tensors())?;

        for (class_id, grads) in pass.value_grads.iter().enumerate() {
            if grads.is_empty() {
                continue;
            }
            let bank = model.memory.bank_mut(class_id)?;
            let opt = &mut self.value_opts[class_id];
            opt.grow_tensor(0, grads.len());
            let mut values = bank.values();
            opt.step(vec![values.as_mut_slice()], vec![grads.as_slice()])?;
            bank.set_values(&values)?;
        }

        for (class_id, selected) in &pass.source_touches {
            model.memory.bank_mut(*class_id)?.touch(selected)?;
        }
        for f in &pass.target_features {
            model.memory.refresh_with_target(f)?;
        }
        for w in pass.writes {
            let outcome = model.memory.write(w.class_id, &w.key, w.value, w.provenance)?;
            if let WriteOutcome::Evicted(i) = outcome {
                self.value_opts[w.class_id].reset_entry(0, i);
            }
            self.total_writes += 1;
        }
        Ok(())
    }

    /// Draws `B/2` source and `B/2` target samples uniformly with replacement.
    pub fn sample_batch<'a>(&mut self, dataset: &'a Dataset) -> (Vec<&'a SourceSample>, Vec<&'a TargetSample>) {
        let half = self.model.config.source_batch();
        let source = (0..half)
            .map(|_| &dataset.source[self.sampler.random_range(0..dataset.source.len())])
            .collect();
        let target = (0..half)
            .map(|_| &dataset.target[self.sampler.random_range(0..dataset.target.len())])
            .collect();
        (source, target)
    }

    /// Runs the remaining iterations of the configured schedule.
    pub fn run(&mut self, dataset: &Dataset) -> Result<()> {
        while self.iteration < self.model.config.iterations {
            let (s, t) = self.sample_batch(dataset);
            self.train_step(&s, &t)?;
        }
        Ok(())
    }
}

/// Output of [`train`].
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: IdcModel,
    pub history: Vec<LossRecord>,
}

impl TrainedModel {
    pub fn write_losses(&self, path: impl AsRef<Path>, header_comment: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let mut body = String::new();
        if let Some(c) = header_comment {
            let _ = writeln!(body, "# {c}");
        }
        body.push_str(&losses_csv(&self.history));
        std::fs::write(path, body).map_err(|e| IdcError::io(path, e))
    }
}

fn check_dataset(dataset: &Dataset, require_every_class: bool) -> Result<()> {
    if dataset.target.is_empty() {
        return Err(IdcError::EmptyTargetSet);
    }
    if dataset.source.is_empty() {
        return Err(IdcError::ConfigInvalid("no source samples".into()));
    }
    if require_every_class {
        let present: HashSet<usize> = dataset.source.iter().map(|s| s.label).collect();
        if let Some(c) = (0..dataset.num_classes()).find(|c| !present.contains(c)) {
            return Err(IdcError::ConfigInvalid(format!("class {c} has no source samples")));
        }
    }
    Ok(())
}

/// Trains from scratch. Every class needs at least one source sample.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<TrainedModel> {
    check_dataset(dataset, true)?;
    train_unchecked_classes(config, dataset)
}

/// Like [`train`] but tolerates classes with no source samples; their banks
/// stay empty. Used when retraining on a selected subset.
pub(crate) fn train_unchecked_classes(config: &TrainConfig, dataset: &Dataset) -> Result<TrainedModel> {
    check_dataset(dataset, false)?;
    let mut trainer = Trainer::new(config.clone(), dataset.num_classes(), dataset.dim())?;
    trainer.run(dataset)?;
    let history = trainer.history.clone();
    Ok(TrainedModel {
        model: trainer.into_model(),
        history,
    })
}
