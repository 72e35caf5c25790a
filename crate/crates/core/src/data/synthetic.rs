use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, SourceSample, TargetLabels, TargetSample};
use crate::error::{IdcError, Result};
use crate::math::FeatureVector;
use crate::seeding::{stream_rng, Stream};

/// Gaussian classes with a rigid transform applied to the target domain.
///
/// Class means sit on a circle of `radius` in the first two input
/// dimensions, plus a fixed per-class offset of scale `offset_std` in the
/// remaining ones. Targets are drawn from the same class distributions, then
/// rotated by `rotation` radians in the first plane, scaled, and translated.
/// A fraction `overlap` of samples in both domains is drawn from a point
/// between its class mean and an adjacent class mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticShiftSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    pub radius: f64,
    pub class_std: f64,
    pub offset_std: f64,
    pub rotation: f64,
    pub translation: Vec<f64>,
    pub scale: f64,
    pub overlap: f64,
    pub seed: u64,
}

impl Default for SyntheticShiftSpec {
    /// The default overlap-heavy benchmark.
    fn default() -> Self {
        SyntheticShiftSpec {
            num_classes: 8,
            input_dim: 16,
            samples_per_class: 200,
            radius: 3.0,
            class_std: 0.6,
            offset_std: 1.0,
            rotation: 30f64.to_radians(),
            translation: Vec::new(),
            scale: 1.2,
            overlap: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticShiftSpec {
    /// Source and target drawn from the same distribution.
    pub fn no_shift() -> Self {
        SyntheticShiftSpec {
            rotation: 0.0,
            scale: 1.0,
            translation: Vec::new(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(IdcError::InvalidSpec(m.to_string()));
        if self.num_classes < 2 {
            return bad("need at least two classes");
        }
        if self.input_dim < 2 {
            return bad("input_dim must be at least 2");
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be at least 1");
        }
        if !(0.0..TAU).contains(&self.rotation) {
            return bad("rotation must lie in [0, 2π)");
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return bad("radius must be positive");
        }
        if !(self.class_std.is_finite() && self.class_std > 0.0) {
            return bad("class_std must be positive");
        }
        if !(self.offset_std.is_finite() && self.offset_std >= 0.0) {
            return bad("offset_std must be non-negative");
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad("scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return bad("overlap must lie in [0, 1]");
        }
        if !self.translation.is_empty() && self.translation.len() != self.input_dim {
            return bad("translation must be empty or have input_dim entries");
        }
        if self.translation.iter().any(|t| !t.is_finite()) {
            return bad("translation must be finite");
        }
        Ok(())
    }

    /// Per-class means drawn from the generator seed.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let mut rng = stream_rng(self.seed, Stream::Data);
        self.class_means_from(&mut rng)
    }

    fn class_means_from<R: Rng>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let offset = Normal::new(0.0, self.offset_std.max(f64::MIN_POSITIVE)).expect("valid std");
        (0..self.num_classes)
            .map(|c| {
                let angle = TAU * c as f64 / self.num_classes as f64;
                let mut mean = vec![0.0; self.input_dim];
                mean[0] = self.radius * angle.cos();
                mean[1] = self.radius * angle.sin();
                for m in mean.iter_mut().skip(2) {
                    *m = if self.offset_std > 0.0 { offset.sample(rng) } else { 0.0 };
                }
                mean
            })
            .collect()
    }

    fn transform(&self, x: &mut [f64]) {
        let (sin, cos) = self.rotation.sin_cos();
        let (a, b) = (x[0], x[1]);
        x[0] = cos * a - sin * b;
        x[1] = sin * a + cos * b;
        for v in x.iter_mut() {
            *v *= self.scale;
        }
        for (v, t) in x.iter_mut().zip(&self.translation) {
            *v += t;
        }
    }
}

/// A generated dataset plus the hidden target ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub target_labels: TargetLabels,
}

pub fn generate(spec: &SyntheticShiftSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Data);
    let means = spec.class_means_from(&mut rng);
    let noise = Normal::new(0.0, spec.class_std).expect("validated std");

    let draw = |rng: &mut rand_chacha::ChaCha8Rng, c: usize| -> Vec<f64> {
        let mut center = means[c].clone();
        if spec.overlap > 0.0 && rng.random::<f64>() < spec.overlap {
            let step = if rng.random::<bool>() { 1 } else { spec.num_classes - 1 };
            let neighbour = &means[(c + step) % spec.num_classes];
            let t: f64 = rng.random_range(0.3..0.6);
            for (m, n) in center.iter_mut().zip(neighbour) {
                *m += t * (n - *m);
            }
        }
        center.iter().map(|m| m + noise.sample(rng)).collect()
    };

    let mut source_rows = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    let mut target_rows = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for c in 0..spec.num_classes {
        for _ in 0..spec.samples_per_class {
            source_rows.push((c, draw(&mut rng, c)));
        }
        for _ in 0..spec.samples_per_class {
            let mut x = draw(&mut rng, c);
            spec.transform(&mut x);
            target_rows.push((c, x));
        }
    }
    source_rows.shuffle(&mut rng);
    target_rows.shuffle(&mut rng);

    let source = source_rows
        .into_iter()
        .enumerate()
        .map(|(i, (label, x))| {
            Ok(SourceSample {
                id: format!("src-{i:05}"),
                label,
                feature: FeatureVector::new(x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut truth = Vec::with_capacity(target_rows.len());
    let target = target_rows
        .into_iter()
        .enumerate()
        .map(|(i, (label, x))| {
            let id = format!("tgt-{i:05}");
            truth.push((id.clone(), label));
            Ok(TargetSample {
                id,
                feature: FeatureVector::new(x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SyntheticData {
        dataset: Dataset::new(spec.num_classes, spec.input_dim, source, target)?,
        target_labels: TargetLabels::from_pairs(truth)?,
    })
}
