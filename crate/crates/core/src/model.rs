use crate::error::{IdcError, Result};
use crate::math::{self, l2_norm};
use crate::membank::MemoryBankSet;
use crate::nn::{DiscriminatorNet, EncoderNet, FcHead};
use crate::trainer::TrainConfig;

/// Everything a trained run produces: networks, memory, and the config
/// they were trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct IdcModel {
    pub config: TrainConfig,
    pub input_dim: usize,
    pub encoder: EncoderNet,
    pub fc: FcHead,
    pub discriminator: DiscriminatorNet,
    pub memory: MemoryBankSet,
}

impl IdcModel {
    pub fn num_classes(&self) -> usize {
        self.memory.num_classes()
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.0.output_dim()
    }

    /// Adapted feature of a raw input; rejects zero-norm outputs since they
    /// cannot be compared by cosine similarity.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.encoder.0.eval(x)?;
        if l2_norm(&f) == 0.0 {
            return Err(IdcError::ZeroNormVector);
        }
        Ok(f)
    }

    pub fn fc_probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.encoder.0.eval(x)?;
        self.fc.probabilities(&f)
    }

    /// FC-head prediction `(class, softmax confidence)`.
    pub fn fc_predict(&self, x: &[f64]) -> Result<(usize, f64)> {
        let p = self.fc_probabilities(x)?;
        let c = math::argmax(&p).ok_or(IdcError::EmptyInput)?;
        Ok((c, p[c]))
    }

    /// Probability that the discriminator assigns to the target domain.
    pub fn domain_probability(&self, x: &[f64]) -> Result<f64> {
        let f = self.encoder.0.eval(x)?;
        self.discriminator.probability(&f)
    }
}
