use serde::{Deserialize, Serialize};

use crate::error::{IdcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

/// Optimizer hyperparameters plus one moment buffer per parameter tensor.
///
/// Buffers are allocated on the first step; later steps must present the
/// same tensor shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    steps: u64,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Self::with_kind(OptimizerKind::SgdMomentum { momentum }, learning_rate, weight_decay)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::with_kind(
            OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            learning_rate,
            0.0,
        )
    }

    pub fn with_kind(kind: OptimizerKind, learning_rate: f64, weight_decay: f64) -> Self {
        OptimizerState {
            kind,
            learning_rate,
            weight_decay,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Zeroes the moments of one entry of one tensor, e.g. when a memory
    /// slot is overwritten by a new sample.
    pub fn reset_entry(&mut self, tensor: usize, index: usize) {
        for buf in [&mut self.first_moment, &mut self.second_moment] {
            if let Some(v) = buf.get_mut(tensor).and_then(|t| t.get_mut(index)) {
                *v = 0.0;
            }
        }
    }

    /// Grows tensor `tensor` to `len` entries with zero moments. Used for
    /// parameter vectors that fill up during training (memory values).
    pub fn grow_tensor(&mut self, tensor: usize, len: usize) {
        for buf in [&mut self.first_moment, &mut self.second_moment] {
            if let Some(t) = buf.get_mut(tensor) {
                if t.len() < len {
                    t.resize(len, 0.0);
                }
            }
        }
    }

    fn ensure_buffers(&mut self, params: &[&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(IdcError::ShapeMismatch(format!(
                "{} parameter tensors vs {} gradient tensors",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(IdcError::ShapeMismatch(format!(
                    "tensor {i}: {} parameters vs {} gradients",
                    p.len(),
                    g.len()
                )));
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
            return Ok(());
        }
        if self.first_moment.len() != params.len()
            || self.first_moment.iter().zip(params).any(|(m, p)| m.len() != p.len())
        {
            return Err(IdcError::ShapeMismatch("parameter shapes changed between steps".into()));
        }
        Ok(())
    }

    /// Applies one update in place and increments the step counter.
    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        self.ensure_buffers(&params, &grads)?;
        self.steps += 1;
        let lr = self.learning_rate;
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for ((p, g), buf) in params.iter_mut().zip(&grads).zip(&mut self.first_moment) {
                    for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(buf.iter_mut()) {
                        let d = gi + wd * *pi;
                        *vi = momentum * *vi + d;
                        *pi -= lr * *vi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(&grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let d = gi + wd * *pi;
                        *mi = beta1 * *mi + (1.0 - beta1) * d;
                        *vi = beta2 * *vi + (1.0 - beta2) * d * d;
                        let m_hat = *mi / bc1;
                        let v_hat = *vi / bc2;
                        *pi -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
