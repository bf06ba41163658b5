use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Momentum SGD with L2 weight decay:
/// `v <- mu * v + (g + wd * p)`, `p <- p - lr * v`.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub params: SgdParams,
    buffers: Vec<Vec<f64>>,
    steps: u64,
}

impl OptimState {
    pub fn new(params: SgdParams) -> Self {
        Self {
            params,
            buffers: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.params.lr = lr;
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.buffers.is_empty() {
            self.buffers = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.buffers.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, step got {}",
                self.buffers.len(),
                params.len()
            )));
        }
        for (i, ((p, g), v)) in params.iter().zip(grads).zip(&self.buffers).enumerate() {
            if p.len() != g.len() || p.len() != v.len() {
                return Err(Error::Shape(format!(
                    "tensor {i}: parameter {} / gradient {} / buffer {} lengths differ",
                    p.len(),
                    g.len(),
                    v.len()
                )));
            }
        }
        let SgdParams {
            lr,
            momentum,
            weight_decay,
        } = self.params;
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.buffers) {
            for ((pi, gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vi = momentum * *vi + gi + weight_decay * *pi;
                *pi -= lr * *vi;
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// `lr0 * (1 + cos(pi * epoch / total)) / 2`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64) -> Result<f64> {
    if total_epochs == 0 {
        return Err(Error::Config("total epochs must be positive".into()));
    }
    if epoch > total_epochs {
        return Err(Error::Config(format!(
            "epoch {epoch} beyond schedule length {total_epochs}"
        )));
    }
    Ok(lr0 * 0.5 * (1.0 + (PI * epoch as f64 / total_epochs as f64).cos()))
}
