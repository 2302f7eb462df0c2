//! Per-dimension affine layer with data-dependent initialization.

use crate::diffcore::{ops, Result, Tensor};

pub struct ActNorm {
    /// multiplicative term, strictly nonzero
    pub scale: Tensor,
    /// additive term, applied after scaling: y = s·x + b
    pub shift: Tensor,
    pub dim: usize,
    initialized: bool,
}

impl ActNorm {
    pub fn identity(dim: usize) -> ActNorm {
        ActNorm {
            scale: Tensor::param(vec![dim], vec![1.0; dim]),
            shift: Tensor::param(vec![dim], vec![0.0; dim]),
            dim,
            initialized: false,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn mark_initialized(&mut self) {
        self.initialized = true;
    }

    /// Set scale/shift so the init batch comes out with per-dimension mean 0
    /// and std 1. Zero-variance dimensions clamp std to 1e-6.
    pub fn data_init(&mut self, batch: &[f64], n: usize) {
        assert!(n >= 2, "actnorm data init needs at least 2 samples");
        let d = self.dim;
        let mut scale = vec![0.0; d];
        let mut shift = vec![0.0; d];
        for j in 0..d {
            let mean = (0..n).map(|i| batch[i * d + j]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (batch[i * d + j] - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt().max(1e-6);
            scale[j] = 1.0 / std;
            shift[j] = -mean / std;
        }
        self.scale.set_values(&scale);
        self.shift.set_values(&shift);
        self.initialized = true;
    }

    /// Graph forward: (y, per-sample log|det|) where the log-det is a scalar
    /// shared by every row.
    pub fn forward_graph(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let y = ops::add(&ops::mul(x, &self.scale)?, &self.shift)?;
        let logdet = ops::sum(&ops::log(&ops::abs(&self.scale)))?;
        Ok((y, logdet))
    }

    pub fn forward_values(&self, x: &mut [f64], n: usize) {
        let s = self.scale.values();
        let b = self.shift.values();
        for i in 0..n {
            for j in 0..self.dim {
                x[i * self.dim + j] = x[i * self.dim + j] * s[j] + b[j];
            }
        }
    }

    pub fn inverse_values(&self, y: &mut [f64], n: usize) {
        let s = self.scale.values();
        let b = self.shift.values();
        for i in 0..n {
            for j in 0..self.dim {
                y[i * self.dim + j] = (y[i * self.dim + j] - b[j]) / s[j];
            }
        }
    }

    pub fn logdet_value(&self) -> f64 {
        self.scale.values().iter().map(|s| s.abs().ln()).sum()
    }

    pub fn params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![
            (format!("{prefix}.scale"), self.scale.clone()),
            (format!("{prefix}.shift"), self.shift.clone()),
        ]
    }
}
