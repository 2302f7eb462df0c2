//! Minimal fully-connected building blocks shared by the network and the
//! flow conditioners.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{ops, Result, Tensor};

/// Dense layer `y = x·W + b`, weights stored `[in, out]` row-major.
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Uniform(-limit, limit) init with the usual 1/sqrt(fan_in) scale.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Linear {
        let limit = 1.0 / (in_dim as f64).sqrt();
        let w: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Linear {
            weight: Tensor::param(vec![in_dim, out_dim], w),
            bias: Tensor::param(vec![out_dim], vec![0.0; out_dim]),
            in_dim,
            out_dim,
        }
    }

    /// All-zero init; used for the last conditioner layer so a fresh flow is
    /// the identity map.
    pub fn zeros(in_dim: usize, out_dim: usize) -> Linear {
        Linear {
            weight: Tensor::param(vec![in_dim, out_dim], vec![0.0; in_dim * out_dim]),
            bias: Tensor::param(vec![out_dim], vec![0.0; out_dim]),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::add(&ops::matmul(x, &self.weight)?, &self.bias)
    }

    /// Value-only forward on a row-major `[n, in_dim]` slice.
    pub fn forward_values(&self, x: &[f64], n: usize) -> Vec<f64> {
        let w = self.weight.values();
        let b = self.bias.values();
        let (ind, outd) = (self.in_dim, self.out_dim);
        let mut y = vec![0.0; n * outd];
        for i in 0..n {
            for j in 0..outd {
                y[i * outd + j] = b[j];
            }
            for p in 0..ind {
                let xv = x[i * ind + p];
                if xv == 0.0 {
                    continue;
                }
                for j in 0..outd {
                    y[i * outd + j] += xv * w[p * outd + j];
                }
            }
        }
        y
    }

    pub fn params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        vec![
            (format!("{prefix}.weight"), self.weight.clone()),
            (format!("{prefix}.bias"), self.bias.clone()),
        ]
    }
}

pub fn tanh_values(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.tanh();
    }
}

pub fn relu_values(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}
