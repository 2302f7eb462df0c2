//! Class-conditional flow model: a stack of (actnorm, invertible linear,
//! spline coupling) blocks over a standard-normal base.


use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffcore::{ops, DiffError, Result, Tensor};

use super::actnorm::ActNorm;
use super::coupling::Coupling;
use super::plu::PluLinear;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy)]
pub struct FlowSpec {
    pub feature_dim: usize,
    pub blocks: usize,
    pub hidden: usize,
    pub k_bins: usize,
    pub tail: f64,
}

impl Default for FlowSpec {
    fn default() -> Self {
        FlowSpec {
            feature_dim: 8,
            blocks: 3,
            hidden: 32,
            k_bins: 8,
            tail: 5.0,
        }
    }
}

pub struct FlowBlock {
    pub actnorm: ActNorm,
    pub linear: PluLinear,
    pub coupling: Coupling,
}

pub struct FlowModel {
    pub class_id: usize,
    pub spec: FlowSpec,
    pub blocks: Vec<FlowBlock>,
}

impl FlowModel {
    /// Identity-initialized model: only the hidden conditioner layers carry
    /// random weights, and those feed a zeroed output layer.
    pub fn new(class_id: usize, spec: FlowSpec, rng: &mut ChaCha8Rng) -> FlowModel {
        let blocks = (0..spec.blocks)
            .map(|b| FlowBlock {
                actnorm: ActNorm::identity(spec.feature_dim),
                linear: PluLinear::identity(spec.feature_dim),
                coupling: Coupling::new(
                    spec.feature_dim,
                    spec.hidden,
                    spec.k_bins,
                    spec.tail,
                    b % 2 == 1,
                    rng,
                ),
            })
            .collect();
        FlowModel {
            class_id,
            spec,
            blocks,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim
    }

    pub fn is_initialized(&self) -> bool {
        self.blocks.iter().all(|b| b.actnorm.is_initialized())
    }

    /// Sequential actnorm data init: each block's actnorm standardizes the
    /// activations it actually sees on the init batch.
    pub fn data_init(&mut self, batch: &[f64], n: usize) {
        let d = self.spec.feature_dim;
        let mut x = batch[..n * d].to_vec();
        for block in &mut self.blocks {
            block.actnorm.data_init(&x, n);
            block.actnorm.forward_values(&mut x, n);
            x = block.linear.forward_values(&x, n);
            let (y, _) = block.coupling.forward_values(&x, n);
            x = y;
        }
    }

    /// Value path data→base: (z, per-sample log|det J|).
    pub fn forward_values(&self, x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut cur = x.to_vec();
        let mut logdet = vec![0.0; n];
        for block in &self.blocks {
            let shared = block.actnorm.logdet_value() + block.linear.logdet_value();
            for ld in logdet.iter_mut() {
                *ld += shared;
            }
            block.actnorm.forward_values(&mut cur, n);
            cur = block.linear.forward_values(&cur, n);
            let (y, ld) = block.coupling.forward_values(&cur, n);
            cur = y;
            for (a, b) in logdet.iter_mut().zip(ld) {
                *a += b;
            }
        }
        (cur, logdet)
    }

    /// Value path base→data.
    pub fn inverse_values(&self, z: &[f64], n: usize) -> Vec<f64> {
        let mut cur = z.to_vec();
        for block in self.blocks.iter().rev() {
            let (x, _) = block.coupling.inverse_values(&cur, n);
            cur = block.linear.inverse_values(&x, n);
            block.actnorm.inverse_values(&mut cur, n);
        }
        cur
    }

    /// Exact per-sample log-density (value path).
    pub fn log_prob_values(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DiffError::NonFinite("flow_log_prob input"));
        }
        let d = self.spec.feature_dim as f64;
        let (z, logdet) = self.forward_values(x, n);
        Ok((0..n)
            .map(|i| {
                let sq: f64 = z[i * self.spec.feature_dim..(i + 1) * self.spec.feature_dim]
                    .iter()
                    .map(|v| v * v)
                    .sum();
                -0.5 * sq - 0.5 * d * LN_2PI + logdet[i]
            })
            .collect())
    }

    /// Graph path log-density, shape `[B, 1]`. Gradients reach only flow
    /// parameters when `x` is a detached constant.
    pub fn log_prob_graph(&self, x: &Tensor) -> Result<Tensor> {
        if x.values().iter().any(|v| !v.is_finite()) {
            return Err(DiffError::NonFinite("flow_log_prob input"));
        }
        let d = self.spec.feature_dim as f64;
        let mut cur = x.clone();
        let mut logdet: Option<Tensor> = None;
        for block in &self.blocks {
            let (y1, ld1) = block.actnorm.forward_graph(&cur)?;
            let (y2, ld2) = block.linear.forward_graph(&y1)?;
            let (y3, ld3) = block.coupling.forward_graph(&y2)?;
            cur = y3;
            // ld1/ld2 are scalars shared across rows, ld3 is [B,1]
            let block_ld = ops::add(&ops::add(&ld3, &ld1)?, &ld2)?;
            logdet = Some(match logdet {
                Some(acc) => ops::add(&acc, &block_ld)?,
                None => block_ld,
            });
        }
        let sq = ops::sum_cols(&ops::square(&cur))?;
        let base = ops::affine(&sq, -0.5, -0.5 * d * LN_2PI);
        ops::add(&base, &logdet.expect("at least one block"))
    }

    /// Draw n samples by pushing base-normal draws through the inverse map.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.spec.feature_dim;
        let z: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
        self.inverse_values(&z, n)
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("flow{}.block{}", self.class_id, i);
            out.extend(b.actnorm.params(&format!("{p}.actnorm")));
            out.extend(b.linear.params(&format!("{p}.linear")));
            out.extend(b.coupling.params(&format!("{p}.coupling")));
        }
        out
    }

    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params().into_iter().map(|(_, t)| t.to_vec()).collect()
    }
}

/// Mean negative log-likelihood over a batch grouped by accepted pseudo-label.
/// Classes with no samples contribute nothing; returns None when every class
/// is empty.
pub fn flow_nll_loss(
    models: &[FlowModel],
    features: &Tensor,
    labels: &[usize],
) -> Result<Option<Tensor>> {
    let n = features.rows();
    if n == 0 || labels.is_empty() {
        return Ok(None);
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); models.len()];
    for (i, &y) in labels.iter().enumerate() {
        per_class[y].push(i);
    }
    let mut total: Option<Tensor> = None;
    for (c, idx) in per_class.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let sub = ops::select_rows(features, idx)?;
        let lp = models[c].log_prob_graph(&sub.detach())?;
        let s = ops::sum(&lp)?;
        total = Some(match total {
            Some(acc) => ops::add(&acc, &s)?,
            None => s,
        });
    }
    Ok(total.map(|t| ops::mul_scalar(&t, -1.0 / labels.len() as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn identity_model(d: usize) -> FlowModel {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        FlowModel::new(
            0,
            FlowSpec {
                feature_dim: d,
                ..FlowSpec::default()
            },
            &mut rng,
        )
    }

    #[test]
    fn identity_model_is_standard_normal() {
        let m = identity_model(2);
        let lp = m.log_prob_values(&[0.0, 0.0], 1).unwrap();
        assert!((lp[0] + LN_2PI).abs() < 1e-12);
        let lp = m.log_prob_values(&[1.0, 1.0], 1).unwrap();
        assert!((lp[0] + LN_2PI + 1.0).abs() < 1e-12);
    }

    #[test]
    fn graph_and_value_log_prob_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut m = FlowModel::new(
            0,
            FlowSpec {
                feature_dim: 3,
                hidden: 16,
                ..FlowSpec::default()
            },
            &mut rng,
        );
        // make it non-trivial
        let batch: Vec<f64> = (0..30).map(|i| ((i * 7) % 13) as f64 / 3.0 - 2.0).collect();
        m.data_init(&batch, 10);
        let x = vec![0.5, -1.0, 2.0, 0.0, 0.3, -0.7];
        let lv = m.log_prob_values(&x, 2).unwrap();
        let lg = m.log_prob_graph(&Tensor::constant(vec![2, 3], x)).unwrap();
        for (a, b) in lg.to_vec().iter().zip(lv.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn sample_log_prob_finite() {
        let m = identity_model(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = m.sample(32, &mut rng);
        let lp = m.log_prob_values(&s, 32).unwrap();
        assert!(lp.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_non_finite_input() {
        let m = identity_model(2);
        assert!(m.log_prob_values(&[f64::NAN, 0.0], 1).is_err());
    }

    #[test]
    fn nll_identity_at_origin() {
        let m = identity_model(2);
        let feats = Tensor::constant(vec![1, 2], vec![0.0, 0.0]);
        let loss = flow_nll_loss(std::slice::from_ref(&m), &feats, &[0])
            .unwrap()
            .unwrap();
        assert!((loss.item() - LN_2PI).abs() < 1e-12);
    }

    #[test]
    fn nll_mean_over_duplicates() {
        let m = identity_model(2);
        let one = flow_nll_loss(
            std::slice::from_ref(&m),
            &Tensor::constant(vec![1, 2], vec![0.3, 0.4]),
            &[0],
        )
        .unwrap()
        .unwrap();
        let two = flow_nll_loss(
            std::slice::from_ref(&m),
            &Tensor::constant(vec![2, 2], vec![0.3, 0.4, 0.3, 0.4]),
            &[0, 0],
        )
        .unwrap()
        .unwrap();
        assert!((one.item() - two.item()).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_skipped() {
        let m = identity_model(2);
        let feats = Tensor::constant(vec![0, 2], vec![]);
        assert!(flow_nll_loss(std::slice::from_ref(&m), &feats, &[])
            .unwrap()
            .is_none());
    }
}
