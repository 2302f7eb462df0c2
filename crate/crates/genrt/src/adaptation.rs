//! IFA and D-CFA feature mixing, the feature memory, the generative
//! classifier over per-class density models, the GDC consistency loss, and
//! the disagreement diagnostic.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ops, DiffError, Result, Tensor};
use crate::flows::{FlowModel, GaussianClassModel};
use crate::netmodel::PseudoBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    None,
    Instance,
    GaussianDcfa,
    NflowDcfa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyTo {
    Source,
    Target,
    Both,
}

impl ApplyTo {
    pub fn covers_source(&self) -> bool {
        matches!(self, ApplyTo::Source | ApplyTo::Both)
    }
    pub fn covers_target(&self) -> bool {
        matches!(self, ApplyTo::Target | ApplyTo::Both)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MixConfig {
    #[serde(default = "default_beta")]
    pub beta_a: f64,
    #[serde(default = "default_beta")]
    pub beta_b: f64,
    pub mode: MixMode,
    #[serde(default = "default_apply_to")]
    pub apply_to: ApplyTo,
}

fn default_beta() -> f64 {
    0.1
}
fn default_apply_to() -> ApplyTo {
    ApplyTo::Both
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            beta_a: 0.1,
            beta_b: 0.1,
            mode: MixMode::None,
            apply_to: ApplyTo::Both,
        }
    }
}

/// α0 ~ Beta(a, b), folded to max(α0, 1−α0) ∈ [0.5, 1].
pub fn draw_alpha(cfg: &MixConfig, rng: &mut ChaCha8Rng) -> f64 {
    let beta = rand_distr::Beta::new(cfg.beta_a, cfg.beta_b).expect("beta params must be positive");
    let a0: f64 = beta.sample(rng);
    a0.max(1.0 - a0)
}

// ---------------------------------------------------------------------------
// feature memory

/// Per-class FIFO ring buffer of detached feature vectors.
pub struct FeatureMemory {
    buffers: Vec<VecDeque<(Vec<f64>, u64)>>,
    capacity: usize,
    dim: usize,
    step: u64,
}

impl FeatureMemory {
    pub fn new(classes: usize, capacity: usize, dim: usize) -> FeatureMemory {
        FeatureMemory {
            buffers: (0..classes).map(|_| VecDeque::new()).collect(),
            capacity,
            dim,
            step: 0,
        }
    }

    pub fn class_len(&self, class: usize) -> usize {
        self.buffers[class].len()
    }

    pub fn push(&mut self, class: usize, feature: &[f64]) {
        debug_assert_eq!(feature.len(), self.dim);
        let buf = &mut self.buffers[class];
        if buf.len() == self.capacity {
            buf.pop_front();
        }
        buf.push_back((feature.to_vec(), self.step));
        self.step += 1;
    }

    /// Append every accepted entry of the batch to its class buffer.
    pub fn update(&mut self, pseudo: &PseudoBatch) {
        let d = self.dim;
        for i in 0..pseudo.n {
            if pseudo.accepted[i] {
                let f = pseudo.features[i * d..(i + 1) * d].to_vec();
                self.push(pseudo.pseudo_label[i], &f);
            }
        }
    }

    pub fn get(&self, class: usize, idx: usize) -> &[f64] {
        &self.buffers[class][idx].0
    }

    /// Up to `max` features of one class, newest last, as a flat row-major
    /// copy. Used to backfill flow training batches.
    pub fn draw_class_batch(&self, class: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let buf = &self.buffers[class];
        let n = buf.len();
        if n == 0 {
            return Vec::new();
        }
        if n <= max {
            let mut out = Vec::with_capacity(n * self.dim);
            for (f, _) in buf {
                out.extend_from_slice(f);
            }
            return out;
        }
        let mut out = Vec::with_capacity(max * self.dim);
        for _ in 0..max {
            let k = rng.gen_range(0..n);
            out.extend_from_slice(&buf[k].0);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// generative classifier

pub enum DensityBackend<'a> {
    Flows(&'a [FlowModel]),
    Gaussians(&'a [Option<GaussianClassModel>]),
}

impl DensityBackend<'_> {
    pub fn classes(&self) -> usize {
        match self {
            DensityBackend::Flows(m) => m.len(),
            DensityBackend::Gaussians(m) => m.len(),
        }
    }

    pub fn has_model(&self, class: usize) -> bool {
        match self {
            DensityBackend::Flows(m) => m[class].is_initialized(),
            DensityBackend::Gaussians(m) => m[class].is_some(),
        }
    }

    /// Per-sample log-density under one class model; None when untrained.
    pub fn log_prob(&self, class: usize, f: &[f64], n: usize) -> Option<Vec<f64>> {
        match self {
            DensityBackend::Flows(m) => {
                if !m[class].is_initialized() {
                    return None;
                }
                m[class].log_prob_values(f, n).ok()
            }
            DensityBackend::Gaussians(m) => {
                m[class].as_ref().map(|g| g.log_prob_values(f, n))
            }
        }
    }

    pub fn sample(&self, class: usize, n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        match self {
            DensityBackend::Flows(m) => {
                if !m[class].is_initialized() {
                    return None;
                }
                Some(m[class].sample(n, rng))
            }
            DensityBackend::Gaussians(m) => m[class].as_ref().map(|g| g.sample(n, rng)),
        }
    }
}

/// Normalized class probabilities p^G from per-class log-densities and a
/// uniform class prior, computed in log space. Non-finite log-densities drop
/// out; a row with no finite entry falls back to uniform. Output is detached
/// by construction (plain values).
pub fn generative_predict(backend: &DensityBackend, f: &[f64], n: usize) -> Vec<f64> {
    let c = backend.classes();
    let mut logl = vec![f64::NEG_INFINITY; n * c];
    for class in 0..c {
        if let Some(lp) = backend.log_prob(class, f, n) {
            for i in 0..n {
                if lp[i].is_finite() {
                    logl[i * c + class] = lp[i];
                }
            }
        }
    }
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        let row = &logl[i * c..(i + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            for j in 0..c {
                out[i * c + j] = 1.0 / c as f64;
            }
            continue;
        }
        let z: f64 = row.iter().map(|&l| (l - m).exp()).sum();
        for j in 0..c {
            out[i * c + j] = (row[j] - m).exp() / z;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// feature mixing

/// IFA: convex mix with a same-class partner drawn uniformly from the batch
/// (different index) joined with the feature memory. Entries with no partner
/// pass through unchanged. Labels are untouched.
pub fn mix_instance(
    features: &Tensor,
    labels: &[usize],
    memory: &FeatureMemory,
    alphas: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let n = features.rows();
    let d = features.cols();
    if labels.len() != n || alphas.len() != n {
        return Err(DiffError::BadArg {
            op: "mix_instance",
            msg: format!("{} labels, {} alphas for {} rows", labels.len(), alphas.len(), n),
        });
    }
    let mut partner_idx: Vec<usize> = (0..n).collect();
    let mut mem_rows = vec![0.0; n * d];
    let mut from_batch = vec![0.0; n];
    let mut from_mem = vec![0.0; n];
    let mut alpha_col = vec![1.0; n];
    for i in 0..n {
        let y = labels[i];
        let batch_candidates: Vec<usize> =
            (0..n).filter(|&j| j != i && labels[j] == y).collect();
        let mem_count = memory.class_len(y);
        let total = batch_candidates.len() + mem_count;
        if total == 0 {
            continue;
        }
        let pick = rng.gen_range(0..total);
        if pick < batch_candidates.len() {
            partner_idx[i] = batch_candidates[pick];
            from_batch[i] = 1.0;
        } else {
            let f = memory.get(y, pick - batch_candidates.len());
            mem_rows[i * d..(i + 1) * d].copy_from_slice(f);
            from_mem[i] = 1.0;
        }
        alpha_col[i] = alphas[i];
    }
    let batch_part = ops::select_rows(features, &partner_idx)?;
    let partner = ops::add(
        &ops::mul(&batch_part, &Tensor::constant(vec![n, 1], from_batch))?,
        &ops::mul(
            &Tensor::constant(vec![n, d], mem_rows),
            &Tensor::constant(vec![n, 1], from_mem),
        )?,
    )?;
    convex_mix(features, &partner, &alpha_col)
}

/// D-CFA: convex mix with one draw from the class-`y_i` density model. The
/// draw is a plain value (gradient-detached). Classes without a trained model
/// pass through.
pub fn mix_distribution(
    features: &Tensor,
    labels: &[usize],
    backend: &DensityBackend,
    alphas: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let n = features.rows();
    let d = features.cols();
    if labels.len() != n || alphas.len() != n {
        return Err(DiffError::BadArg {
            op: "mix_distribution",
            msg: format!("{} labels, {} alphas for {} rows", labels.len(), alphas.len(), n),
        });
    }
    let mut drawn = vec![0.0; n * d];
    let mut alpha_col = vec![1.0; n];
    for i in 0..n {
        if let Some(s) = backend.sample(labels[i], 1, rng) {
            if s.iter().all(|v| v.is_finite()) {
                drawn[i * d..(i + 1) * d].copy_from_slice(&s);
                alpha_col[i] = alphas[i];
            }
        }
    }
    convex_mix(features, &Tensor::constant(vec![n, d], drawn), &alpha_col)
}

/// f̃ = a·f + (1−a)·partner with a per-row coefficient (1 → pass-through).
fn convex_mix(features: &Tensor, partner: &Tensor, alpha_col: &[f64]) -> Result<Tensor> {
    let n = features.rows();
    let a = Tensor::constant(vec![n, 1], alpha_col.to_vec());
    let one_m_a = Tensor::constant(vec![n, 1], alpha_col.iter().map(|a| 1.0 - a).collect());
    ops::add(&ops::mul(features, &a)?, &ops::mul(partner, &one_m_a)?)
}

// ---------------------------------------------------------------------------
// GDC loss and diagnostics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdcMetric {
    L2,
    L1,
    Kl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdcSubset {
    All,
    Disagreed,
}

fn validate_rows(op: &'static str, rows: &[f64], n: usize, c: usize) -> Result<()> {
    for i in 0..n {
        let row = &rows[i * c..(i + 1) * c];
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < -1e-9 || !p.is_finite()) {
            return Err(DiffError::BadArg {
                op,
                msg: format!("row {i} is not a probability distribution (sum {s})"),
            });
        }
    }
    Ok(())
}

pub fn argmax_row(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap()
}

/// L_GDC between discriminative rows (graph) and generative rows (values).
/// `subset: Disagreed` averages only over rows whose argmaxes differ.
pub fn gdc_loss(
    p_disc: &Tensor,
    p_gen: &[f64],
    metric: GdcMetric,
    subset: GdcSubset,
) -> Result<Tensor> {
    let n = p_disc.rows();
    let c = p_disc.cols();
    if p_gen.len() != n * c {
        return Err(DiffError::BadArg {
            op: "gdc_loss",
            msg: format!("p_gen length {} != {}", p_gen.len(), n * c),
        });
    }
    validate_rows("gdc_loss(p_disc)", &p_disc.values(), n, c)?;
    validate_rows("gdc_loss(p_gen)", p_gen, n, c)?;

    let mask: Vec<f64> = match subset {
        GdcSubset::All => vec![1.0; n],
        GdcSubset::Disagreed => {
            let pd = p_disc.values();
            (0..n)
                .map(|i| {
                    let ad = argmax_row(&pd[i * c..(i + 1) * c]);
                    let ag = argmax_row(&p_gen[i * c..(i + 1) * c]);
                    (ad != ag) as u8 as f64
                })
                .collect()
        }
    };
    let count: f64 = mask.iter().sum();
    if count == 0.0 {
        return Ok(Tensor::scalar(0.0));
    }
    let pg = Tensor::constant(vec![n, c], p_gen.to_vec());
    let per_row = match metric {
        GdcMetric::L2 => ops::sum_cols(&ops::square(&ops::sub(p_disc, &pg)?))?,
        GdcMetric::L1 => ops::sum_cols(&ops::abs(&ops::sub(p_disc, &pg)?))?,
        GdcMetric::Kl => {
            // KL(p^G ‖ p^D) = Σ p^G (log p^G − log p^D)
            let log_pg: Vec<f64> = p_gen.iter().map(|&p| p.max(ops::LOG_CLAMP).ln()).collect();
            let diff = ops::sub(&Tensor::constant(vec![n, c], log_pg), &ops::log(p_disc))?;
            ops::sum_cols(&ops::mul(&pg, &diff)?)?
        }
    };
    let masked = ops::mul(&per_row, &Tensor::constant(vec![n, 1], mask))?;
    Ok(ops::mul_scalar(&ops::sum(&masked)?, 1.0 / count))
}

/// L2 distance between predictions and their ε-smoothed, detached copy.
pub fn self_consistency_loss(p_disc: &Tensor, epsilon: f64) -> Result<Tensor> {
    let n = p_disc.rows();
    let c = p_disc.cols();
    let smoothed: Vec<f64> = p_disc
        .values()
        .iter()
        .map(|&p| (1.0 - epsilon) * p + epsilon / c as f64)
        .collect();
    let diff = ops::sub(p_disc, &Tensor::constant(vec![n, c], smoothed))?;
    let per_row = ops::sum_cols(&ops::square(&diff))?;
    ops::mean(&per_row)
}

/// Fraction of rows whose argmax differs between the two predictors.
pub fn disagreement_rate(p_disc: &[f64], p_gen: &[f64], n: usize, c: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut disagree = 0usize;
    for i in 0..n {
        let ad = argmax_row(&p_disc[i * c..(i + 1) * c]);
        let ag = argmax_row(&p_gen[i * c..(i + 1) * c]);
        if ad != ag {
            disagree += 1;
        }
    }
    disagree as f64 / n as f64
}
