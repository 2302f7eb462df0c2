//! Feature extractor, bottleneck, and discriminative classifier for vector
//! inputs, plus weak/strong perturbation, pseudo-labeling, and the two
//! cross-entropy losses.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ops, DiffError, Result, Tensor};
use crate::nn::{self, Linear};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    pub classes: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_feature_dim() -> usize {
    8
}

/// extractor (relu MLP) → bottleneck (linear to feature_dim) → classifier
/// (linear to C, softmax rows).
pub struct Network {
    pub spec: NetworkSpec,
    extractor: Vec<Linear>,
    bottleneck: Linear,
    classifier: Linear,
}

impl Network {
    pub fn new(spec: NetworkSpec, rng: &mut ChaCha8Rng) -> Network {
        let mut extractor = Vec::new();
        let mut prev = spec.input_dim;
        for &h in &spec.hidden {
            extractor.push(Linear::new(prev, h, rng));
            prev = h;
        }
        let bottleneck = Linear::new(prev, spec.feature_dim, rng);
        let classifier = Linear::new(spec.feature_dim, spec.classes, rng);
        Network {
            spec,
            extractor,
            bottleneck,
            classifier,
        }
    }

    /// Bottleneck features, graph path.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.extractor {
            h = ops::relu(&layer.forward(&h)?);
        }
        self.bottleneck.forward(&h)
    }

    pub fn logits_from_features(&self, f: &Tensor) -> Result<Tensor> {
        self.classifier.forward(f)
    }

    pub fn probs_from_features(&self, f: &Tensor) -> Result<Tensor> {
        ops::softmax_rows(&self.logits_from_features(f)?)
    }

    /// Value-only bottleneck features for `n` rows.
    pub fn features_values(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.extractor {
            h = layer.forward_values(&h, n);
            nn::relu_values(&mut h);
        }
        self.bottleneck.forward_values(&h, n)
    }

    /// Value-only class probabilities, rows summing to 1.
    pub fn predict_values(&self, x: &[f64], n: usize) -> Vec<f64> {
        let f = self.features_values(x, n);
        self.probs_from_feature_values(&f, n)
    }

    pub fn probs_from_feature_values(&self, f: &[f64], n: usize) -> Vec<f64> {
        let mut logits = self.classifier.forward_values(f, n);
        let c = self.spec.classes;
        for i in 0..n {
            let row = &mut logits[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        logits
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.extractor.iter().enumerate() {
            out.extend(l.params(&format!("net.extractor{i}")));
        }
        out.extend(self.bottleneck.params("net.bottleneck"));
        out.extend(self.classifier.params("net.classifier"));
        out
    }

    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params().into_iter().map(|(_, t)| t.to_vec()).collect()
    }
}

// ---------------------------------------------------------------------------
// network checkpoint: magic GNRTNET1, layer dims, then raw f64 arrays

pub const NET_MAGIC: &[u8; 8] = b"GNRTNET1";

pub fn save_network<W: std::io::Write>(net: &Network, w: &mut W) -> std::io::Result<()> {
    w.write_all(NET_MAGIC)?;
    let mut dims = vec![net.spec.input_dim as u32];
    dims.extend(net.spec.hidden.iter().map(|&h| h as u32));
    dims.push(net.spec.feature_dim as u32);
    dims.push(net.spec.classes as u32);
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for (_, t) in net.params() {
        for v in t.values().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_network<R: std::io::Read>(r: &mut R) -> std::io::Result<Network> {
    use std::io::{Error, ErrorKind};
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != NET_MAGIC {
        return Err(Error::new(
            ErrorKind::InvalidData,
            format!("bad network checkpoint magic {magic:?}"),
        ));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let ndims = u32::from_le_bytes(b4) as usize;
    if ndims < 3 {
        return Err(Error::new(ErrorKind::InvalidData, "dim list too short"));
    }
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        r.read_exact(&mut b4)?;
        dims.push(u32::from_le_bytes(b4) as usize);
    }
    let spec = NetworkSpec {
        input_dim: dims[0],
        hidden: dims[1..ndims - 2].to_vec(),
        feature_dim: dims[ndims - 2],
        classes: dims[ndims - 1],
    };
    let mut rng = rand::SeedableRng::seed_from_u64(0);
    let net = Network::new(spec, &mut rng);
    let mut b8 = [0u8; 8];
    for (_, t) in net.params() {
        let mut vals = vec![0.0; t.len()];
        for v in vals.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        t.set_values(&vals);
    }
    Ok(net)
}

// ---------------------------------------------------------------------------
// augmentation

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentStrength {
    Weak,
    Strong,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AugmentConfig {
    #[serde(default = "default_sigma_weak")]
    pub sigma_weak: f64,
    #[serde(default = "default_sigma_strong")]
    pub sigma_strong: f64,
    /// coordinate dropout rate for the strong view
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_sigma_weak() -> f64 {
    0.02
}
fn default_sigma_strong() -> f64 {
    0.1
}
fn default_dropout() -> f64 {
    0.1
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            sigma_weak: default_sigma_weak(),
            sigma_strong: default_sigma_strong(),
            dropout: default_dropout(),
        }
    }
}

/// Weak: additive Gaussian noise. Strong: larger noise plus random coordinate
/// dropout. Deterministic given the rng state.
pub fn augment(
    x: &[f64],
    cfg: &AugmentConfig,
    strength: AugmentStrength,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let sigma = match strength {
        AugmentStrength::Weak => cfg.sigma_weak,
        AugmentStrength::Strong => cfg.sigma_strong,
    };
    let mut out: Vec<f64> = x
        .iter()
        .map(|&v| {
            let e: f64 = StandardNormal.sample(rng);
            v + sigma * e
        })
        .collect();
    if strength == AugmentStrength::Strong && cfg.dropout > 0.0 {
        for v in out.iter_mut() {
            if rng.gen::<f64>() < cfg.dropout {
                *v = 0.0;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// pseudo-labels

/// Thresholded predictions on the weak view. `true_label` is quarantined
/// diagnostics-only ground truth; it never reaches a loss.
pub struct PseudoBatch {
    /// detached bottleneck features of the weak view, `n × d`
    pub features: Vec<f64>,
    /// weak-view class probabilities, `n × C`
    pub probs: Vec<f64>,
    pub pseudo_label: Vec<usize>,
    pub accepted: Vec<bool>,
    pub true_label: Option<Vec<usize>>,
    pub n: usize,
    pub classes: usize,
}

impl PseudoBatch {
    pub fn accepted_count(&self) -> usize {
        self.accepted.iter().filter(|&&a| a).count()
    }
}

/// Argmax labels accepted iff max prob strictly exceeds τ.
pub fn pseudo_label(
    net: &Network,
    weak_inputs: &[f64],
    n: usize,
    tau: f64,
    true_label: Option<Vec<usize>>,
) -> PseudoBatch {
    assert!(tau > 0.0 && tau < 1.0, "tau must lie in (0,1)");
    let c = net.spec.classes;
    let features = net.features_values(weak_inputs, n);
    let probs = net.probs_from_feature_values(&features, n);
    let mut pseudo = Vec::with_capacity(n);
    let mut accepted = Vec::with_capacity(n);
    for i in 0..n {
        let row = &probs[i * c..(i + 1) * c];
        let (argmax, &pmax) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        pseudo.push(argmax);
        accepted.push(pmax > tau);
    }
    PseudoBatch {
        features,
        probs,
        pseudo_label: pseudo,
        accepted,
        true_label,
        n,
        classes: c,
    }
}

// ---------------------------------------------------------------------------
// losses

/// L_s: mean cross-entropy over all K·B source rows. `probs` must be the
/// graph-path feature tensors of the concatenated source batches.
pub fn source_ce_loss(net: &Network, features: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let c = net.spec.classes;
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(DiffError::BadArg {
            op: "source_ce_loss",
            msg: format!("label {bad} out of range 0..{c}"),
        });
    }
    let logp = ops::log_softmax_rows(&net.logits_from_features(features)?)?;
    let picked = ops::select_col_per_row(&logp, labels)?;
    Ok(ops::mul_scalar(&ops::mean(&picked)?, -1.0))
}

/// L_u: cross-entropy of the strong view against accepted pseudo-labels,
/// divided by the full batch size (not the accepted count).
pub fn target_ce_loss(
    net: &Network,
    strong_features: &Tensor,
    pseudo: &PseudoBatch,
) -> Result<Tensor> {
    let n = pseudo.n;
    if n == 0 || pseudo.accepted_count() == 0 {
        return Ok(Tensor::scalar(0.0));
    }
    let logp = ops::log_softmax_rows(&net.logits_from_features(strong_features)?)?;
    let picked = ops::select_col_per_row(&logp, &pseudo.pseudo_label)?;
    let mask: Vec<f64> = pseudo.accepted.iter().map(|&a| a as u8 as f64).collect();
    let masked = ops::mul(&picked, &Tensor::constant(vec![n, 1], mask))?;
    Ok(ops::mul_scalar(&ops::sum(&masked)?, -1.0 / n as f64))
}
