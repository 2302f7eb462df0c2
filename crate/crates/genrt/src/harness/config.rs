use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adaptation::{ApplyTo, GdcMetric, GdcSubset, MixMode};
use crate::diffcore::DiffError;
use crate::netmodel::AugmentConfig;
use crate::synthdata::{DataError, DomainSpec, Generator};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

impl HarnessError {
    /// 2 = configuration/setup problem, 3 = numeric failure mid-run.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Numeric(_) | HarnessError::Diff(_) => 3,
            _ => 2,
        }
    }
}

pub type HResult<T> = std::result::Result<T, HarnessError>;

/// Either a list of generator specs or a CSV file; `target` names the target
/// domain, every other domain is a labeled source.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub domains: Vec<DomainSpec>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    pub target: String,
    #[serde(default = "d_data_seed")]
    pub data_seed: u64,
}

fn d_data_seed() -> u64 {
    0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "d_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "d_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "d_flow_blocks")]
    pub flow_blocks: usize,
    #[serde(default = "d_flow_hidden")]
    pub flow_hidden: usize,
    #[serde(default = "d_k_bins")]
    pub k_bins: usize,
    #[serde(default = "d_tail")]
    pub tail: f64,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_flow_lr")]
    pub flow_lr: f64,
    /// Gaussian smoothing added to features during flow fitting; keeps the
    /// class densities non-degenerate when features sit on a thin manifold
    #[serde(default = "d_flow_jitter")]
    pub flow_jitter: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_mix_mode")]
    pub mix_mode: MixMode,
    #[serde(default = "d_apply_to")]
    pub apply_to: ApplyTo,
    #[serde(default = "d_gdc_metric")]
    pub gdc_metric: GdcMetric,
    #[serde(default = "d_gdc_subset")]
    pub gdc_subset: GdcSubset,
    #[serde(default = "d_warmup")]
    pub warmup_epochs: usize,
    #[serde(default = "d_memory")]
    pub memory_capacity: usize,
    /// fit class densities on source features too (not just target)
    #[serde(default = "d_true")]
    pub model_all_domains: bool,
    /// optional periodic flow re-initialization; off by default
    #[serde(default)]
    pub flow_reset_epochs: Option<usize>,
    #[serde(default = "d_beta")]
    pub beta_a: f64,
    #[serde(default = "d_beta")]
    pub beta_b: f64,
    #[serde(default = "d_augment")]
    pub augment: AugmentConfig,
    /// drop target ground truth entirely; diagnostics needing it are blank
    #[serde(default)]
    pub redact_target_labels: bool,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
}

fn d_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn d_feature_dim() -> usize {
    8
}
fn d_flow_blocks() -> usize {
    3
}
fn d_flow_hidden() -> usize {
    32
}
fn d_k_bins() -> usize {
    8
}
fn d_tail() -> f64 {
    5.0
}
fn d_lr() -> f64 {
    3e-3
}
fn d_flow_lr() -> f64 {
    3e-4
}
fn d_flow_jitter() -> f64 {
    0.4
}
fn d_epochs() -> usize {
    60
}
fn d_batch_size() -> usize {
    64
}
fn d_tau() -> f64 {
    0.95
}
fn d_lambda() -> f64 {
    0.5
}
fn d_mix_mode() -> MixMode {
    MixMode::NflowDcfa
}
fn d_apply_to() -> ApplyTo {
    ApplyTo::Target
}
fn d_gdc_metric() -> GdcMetric {
    GdcMetric::L2
}
fn d_gdc_subset() -> GdcSubset {
    GdcSubset::All
}
fn d_warmup() -> usize {
    15
}
fn d_memory() -> usize {
    256
}
fn d_beta() -> f64 {
    0.1
}
// the harness trains on raw 2-d points, where the module-level augmentation
// defaults are too gentle for the consistency loss to bite; these strengths
// were tuned on the stock task so that the weak/strong gap carries signal
fn d_augment() -> AugmentConfig {
    AugmentConfig {
        sigma_weak: 0.05,
        sigma_strong: 0.3,
        dropout: 0.2,
    }
}
fn d_true() -> bool {
    true
}
fn d_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

impl RunConfig {
    /// The stock multi-source task: three rotated two-moons sources and a
    /// further-rotated target.
    pub fn default_msda() -> RunConfig {
        let domain = |name: &str, rotation: f64| DomainSpec {
            name: name.into(),
            generator: Generator::TwoMoons,
            rotation,
            translation: vec![],
            scale: 1.0,
            noise_sigma: 0.10,
            n_train: 256,
            n_test: 256,
            label_noise_rate: 0.0,
            classes: 2,
        };
        RunConfig {
            dataset: DatasetConfig {
                domains: vec![
                    domain("rot00", 0.0),
                    domain("rot15", 15.0),
                    domain("rot30", 30.0),
                    domain("rot60", 60.0),
                ],
                csv: None,
                target: "rot60".into(),
                data_seed: 0,
            },
            hidden: d_hidden(),
            feature_dim: d_feature_dim(),
            flow_blocks: d_flow_blocks(),
            flow_hidden: d_flow_hidden(),
            k_bins: d_k_bins(),
            tail: d_tail(),
            lr: d_lr(),
            flow_lr: d_flow_lr(),
            flow_jitter: d_flow_jitter(),
            epochs: d_epochs(),
            batch_size: d_batch_size(),
            tau: d_tau(),
            lambda: d_lambda(),
            mix_mode: d_mix_mode(),
            apply_to: d_apply_to(),
            gdc_metric: d_gdc_metric(),
            gdc_subset: d_gdc_subset(),
            warmup_epochs: d_warmup(),
            memory_capacity: d_memory(),
            model_all_domains: true,
            flow_reset_epochs: None,
            beta_a: d_beta(),
            beta_b: d_beta(),
            augment: d_augment(),
            redact_target_labels: false,
            seeds: d_seeds(),
        }
    }

    pub fn validate(&self) -> HResult<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(HarnessError::Config(format!(
                "tau must lie in (0,1), got {}",
                self.tau
            )));
        }
        if self.lambda < 0.0 {
            return Err(HarnessError::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(HarnessError::Config(format!(
                "warmup_epochs ({}) must be < epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.feature_dim == 0 {
            return Err(HarnessError::Config(
                "batch_size, epochs and feature_dim must be positive".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds list must be non-empty".into()));
        }
        if !(self.beta_a > 0.0 && self.beta_b > 0.0) {
            return Err(HarnessError::Config("beta parameters must be positive".into()));
        }
        let ds = &self.dataset;
        match (&ds.csv, ds.domains.is_empty()) {
            (Some(_), false) => {
                return Err(HarnessError::Config(
                    "dataset must set either `domains` or `csv`, not both".into(),
                ))
            }
            (None, true) => {
                return Err(HarnessError::Config(
                    "dataset needs either `domains` or a `csv` path".into(),
                ))
            }
            _ => {}
        }
        if ds.csv.is_none() && !ds.domains.iter().any(|d| d.name == ds.target) {
            return Err(HarnessError::Config(format!(
                "target domain `{}` is not among the configured domains",
                ds.target
            )));
        }
        if ds.csv.is_none() && ds.domains.len() < 2 {
            return Err(HarnessError::Config(
                "need at least one source domain besides the target".into(),
            ));
        }
        Ok(())
    }

    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        RunConfig::default_msda().validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_fields() {
        let mut c = RunConfig::default_msda();
        c.tau = 1.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default_msda();
        c.lambda = -0.1;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default_msda();
        c.warmup_epochs = c.epochs;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default_msda();
        c.dataset.target = "nope".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip_preserves_hash() {
        let c = RunConfig::default_msda();
        let json = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(c.config_hash(), back.config_hash());
    }

    #[test]
    fn unknown_field_rejected() {
        let mut v = serde_json::to_value(RunConfig::default_msda()).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("not_a_field".into(), serde_json::json!(1));
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }
}
