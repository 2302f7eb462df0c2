//! SGD-with-momentum and Adam over named parameter tensors, with constant or
//! cosine-annealed learning rates.

use serde::{Deserialize, Serialize};

use super::tensor::{DiffError, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimKind {
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    CosineAnnealing { total_steps: usize },
}

impl Schedule {
    /// lr(t) = lr0 · 0.5 · (1 + cos(π t / T)) for the cosine variant.
    pub fn lr_at(&self, lr0: f64, step: usize) -> f64 {
        match self {
            Schedule::Constant => lr0,
            Schedule::CosineAnnealing { total_steps } => {
                let t = (step.min(*total_steps)) as f64 / (*total_steps).max(1) as f64;
                lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimConfig {
    pub kind: OptimKind,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_schedule() -> Schedule {
    Schedule::Constant
}

impl OptimConfig {
    pub fn adam(lr: f64) -> Self {
        OptimConfig {
            kind: OptimKind::Adam,
            learning_rate: lr,
            momentum: default_momentum(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            schedule: Schedule::Constant,
        }
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        OptimConfig {
            kind: OptimKind::SgdMomentum,
            learning_rate: lr,
            momentum,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            schedule: Schedule::Constant,
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }
}

struct ParamSlot {
    name: String,
    tensor: Tensor,
    // momentum buffer for SGD; first moment for Adam
    m: Vec<f64>,
    // second moment (Adam only)
    v: Vec<f64>,
}

pub struct Optimizer {
    cfg: OptimConfig,
    slots: Vec<ParamSlot>,
    step_count: usize,
}

impl Optimizer {
    pub fn new(cfg: OptimConfig, params: Vec<(String, Tensor)>) -> Self {
        let slots = params
            .into_iter()
            .map(|(name, tensor)| {
                let n = tensor.len();
                ParamSlot {
                    name,
                    tensor,
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                }
            })
            .collect();
        Optimizer {
            cfg,
            slots,
            step_count: 0,
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.cfg.schedule.lr_at(self.cfg.learning_rate, self.step_count)
    }

    pub fn zero_grad(&self) {
        for s in &self.slots {
            s.tensor.zero_grad();
        }
    }

    /// One update over all registered parameters; every one must carry a grad.
    pub fn step(&mut self) -> Result<()> {
        let lr = self.current_lr();
        self.step_count += 1;
        let t = self.step_count as f64;
        for slot in &mut self.slots {
            let grad = slot
                .tensor
                .grad()
                .ok_or_else(|| DiffError::MissingGrad(slot.name.clone()))?;
            let mut vals = slot.tensor.to_vec();
            match self.cfg.kind {
                OptimKind::SgdMomentum => {
                    for i in 0..vals.len() {
                        slot.m[i] = self.cfg.momentum * slot.m[i] + grad[i];
                        vals[i] -= lr * slot.m[i];
                    }
                }
                OptimKind::Adam => {
                    let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.epsilon);
                    let bc1 = 1.0 - b1.powf(t);
                    let bc2 = 1.0 - b2.powf(t);
                    for i in 0..vals.len() {
                        slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * grad[i];
                        slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * grad[i] * grad[i];
                        let mhat = slot.m[i] / bc1;
                        let vhat = slot.v[i] / bc2;
                        vals[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            slot.tensor.set_values(&vals);
        }
        Ok(())
    }
}
