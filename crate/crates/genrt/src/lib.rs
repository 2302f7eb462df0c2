//! GeNRT: noise-robust multi-source domain adaptation at desk scale.
//!
//! Per-class invertible density models (normalizing flows) drive
//! distribution-based class-wise feature augmentation and a
//! generative-discriminative consistency penalty on top of a FixMatch-style
//! pseudo-labeling loop. `harness` wires everything into a config-driven
//! experiment runner with ablations, sweeps, and diagnostics.

pub mod adaptation;
pub mod diffcore;
pub mod flows;
pub mod harness;
pub mod netmodel;
pub mod nn;
pub mod synthdata;
