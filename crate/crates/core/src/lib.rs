//! Kernel-LID weighted support vector machines.
//!
//! The crate bundles everything needed to study training-time attacks on
//! kernel SVMs and the K-LID weighting defense against them:
//!
//! * [`data`]: datasets, ingestion, synthetic generators, splits.
//! * [`kernel`]: RBF kernel values, Gram matrices, kernel distances.
//! * [`lid`]: LID / K-LID estimation and class-conditional records.
//! * [`stats`]: Gaussian KDE and KL divergence.
//! * [`defense`]: per-sample weights from K-LID likelihood ratios.
//! * [`svm`]: weighted SMO solver plus LS-SVM and LN-SVM baselines.
//! * [`attacks`]: label-flip and poisoning attacks.
//! * [`dsvm`]: distributed SVM with a fusion center.
//! * [`harness`]: experiment sweeps and report emission.

pub mod attacks;
pub mod data;
pub mod defense;
pub mod dsvm;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod lid;
pub mod optim;
pub mod rng;
pub mod stats;
pub mod svm;

pub use data::{Dataset, Label};
pub use error::{Error, Result};
pub use kernel::KernelSpec;
pub use svm::{SvmConfig, TrainedModel};
