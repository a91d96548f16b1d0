//! Audio event detection with GMM-derived clip features and kernel SVMs.
//!
//! The pipeline runs MFCC extraction, a background diagonal GMM, soft-count
//! histograms (`alpha`) and MAP-adapted supervectors (`beta_*`), one-vs-rest
//! C-SVC detectors over linear, RBF and exponential chi-square kernels, and
//! per-event average precision and DET-curve area under a 10-fold protocol.

pub mod audio;
pub mod cache;
pub mod error;
pub mod eval;
pub mod features;
pub mod gmm;
mod hashing;
pub mod kernels;
pub mod mfcc;
pub mod pipeline;
pub mod svm;

pub use audio::{load_clip, Waveform, CANONICAL_RATE};
pub use error::{Error, Result};
pub use eval::{average_precision, det_auc, det_curve, DetCurve, ScoredSet};
pub use features::{FeatureVariant, FeatureVector};
pub use gmm::{train_gmm, DiagGmm, GmmTrainConfig};
pub use kernels::{GramMatrix, KernelKind, KernelSpec};
pub use mfcc::{extract_mfcc, MfccConfig, MfccMatrix};
pub use pipeline::{ExperimentConfig, Manifest};
pub use svm::{SvmModel, CvGrid};
