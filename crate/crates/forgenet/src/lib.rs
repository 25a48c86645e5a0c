//! Post-hoc robustness hardening for small neural networks.
//!
//! The toolkit revolves around one idea: after a model is trained, insert a
//! thresholding layer in front of each linear layer, calibrate a single
//! scalar per layer by scanning a dataset once, and zero out activations
//! whose magnitude falls below `c_ratio` times that tracked maximum. Zeroed
//! coordinates act like zeroed matrix columns, which can only shrink the
//! Gershgorin bound on the gram matrix's largest eigenvalue, and with it the
//! layer's amplification of perturbations on observed data.
//!
//! The crate ships everything needed to test whether that hardening is real
//! rather than an artifact of broken gradients:
//!
//! - [`tensor`] / [`autodiff`]: dense 64-bit tensors with a reverse-mode
//!   gradient tape.
//! - [`net`]: layers, sequential models, threshold insertion, and a
//!   bit-exact text serialization format.
//! - [`lipschitz`]: spectral norms by power iteration, Gershgorin disks,
//!   empirical Lipschitz constants over observed data, and column-masked
//!   bound shrinkage.
//! - [`attack`]: FGSM, PGD (cross-entropy and margin losses), random-search
//!   attacks, transfer attacks, and epsilon sweeps.
//! - [`smoothing`]: randomized-smoothing certification with Clopper-Pearson
//!   confidence bounds.
//! - [`masking`]: the five-point gradient-masking checklist over an
//!   original/hardened model pair.
//! - [`data`] / [`train`]: IDX and synthetic datasets, standard and
//!   adversarial training, threshold calibration.
//! - [`report`] / [`cli`]: deterministic run reports and the command-line
//!   surface, including the five-point gradient-masking checklist.
//!
//! See the `examples/` directory for one runnable program per capability.

// Index loops mirror the matrix arithmetic they implement.
#![allow(clippy::needless_range_loop)]

pub mod act;
pub mod attack;
pub mod autodiff;
pub mod cli;
pub mod conv;
pub mod counters;
pub mod data;
pub mod error;
pub mod lipschitz;
pub mod masking;
pub mod net;
pub mod report;
pub mod smoothing;
pub mod special;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use net::{ForgeMode, ForgeState, InsertPolicy, Layer, Model, ModelMeta};
pub use tensor::Tensor;

/// Version string embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
