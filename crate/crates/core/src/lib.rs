//! Training engine for remediating equal-opportunity gaps in compositional
//! multi-label classifiers.
//!
//! The overall decision of the system is the logical OR of `T` per-task
//! classifiers. Remediation adds a Gaussian-kernel MMD penalty between the
//! prediction distributions of group members and non-members, restricted to
//! negative examples. Five strategies are supported:
//!
//! * [`Strategy::None`]: cross-entropy only.
//! * [`Strategy::Direct`]: one head trained on the OR label, remediated directly.
//! * [`Strategy::Baseline`]: one penalty per (task, group), conditioned on `y_t = 0`.
//! * [`Strategy::Overconditioned`]: one side stream per group, conditioned on all
//!   labels being negative.
//! * [`Strategy::InterleavedOverconditioned`]: as above, but a single randomly
//!   drawn group is remediated per step.
//!
//! The crate is `no_std` (with `alloc`). Wall-clock timing is injected through
//! the [`Clock`] trait; file formats and the CLI live in the `mindiff` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod hashing;
pub mod metrics;
pub mod mmd;
pub mod nn;
pub mod data;
pub mod streams;
pub mod training;
pub mod verification;

pub use data::{synthesize, synthesize_records, Dataset, Example, Membership, RawRecord, SynthConfig};
pub use error::{Error, Result};
pub use hashing::{fnv1a64, hash_vectorize, SparseFeatures};
pub use metrics::{
    average_precision, calibrate_thresholds, evaluate, overall_predict, roc_auc,
    threshold_for_fpr, EvalReport, GroupReport, ThresholdSet,
};
pub use mmd::{gaussian_kernel, mmd_sq, mmd_sq_grad, KernelConfig};
pub use nn::{backward, forward, sgd_step, ForwardCache, Gradients, MlpParams};
pub use streams::{build_streams, Batch, GroupSampler, SideBatch, StreamSet, StreamSpec, Strategy, TaskScope};
pub use training::{
    batch_loss, expected_regularizer_check, expected_regularizer_check_at, train, BatchLoss, Clock, RegularizerCheck,
    StepLoss, TrainConfig, TrainResult, Trainer, WARMUP_STEPS,
};
pub use verification::{
    brute_average_precision, check_overall_eo, check_overconditioned_eo, lemma1_property_sweep, naive_mmd_sq,
    pairwise_roc_auc, JointTable, Lemma1Report,
};
