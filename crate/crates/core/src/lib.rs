//! Correlation-volume machinery for optical flow on a desk-scale budget.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numeric piece:
//! a small row-major [`Tensor`], the semantic smoothing attention layer
//! ([`sstrans`]), dot-product and cross-frame-attention correlation volumes
//! ([`corr`]), the exhaustive argmax matcher and image-shifting attack
//! ([`matchattack`]), and flow metrics ([`metrics`]). File formats and the
//! command-line driver live in the companion `craft` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is how parameter checks reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod corr;
pub mod error;
pub mod features;
pub mod flow;
pub mod gradcheck;
pub mod matchattack;
pub mod metrics;
pub mod rng;
pub mod sstrans;
pub mod tensor;

pub use corr::{CfaParams, CorrelationVolume, VolumeKind};
pub use error::{Error, Result};
pub use features::{FeatureMap, Image, SyntheticScene};
pub use flow::FlowField;
pub use matchattack::{AttackSweepConfig, ShiftSpec};
pub use metrics::MetricReport;
pub use sstrans::{ExpandedAttentionParams, ModeParams};
pub use tensor::Tensor;
