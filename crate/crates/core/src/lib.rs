//! Geometry-guided input/output domain adaptation for cross-domain semantic
//! segmentation.
//!
//! Synthetic (source) scenes come with images, semantic labels and depth;
//! real (target) scenes come with images only. Two adaptation levels are
//! trained jointly:
//!
//! * input level: an image transform network turns a source image, its
//!   one-hot labels and normalized depth into a target-styled image, judged
//!   by a patch discriminator;
//! * output level: a task network with a shared backbone predicts
//!   segmentation and depth, and a second patch discriminator compares the
//!   joint (softmax + depth) output maps of both domains.
//!
//! Only the task network is needed at test time.

pub mod cli;
pub mod config;
pub mod data;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod losses;
pub mod networks;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
pub use types::{ClassSet, DepthNormalizer, Domain, LossWeights, Sample};
