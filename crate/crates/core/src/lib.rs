//! Multi-view deep embedded clustering.
//!
//! Every view of a dataset gets its own fully connected autoencoder and a
//! Student's-t clustering layer. At each target update the view embeddings
//! are min-max scaled, concatenated into global features and clustered with
//! k-means; the resulting pseudo soft assignments are sharpened into a single
//! target distribution that every view is then fine-tuned against with a KL
//! loss. Views are optimized independently of each other given the target, so
//! view workers run data-parallel (feature `parallel`, on by default).
//!
//! Module map:
//!
//! - [`matrix`], [`nn`]: dense kernels, MLP autoencoders, Adam.
//! - [`clustering`]: soft assignments, KL loss and its analytic gradients.
//! - [`target`]: global features, k-means, pseudo assignments, sharpening.
//! - [`trainer`]: pretraining, target-update rounds, ablation baselines.
//! - [`metrics`]: ACC (optimal matching), NMI, ARI.
//! - [`dataio`]: dataset format, synthetic generator, exports, run reports.

pub mod clustering;
pub mod dataio;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod rng;
pub mod target;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
