//! Generative self-supervised representation learning.
//!
//! `simvae` trains MLP variational autoencoders whose latent prior ties
//! together the representations of semantically related samples (views of
//! one source datum), and compares them against VAE, β-VAE, InfoNCE and
//! instance-discrimination baselines under a common evaluation protocol:
//! kNN, linear and MLP probes, GMM clustering scored by NMI/ARI, style
//! regression, frozen-decoder reconstruction and class-conditional
//! generation.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: tensors, a reverse-mode autodiff tape, gradient checks and
//!   seeded random streams.
//! * [`nn`]: MLPs with Gaussian heads, Adam and the checkpoint container.
//! * [`ssl_model`]: log-densities of the hierarchical latent model.
//! * [`losses`]: every training objective, each reporting its sub-terms.
//! * [`data`]: IDX ingestion, augmentation and the synthetic generator.
//! * [`training`]: the configurable training loop with resume.
//! * [`eval`]: probes, clustering metrics and generation.
//! * [`cli`]: the `simvae` command-line entry point.
//!
//! See the `examples/` directory for one runnable program per capability.

// Guards are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod nn;
pub mod numerics;
pub mod ssl_model;
pub mod training;

pub use error::{Error, Result};
