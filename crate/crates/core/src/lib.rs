//! Exponentially tilted Gaussian priors for variational autoencoders.
//!
//! The prior `e^{τ‖z‖} N(0, I)` pushes encodings onto a shell of radius
//! roughly `τ`, which keeps a non-zero KL divergence (the committed rate)
//! between every encoding and the prior. This crate provides the numerical
//! pieces around it: log-domain special functions, the normalizer and exact
//! KL divergence, the quadratic surrogate used during training, samplers, a
//! small MLP VAE, and out-of-distribution scoring with ROC/AUROC.

pub mod cli;
pub mod data;
pub mod error;
pub mod ood;
pub mod sampler;
pub mod specfn;
pub mod tilted;
pub mod vae;

pub use error::{Error, Result};
