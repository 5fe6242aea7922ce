//! Occupancy grid map (OGM) prediction in the latent space of a generative model.
//!
//! The pipeline runs in two stages. Stage one learns an encoder and a
//! style/content generator for OGMs without supervision (β-VAE or VAE-GAN).
//! Stage two freezes both networks, encodes every OGM sequence into latents and
//! trains a recurrent predictor that forecasts future latents, which the
//! generator decodes back into grids. Predictions are scored with the Image
//! Similarity (IS) metric against copy-last-frame baselines.
//!
//! Synthetic LiDAR-derived grids come from [`gridworld`]; grids and the
//! `OGMS` sequence format live in [`ogm`].

pub mod analysis;
mod binio;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod gridworld;
pub mod hashing;
pub mod html_report;
pub mod latent_predict;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod ogm;
pub mod repr_train;
pub mod rng;

pub use error::{Error, Result};
