//! Trust prediction for human-robot block-stacking sessions.
//!
//! The pipeline scores collaboration performance from block placements
//! ([`cp`]), cuts end-aligned multimodal physiological windows
//! ([`session`]), and classifies trust with a transformer whose deep
//! blocks cross-attend to the performance tokens ([`model`]). Everything
//! numeric runs on the small reverse-mode engine in [`autodiff`].
//! [`synth`] generates sessions with a known latent trust so the whole
//! chain can be checked end to end, and [`train`] holds the training loop,
//! metrics, ablation grid and ANOVA.

pub mod autodiff;
pub mod cp;
pub mod error;
pub mod model;
pub mod session;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
