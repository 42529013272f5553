//! Self-supervised audio-visual sound separation at desk scale.
//!
//! The pipeline mixes audio tracks from unrelated video clips, then trains a
//! network to recover each track conditioned on its own video. Motion is the
//! load-bearing cue: per-pixel dense trajectories are computed by iteratively
//! advecting a sampling grid through optical-flow fields with differentiable
//! bilinear sampling, so the tracker trains end to end with the rest of the
//! model.
//!
//! Module map:
//!
//! - [`dsp`] — STFT/iSTFT, spectrogram masks, WAV and container formats.
//! - [`mixer`] — mix-and-separate sample construction and curriculum sampling.
//! - [`motion`] — optical flow, dense trajectory tracking, shot detection.
//! - [`diffcore`] — tape-based reverse-mode autodiff with CPU tensor kernels.
//! - [`nets`] — motion/appearance encoders, attention fusion, FiLM U-Net.
//! - [`trainer`] — curriculum training loop, checkpoints, logs.
//! - [`eval`] — BSS metrics, pixel-level sound embeddings, localization.
//! - [`synthdata`] — procedural audio-visual scenes where motion makes sound.

pub mod diffcore;
pub mod dsp;
mod error;
pub mod eval;
pub mod mixer;
pub mod motion;
pub mod nets;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
