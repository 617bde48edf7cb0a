//! Core library for `nrhlc`: a toolkit for training and running a
//! controllable joint noise-reduction (NR) and hearing-loss-compensation
//! (HLC) speech processor.
//!
//! The processor is optimized end-to-end through a differentiable simplified
//! auditory model, and carries a runtime mixing parameter `alpha` that trades
//! off NR against HLC without retraining.
//!
//! Module map:
//! - [`signal`]: deterministic DSP primitives (STFT/iSTFT, FIR design, ERB
//!   utilities, WAV I/O).
//! - [`autodiff`]: tape-based reverse-mode automatic differentiation over
//!   real tensors.
//! - [`auditory`]: the differentiable auditory model (DRNL filterbank,
//!   hearing-loss parameterization, IHC transduction, log compression).
//! - [`processor`]: the band-split recurrent speech processor with audiogram
//!   conditioning and mask+residual decoding.
//! - [`objectives`]: training objectives, uncertainty weighting, SDR, and
//!   output mixing.
//! - [`scene`]: on-the-fly scene generation and audiogram sampling.
//! - [`trainer`]: Adam optimization loop, evaluation, checkpointing.

pub mod autodiff;
pub mod auditory;
pub mod error;
pub mod objectives;
pub mod processor;
pub mod scene;
pub mod signal;
pub mod trainer;

pub use error::{Error, Result};

/// The only sample rate the toolkit operates at.
pub const SAMPLE_RATE: u32 = 16_000;
