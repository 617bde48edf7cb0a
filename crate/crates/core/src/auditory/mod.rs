//! The differentiable simplified auditory model: DRNL filterbank with a
//! linear and a compressive (broken-stick) path per channel, hearing-loss
//! parameterization from audiograms, inner-hair-cell transduction, and an
//! instantaneous log-compression output stage.
//!
//! A normal-hearing model is the same model with an all-zero audiogram; the
//! two are bit-identical by construction.

mod audiogram;
mod calibration;
mod drnl;
mod model;

pub use audiogram::{
    interpolate_audiogram, split_hearing_loss, Audiogram, HearingLossProfile,
    AUDIOGRAM_FREQUENCIES,
};
pub use calibration::{
    solve_log_compression_constants, CALIB_REFERENCE_AMPLITUDE, CALIB_THRESHOLD_AMPLITUDE,
    LOG_COMP_G, LOG_COMP_THETA0,
};
pub use drnl::{DrnlChannelParams, DrnlTable};
pub use model::{
    compute_ohc_max, design_middle_ear, ihc_transduction, log_compression, AuditoryConfig,
    AuditoryModel, ChannelFilters,
};

/// Number of DRNL channels.
pub const N_CHANNELS: usize = 31;

/// Filterbank frequency range in Hz.
pub const F_LO: f64 = 80.0;
pub const F_HI: f64 = 7643.0;
