//! Deterministic DSP primitives shared by the speech processor and the
//! auditory model: STFT/iSTFT, FIR design and application, ERB-scale
//! utilities, and WAV I/O.
//!
//! All operations here are pure functions on immutable inputs and are safe to
//! call concurrently.

mod audio;
mod erb;
mod fir;
mod stft;

pub use audio::{read_wav, write_wav, AudioSignal};
pub use erb::{erb_bandwidth, erb_rate, erb_rate_inverse, erb_space};
pub use fir::{fir_apply, gammatone_fir, lowpass_fir, FirFilter, PreparedFir};
pub use stft::{hann_window, istft, stft, window_square_envelope, Spectrogram, StftConfig};
