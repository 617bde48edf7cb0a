//! STFT analysis and overlap-add synthesis with window-square normalization.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::signal::AudioSignal;
use crate::{Error, Result};

/// STFT framing parameters. The default is a 32 ms frame with a 16 ms hop at
/// 16 kHz and a periodic Hann window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: 512,
            hop: 256,
        }
    }
}

impl StftConfig {
    pub fn new(frame_len: usize, hop: usize) -> Result<Self> {
        if frame_len == 0 || hop * 2 != frame_len {
            return Err(Error::invalid(format!(
                "hop must be frame_len/2 (constant overlap-add), got {frame_len}/{hop}"
            )));
        }
        Ok(Self { frame_len, hop })
    }

    /// Number of one-sided frequency bins.
    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Number of frames for a signal of `n` samples (no padding).
    pub fn frames(&self, n: usize) -> usize {
        if n < self.frame_len {
            0
        } else {
            (n - self.frame_len) / self.hop + 1
        }
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()))
        .collect()
}

/// Summed squared synthesis window, used to normalize overlap-add output.
/// Values are clamped away from zero so edges stay finite.
pub fn window_square_envelope(cfg: &StftConfig, frames: usize) -> Vec<f64> {
    let w = hann_window(cfg.frame_len);
    let len = (frames.saturating_sub(1)) * cfg.hop + cfg.frame_len;
    let mut env = vec![0.0; len];
    for t in 0..frames {
        for (j, &wj) in w.iter().enumerate() {
            env[t * cfg.hop + j] += wj * wj;
        }
    }
    for e in &mut env {
        if *e < 1e-12 {
            *e = 1e-12;
        }
    }
    env
}

/// Complex one-sided spectrogram, `F x T`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub bins: Array2<Complex64>,
    pub config: StftConfig,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.bins.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.bins.ncols()
    }

    pub fn scale(&self, factor: f64) -> Spectrogram {
        Spectrogram {
            bins: self.bins.mapv(|c| c * factor),
            config: self.config,
        }
    }
}

/// Short-time Fourier transform. Linear in the input; frames that would run
/// past the end of the signal are dropped (no padding).
pub fn stft(signal: &AudioSignal, cfg: &StftConfig) -> Result<Spectrogram> {
    let x = signal.samples();
    if x.len() < cfg.frame_len {
        return Err(Error::InputTooShort {
            got: x.len(),
            need: cfg.frame_len,
        });
    }
    let n_frames = cfg.frames(x.len());
    let n_bins = cfg.bins();
    let window = hann_window(cfg.frame_len);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.frame_len);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut bins = Array2::<Complex64>::default((n_bins, n_frames));
    let mut buf = vec![Complex64::default(); cfg.frame_len];
    for t in 0..n_frames {
        let start = t * cfg.hop;
        for j in 0..cfg.frame_len {
            buf[j] = Complex64::new(x[start + j] * window[j], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for f in 0..n_bins {
            bins[(f, t)] = buf[f];
        }
    }
    Ok(Spectrogram { bins, config: *cfg })
}

/// Inverse STFT by weighted overlap-add with window-square normalization.
/// Left inverse of [`stft`] up to edge frames. Output length is
/// `(T-1)*hop + frame_len`.
pub fn istft(spec: &Spectrogram) -> Result<AudioSignal> {
    let cfg = spec.config;
    if spec.n_bins() != cfg.bins() {
        return Err(Error::ShapeMismatch {
            op: "istft",
            left: vec![spec.n_bins(), spec.n_frames()],
            right: vec![cfg.bins(), spec.n_frames()],
        });
    }
    let n_frames = spec.n_frames();
    if n_frames == 0 {
        return AudioSignal::new(vec![]);
    }
    let window = hann_window(cfg.frame_len);
    let env = window_square_envelope(&cfg, n_frames);
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(cfg.frame_len);
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
    let mut out = vec![0.0; env.len()];
    let mut buf = vec![Complex64::default(); cfg.frame_len];
    let n_bins = cfg.bins();
    for t in 0..n_frames {
        // rebuild the two-sided spectrum by conjugate symmetry
        for f in 0..n_bins {
            buf[f] = spec.bins[(f, t)];
        }
        for f in 1..n_bins - 1 {
            buf[cfg.frame_len - f] = spec.bins[(f, t)].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * cfg.hop;
        let inv_n = 1.0 / cfg.frame_len as f64;
        for j in 0..cfg.frame_len {
            out[start + j] += buf[j].re * inv_n * window[j];
        }
    }
    for (o, e) in out.iter_mut().zip(&env) {
        *o /= e;
    }
    AudioSignal::new(out)
}
