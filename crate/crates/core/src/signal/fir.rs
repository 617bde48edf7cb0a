//! FIR filter design (gammatone, windowed-sinc lowpass) and FFT-based
//! application with cached plans.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::signal::erb::erb_bandwidth;
use crate::signal::AudioSignal;
use crate::{Error, Result};

/// Auditory-model filters are 32 ms long at 16 kHz.
pub const FIR_LEN: usize = 512;

/// A real FIR filter. `center_freq` is metadata for band filters.
#[derive(Debug, Clone)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub center_freq: Option<f64>,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>) -> Self {
        Self {
            taps,
            center_freq: None,
        }
    }

    /// Unit impulse (identity under convolution).
    pub fn identity() -> Self {
        Self::new(vec![1.0])
    }

    /// Convolution of two filters: applying both in sequence equals applying
    /// the combined filter (causal truncation commutes with cascading).
    pub fn cascade(&self, other: &FirFilter) -> FirFilter {
        let mut taps = vec![0.0; self.taps.len() + other.taps.len() - 1];
        for (i, &a) in self.taps.iter().enumerate() {
            for (j, &b) in other.taps.iter().enumerate() {
                taps[i + j] += a * b;
            }
        }
        FirFilter {
            taps,
            center_freq: self.center_freq.or(other.center_freq),
        }
    }

    /// Complex frequency response at `f_hz` for a 16 kHz sample rate.
    pub fn response_at(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * PI * f_hz / crate::SAMPLE_RATE as f64;
        self.taps
            .iter()
            .enumerate()
            .map(|(n, &h)| Complex64::from_polar(h, -w * n as f64))
            .sum()
    }
}

/// Truncated gammatone impulse response
/// `t^(order-1) * exp(-2*pi*b(fc)*t) * cos(2*pi*fc*t)` with
/// `b(fc) = 1.019 * ERB(fc)`, peak-normalized so the magnitude response at
/// `fc` is 0 dB.
pub fn gammatone_fir(fc: f64, order: usize, len: usize) -> Result<FirFilter> {
    if !(fc > 0.0 && fc < 8000.0) {
        return Err(Error::invalid(format!(
            "gammatone center frequency out of band: {fc} Hz"
        )));
    }
    if order == 0 || len == 0 {
        return Err(Error::invalid("gammatone order and length must be > 0"));
    }
    let fs = crate::SAMPLE_RATE as f64;
    let b = 1.019 * erb_bandwidth(fc);
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            t.powi(order as i32 - 1) * (-2.0 * PI * b * t).exp() * (2.0 * PI * fc * t).cos()
        })
        .collect();
    let mut filt = FirFilter {
        taps: taps.clone(),
        center_freq: Some(fc),
    };
    let peak = filt.response_at(fc).norm();
    if peak <= 0.0 {
        return Err(Error::invalid("degenerate gammatone response"));
    }
    for t in &mut taps {
        *t /= peak;
    }
    filt.taps = taps;
    Ok(filt)
}

/// Linear-phase windowed-sinc (Hamming) lowpass with unit DC gain and
/// -6 dB at the cutoff.
pub fn lowpass_fir(cutoff: f64, len: usize) -> Result<FirFilter> {
    if !(cutoff > 0.0 && cutoff < 8000.0) {
        return Err(Error::invalid(format!("invalid lowpass cutoff: {cutoff}")));
    }
    if len < 2 {
        return Err(Error::invalid("lowpass length must be >= 2"));
    }
    let fs = crate::SAMPLE_RATE as f64;
    let fc_norm = cutoff / fs; // cycles per sample
    let center = (len as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let m = n as f64 - center;
            let sinc = if m == 0.0 {
                2.0 * fc_norm
            } else {
                (2.0 * PI * fc_norm * m).sin() / (PI * m)
            };
            let hamming = 0.54 - 0.46 * (2.0 * PI * n as f64 / (len as f64 - 1.0)).cos();
            sinc * hamming
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    Ok(FirFilter {
        taps,
        center_freq: Some(cutoff),
    })
}

/// Causal convolution with the output truncated to the input length.
pub fn fir_apply(signal: &AudioSignal, filter: &FirFilter) -> AudioSignal {
    let prepared = PreparedFir::new(filter.taps.clone());
    let out = prepared.conv_causal(signal.samples());
    AudioSignal::new(out).expect("finite FIR output")
}

/// An FIR filter with precomputed FFT spectra for fast repeated application
/// (overlap-add). Also provides the adjoint pass used by reverse-mode AD.
pub struct PreparedFir {
    taps: Vec<f64>,
    taps_rev: Vec<f64>,
    fft_len: usize,
    taps_fft: Vec<Complex64>,
    taps_rev_fft: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PreparedFir {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PreparedFir")
            .field("taps_len", &self.taps.len())
            .field("fft_len", &self.fft_len)
            .finish()
    }
}

impl PreparedFir {
    pub fn new(taps: Vec<f64>) -> Self {
        assert!(!taps.is_empty(), "empty FIR");
        let fft_len = (2 * taps.len()).next_power_of_two().max(1024);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(fft_len);
        let ifft = planner.plan_fft_inverse(fft_len);
        let spectrum = |t: &[f64]| -> Vec<Complex64> {
            let mut buf = vec![Complex64::default(); fft_len];
            for (i, &v) in t.iter().enumerate() {
                buf[i] = Complex64::new(v, 0.0);
            }
            fft.process(&mut buf);
            buf
        };
        let taps_rev: Vec<f64> = taps.iter().rev().copied().collect();
        let taps_fft = spectrum(&taps);
        let taps_rev_fft = spectrum(&taps_rev);
        Self {
            taps,
            taps_rev,
            fft_len,
            taps_fft,
            taps_rev_fft,
            fft,
            ifft,
        }
    }

    pub fn from_filter(filter: &FirFilter) -> Self {
        Self::new(filter.taps.clone())
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Full linear convolution, length `x.len() + taps.len() - 1`.
    /// Short filters convolve directly (exact, no FFT roundoff); long ones
    /// use overlap-add.
    fn conv_full(&self, x: &[f64], spectrum: &[Complex64]) -> Vec<f64> {
        let n = x.len();
        let l = self.taps.len();
        if l <= 64 {
            let taps: &[f64] = if std::ptr::eq(spectrum.as_ptr(), self.taps_fft.as_ptr()) {
                &self.taps
            } else {
                &self.taps_rev
            };
            let mut out = vec![0.0; n + l - 1];
            for (k, &h) in taps.iter().enumerate() {
                if h == 0.0 {
                    continue;
                }
                for (i, &v) in x.iter().enumerate() {
                    out[i + k] += h * v;
                }
            }
            return out;
        }
        let m = self.fft_len;
        let block = m - l + 1;
        let mut out = vec![0.0; n + l - 1];
        let mut buf = vec![Complex64::default(); m];
        let mut scratch = vec![Complex64::default(); self.fft.get_inplace_scratch_len()];
        let inv_m = 1.0 / m as f64;
        for (bi, chunk) in x.chunks(block).enumerate() {
            buf.fill(Complex64::default());
            for (i, &v) in chunk.iter().enumerate() {
                buf[i] = Complex64::new(v, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (b, s) in buf.iter_mut().zip(spectrum) {
                *b *= s;
            }
            self.ifft.process_with_scratch(&mut buf, &mut scratch);
            let base = bi * block;
            let take = (out.len() - base).min(m);
            for j in 0..take {
                out[base + j] += buf[j].re * inv_m;
            }
        }
        out
    }

    /// Causal convolution truncated to the input length.
    pub fn conv_causal(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut out = self.conv_full(x, &self.taps_fft);
        out.truncate(n);
        out
    }

    /// Adjoint of [`PreparedFir::conv_causal`]: given the gradient of a loss
    /// with respect to the output, returns the gradient with respect to the
    /// input (`dx[i] = sum_j dy[j] * h[j - i]`).
    pub fn adjoint(&self, dy: &[f64]) -> Vec<f64> {
        let n = dy.len();
        let l = self.taps.len();
        let full = self.conv_full(dy, &self.taps_rev_fft);
        full[l - 1..l - 1 + n].to_vec()
    }
}
