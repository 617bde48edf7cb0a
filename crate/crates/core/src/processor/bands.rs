//! Frequency-band partition of the one-sided spectrum.

use crate::signal::StftConfig;
use crate::{Error, Result};

/// Contiguous bands over [0, 8000] Hz mapped onto STFT bins. Every bin
/// belongs to exactly one band; the DC bin is in the first band and the
/// Nyquist bin in the last.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSplitSpec {
    edges_hz: Vec<f64>,
    bin_edges: Vec<usize>,
}

impl BandSplitSpec {
    /// The default schedule: 20 bands of 200 Hz up to 4 kHz, 6 bands of
    /// 500 Hz up to 7 kHz, and one 1 kHz band up to 8 kHz (27 bands).
    pub fn default_edges() -> Vec<f64> {
        let mut e: Vec<f64> = (0..=20).map(|i| 200.0 * i as f64).collect();
        e.extend((1..=6).map(|i| 4000.0 + 500.0 * i as f64));
        e.push(8000.0);
        e
    }

    pub fn new(edges_hz: Vec<f64>, stft: &StftConfig) -> Result<Self> {
        if edges_hz.len() < 2 {
            return Err(Error::invalid("band split needs at least one band"));
        }
        let nyquist = crate::SAMPLE_RATE as f64 / 2.0;
        if edges_hz[0] != 0.0 || *edges_hz.last().unwrap() != nyquist {
            return Err(Error::invalid(format!(
                "band edges must span [0, {nyquist}], got [{}, {}]",
                edges_hz[0],
                edges_hz.last().unwrap()
            )));
        }
        let bin_hz = crate::SAMPLE_RATE as f64 / stft.frame_len as f64;
        let n_bins = stft.bins();
        let mut bin_edges: Vec<usize> = edges_hz
            .iter()
            .map(|&hz| (hz / bin_hz).round() as usize)
            .collect();
        // the last band owns the Nyquist bin
        *bin_edges.last_mut().unwrap() = n_bins;
        for w in bin_edges.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "band edges too close: bins {} and {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self {
            edges_hz,
            bin_edges,
        })
    }

    pub fn default_27(stft: &StftConfig) -> Self {
        Self::new(Self::default_edges(), stft).expect("default band schedule")
    }

    pub fn n_bands(&self) -> usize {
        self.bin_edges.len() - 1
    }

    /// Bin range of band `k`.
    pub fn band_bins(&self, k: usize) -> std::ops::Range<usize> {
        self.bin_edges[k]..self.bin_edges[k + 1]
    }

    pub fn band_width(&self, k: usize) -> usize {
        self.bin_edges[k + 1] - self.bin_edges[k]
    }

    pub fn total_bins(&self) -> usize {
        *self.bin_edges.last().unwrap()
    }

    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }
}
