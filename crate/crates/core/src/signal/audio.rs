//! Mono 16 kHz audio carrier and WAV file I/O.

use std::path::Path;

use crate::{Error, Result, SAMPLE_RATE};

/// A mono sample buffer at 16 kHz. Samples are dimensionless amplitudes,
/// nominally in [-1, 1], and are guaranteed finite.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    /// Wraps a sample buffer, validating finiteness. The sample rate is
    /// always 16 kHz; use [`AudioSignal::with_rate`] when the rate comes from
    /// an external source and must be checked.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        Self::with_rate(samples, SAMPLE_RATE)
    }

    pub fn with_rate(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate(sample_rate));
        }
        if !samples.iter().all(|s| s.is_finite()) {
            return Err(Error::NonFinite("AudioSignal".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// All-zero signal of the given length.
    pub fn silence(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            (self.energy() / self.samples.len() as f64).sqrt()
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }
}

/// Reads a mono 16 kHz WAV file. 16-bit integer and 32-bit float PCM are
/// accepted; anything else (including a different sample rate) is an error.
/// No resampling is performed.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let reader = hound::WavReader::open(path.as_ref())
        .map_err(|e| Error::Wav(format!("{}: {e}", path.as_ref().display())))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Wav(format!(
            "expected mono, got {} channels",
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate(spec.sample_rate));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (fmt, bits) => {
            return Err(Error::Wav(format!(
                "unsupported sample format: {fmt:?} {bits}-bit"
            )))
        }
    };
    AudioSignal::new(samples)
}

/// Writes a signal as 32-bit float PCM WAV.
pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec)
        .map_err(|e| Error::Wav(format!("{}: {e}", path.as_ref().display())))?;
    for &s in signal.samples() {
        writer
            .write_sample(s as f32)
            .map_err(|e| Error::Wav(e.to_string()))?;
    }
    writer.finalize().map_err(|e| Error::Wav(e.to_string()))?;
    Ok(())
}
