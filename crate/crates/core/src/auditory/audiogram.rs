//! Audiograms, threshold interpolation, and the OHC/IHC hearing-loss split.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The fixed audiogram frequencies in Hz.
pub const AUDIOGRAM_FREQUENCIES: [f64; 10] = [
    250.0, 375.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0, 3000.0, 4000.0, 6000.0,
];

/// Hearing thresholds in dB HL at the ten fixed frequencies. 0 dB HL at all
/// frequencies is normal hearing.
#[derive(Debug, Clone, PartialEq)]
pub struct Audiogram {
    thresholds: [f64; 10],
}

#[derive(Serialize, Deserialize)]
struct AudiogramFile {
    frequencies_hz: Vec<f64>,
    thresholds_db_hl: Vec<f64>,
}

impl Audiogram {
    pub fn new(thresholds: [f64; 10]) -> Result<Self> {
        for (&t, &f) in thresholds.iter().zip(&AUDIOGRAM_FREQUENCIES) {
            if !t.is_finite() || !(0.0..=105.0).contains(&t) {
                return Err(Error::invalid(format!(
                    "audiogram threshold {t} dB at {f} Hz outside [0, 105]"
                )));
            }
        }
        Ok(Self { thresholds })
    }

    pub fn from_slice(thresholds: &[f64]) -> Result<Self> {
        let arr: [f64; 10] = thresholds
            .try_into()
            .map_err(|_| Error::invalid(format!("audiogram needs 10 thresholds, got {}", thresholds.len())))?;
        Self::new(arr)
    }

    /// Normal hearing: all thresholds zero.
    pub fn nh() -> Self {
        Self { thresholds: [0.0; 10] }
    }

    pub fn thresholds(&self) -> &[f64; 10] {
        &self.thresholds
    }

    pub fn is_nh(&self) -> bool {
        self.thresholds.iter().all(|&t| t == 0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&AudiogramFile {
            frequencies_hz: AUDIOGRAM_FREQUENCIES.to_vec(),
            thresholds_db_hl: self.thresholds.to_vec(),
        })
        .expect("audiogram serialization")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: AudiogramFile = serde_json::from_str(json)?;
        if file.frequencies_hz.len() != 10
            || file
                .frequencies_hz
                .iter()
                .zip(&AUDIOGRAM_FREQUENCIES)
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::invalid(format!(
                "audiogram frequencies must be exactly {AUDIOGRAM_FREQUENCIES:?}, got {:?}",
                file.frequencies_hz
            )));
        }
        Self::from_slice(&file.thresholds_db_hl)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Extrapolates audiogram thresholds to arbitrary center frequencies with
/// piecewise-linear interpolation on a log-frequency axis, holding the edge
/// values below 250 Hz and above 6000 Hz.
pub fn interpolate_audiogram(a: &Audiogram, center_freqs: &[f64]) -> Vec<f64> {
    let knots_log: Vec<f64> = AUDIOGRAM_FREQUENCIES.iter().map(|f| f.ln()).collect();
    let th = a.thresholds();
    center_freqs
        .iter()
        .map(|&f| {
            let x = f.ln();
            if x <= knots_log[0] {
                return th[0];
            }
            if x >= knots_log[9] {
                return th[9];
            }
            let mut i = 0;
            while knots_log[i + 1] < x {
                i += 1;
            }
            let w = (x - knots_log[i]) / (knots_log[i + 1] - knots_log[i]);
            th[i] * (1.0 - w) + th[i + 1] * w
        })
        .collect()
}

/// Per-channel hearing-loss decomposition.
#[derive(Debug, Clone)]
pub struct HearingLossProfile {
    pub hl_total: Vec<f64>,
    pub hl_ohc: Vec<f64>,
    pub hl_ihc: Vec<f64>,
    pub hl_ohc_max: Vec<f64>,
}

/// Splits total hearing loss into outer and inner hair cell components:
/// `HL_OHC = min(2/3 * HL_tot, HL_OHC_max)`, `HL_IHC = HL_tot - HL_OHC`.
pub fn split_hearing_loss(hl_total: &[f64], hl_ohc_max: &[f64]) -> Result<HearingLossProfile> {
    if hl_total.len() != hl_ohc_max.len() {
        return Err(Error::ShapeMismatch {
            op: "split_hearing_loss",
            left: vec![hl_total.len()],
            right: vec![hl_ohc_max.len()],
        });
    }
    let mut hl_ohc = Vec::with_capacity(hl_total.len());
    let mut hl_ihc = Vec::with_capacity(hl_total.len());
    for (&tot, &cap) in hl_total.iter().zip(hl_ohc_max) {
        if tot < 0.0 {
            return Err(Error::invalid(format!("negative hearing loss: {tot}")));
        }
        let ohc = (2.0 / 3.0 * tot).min(cap);
        hl_ohc.push(ohc);
        hl_ihc.push(tot - ohc);
    }
    Ok(HearingLossProfile {
        hl_total: hl_total.to_vec(),
        hl_ohc,
        hl_ihc,
        hl_ohc_max: hl_ohc_max.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_threshold_range() {
        assert!(Audiogram::new([0.0; 10]).is_ok());
        let mut t = [0.0; 10];
        t[3] = 106.0;
        assert!(Audiogram::new(t).is_err());
        t[3] = -1.0;
        assert!(Audiogram::new(t).is_err());
    }

    #[test]
    fn json_roundtrip_and_frequency_check() {
        let a = Audiogram::new([10., 10., 15., 20., 30., 40., 50., 60., 70., 80.]).unwrap();
        let j = a.to_json();
        assert_eq!(Audiogram::from_json(&j).unwrap(), a);
        let tampered = j.replace("250", "251");
        assert!(Audiogram::from_json(&tampered).is_err());
    }

    #[test]
    fn interpolation_identity_at_knots_and_edge_hold() {
        let a = Audiogram::new([5., 10., 15., 20., 25., 30., 35., 40., 45., 50.]).unwrap();
        let v = interpolate_audiogram(&a, &[1000.0]);
        assert_eq!(v[0], 25.0);
        // below the lowest knot: hold
        assert_eq!(interpolate_audiogram(&a, &[80.0])[0], 5.0);
        // above the highest knot: hold
        assert_eq!(interpolate_audiogram(&a, &[7643.0])[0], 50.0);
        // all-zero audiogram stays zero everywhere
        let z = interpolate_audiogram(&Audiogram::nh(), &[80.0, 333.0, 1234.0, 7000.0]);
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn interpolation_is_log_frequency_linear() {
        let a = Audiogram::new([0., 0., 0., 0., 10., 30., 0., 0., 0., 0.]).unwrap();
        // midpoint between 1000 and 1500 on the log axis is sqrt(1.5e6)
        let mid = (1000.0f64 * 1500.0).sqrt();
        let v = interpolate_audiogram(&a, &[mid])[0];
        assert!((v - 20.0).abs() < 1e-9);
    }

    #[test]
    fn split_examples() {
        let p = split_hearing_loss(&[60.0], &[50.0]).unwrap();
        assert_eq!((p.hl_ohc[0], p.hl_ihc[0]), (40.0, 20.0));
        let p = split_hearing_loss(&[90.0], &[50.0]).unwrap();
        assert_eq!((p.hl_ohc[0], p.hl_ihc[0]), (50.0, 40.0));
        let p = split_hearing_loss(&[0.0], &[50.0]).unwrap();
        assert_eq!((p.hl_ohc[0], p.hl_ihc[0]), (0.0, 0.0));
        assert!(split_hearing_loss(&[-1.0], &[50.0]).is_err());
    }

    #[test]
    fn split_invariants_hold_on_random_pairs() {
        let mut state = 77u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        for _ in 0..1000 {
            let tot = next() * 105.0;
            let cap = next() * 70.0;
            let p = split_hearing_loss(&[tot], &[cap]).unwrap();
            assert!((p.hl_ohc[0] - (2.0 / 3.0 * tot).min(cap)).abs() < 1e-12);
            assert!((p.hl_ihc[0] - (tot - p.hl_ohc[0])).abs() < 1e-12);
            assert!(p.hl_ihc[0] >= 0.0);
            assert!(p.hl_ohc[0] <= cap);
        }
    }
}
