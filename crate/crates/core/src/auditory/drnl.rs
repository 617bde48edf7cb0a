//! Per-channel DRNL filterbank parameters, shipped as a data table so the
//! model stays reproducible and swappable.

use crate::signal::{erb_rate, erb_space};
use crate::{Error, Result};

/// Parameters of one DRNL channel.
///
/// The linear path is `g_lin * gammatone^gt_lin * lowpass^lp_lin_casc`; the
/// nonlinear path is `gammatone^gt_nl_pre * broken_stick(a, b, c) *
/// gammatone^gt_nl_post * lowpass^lp_nl_casc`. All filters are 32 ms FIR,
/// gammatones peak-normalized at `fc`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrnlChannelParams {
    pub fc: f64,
    pub g_lin: f64,
    /// Low-level (linear-branch) gain of the broken stick.
    pub a: f64,
    /// Compressive-branch gain.
    pub b: f64,
    /// Compressive exponent, 0 < c < 1.
    pub c: f64,
    pub gt_lin: usize,
    pub gt_nl_pre: usize,
    pub gt_nl_post: usize,
    pub lp_lin_cutoff: f64,
    pub lp_lin_casc: usize,
    pub lp_nl_cutoff: f64,
    pub lp_nl_casc: usize,
    pub source: String,
}

impl DrnlChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::invalid(format!(
                "compression exponent must be in (0,1), got {}",
                self.c
            )));
        }
        if self.g_lin <= 0.0 || self.a <= 0.0 || self.b <= 0.0 {
            return Err(Error::invalid("DRNL gains must be positive"));
        }
        if !(self.fc > 0.0 && self.fc < 8000.0) {
            return Err(Error::invalid(format!("fc out of band: {}", self.fc)));
        }
        Ok(())
    }

    /// Input amplitude at which the two broken-stick branches meet
    /// (for unit OHC gain): `(b/a)^(1/(1-c))`.
    pub fn knee_amplitude(&self) -> f64 {
        (self.b / self.a).powf(1.0 / (1.0 - self.c))
    }
}

/// The full per-channel parameter table.
#[derive(Debug, Clone, PartialEq)]
pub struct DrnlTable {
    pub channels: Vec<DrnlChannelParams>,
}

impl DrnlTable {
    /// The standard 31-channel table. Center frequencies are spaced one unit
    /// apart on the ERB-rate scale between 80 and 7643 Hz. The broken-stick
    /// shape follows the human DRNL fits (c = 0.25, low-level gain growing
    /// with fc), with gain intercepts renormalized to this crate's unit-peak
    /// FIR convention: the knee sits at -65 dBFS at the nonlinear-path input
    /// and the nonlinear/linear low-level gain ratio ramps from 35 dB at the
    /// lowest channel to 60 dB at the highest.
    pub fn standard() -> Self {
        let fcs = erb_space(crate::auditory::F_LO, crate::auditory::F_HI, crate::auditory::N_CHANNELS)
            .expect("standard ERB grid");
        let e_lo = erb_rate(crate::auditory::F_LO).unwrap();
        let e_hi = erb_rate(crate::auditory::F_HI).unwrap();
        let channels = fcs
            .iter()
            .map(|&fc| {
                let frac = (erb_rate(fc).unwrap() - e_lo) / (e_hi - e_lo);
                let ratio_db = 35.0 + 25.0 * frac;
                // low-level path gains at fc: nonlinear a * 0.5 (one lowpass
                // stage at cutoff fc), linear 1.0 * 0.25 (two stages), so the
                // gain ratio is 2a
                let a = 10f64.powf(ratio_db / 20.0) / 2.0;
                let c = 0.25;
                // knee at -65 dBFS: b = a * knee^(1-c)
                let b = a * 10f64.powf(-65.0 * (1.0 - c) / 20.0);
                DrnlChannelParams {
                    fc,
                    g_lin: 1.0,
                    a,
                    b,
                    c,
                    gt_lin: 2,
                    gt_nl_pre: 2,
                    gt_nl_post: 2,
                    lp_lin_cutoff: fc,
                    lp_lin_casc: 2,
                    lp_nl_cutoff: fc,
                    lp_nl_casc: 1,
                    source: "human DRNL broken-stick fits, unit-peak FIR renormalization".into(),
                }
            })
            .collect();
        Self { channels }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn center_freqs(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.fc).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::invalid("empty DRNL table"));
        }
        for ch in &self.channels {
            ch.validate()?;
        }
        Ok(())
    }

    /// Tab-separated serialization, one row per channel.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "fc_hz\tg_lin\ta\tb\tc\tgt_lin\tgt_nl_pre\tgt_nl_post\tlp_lin_cutoff_hz\tlp_lin_casc\tlp_nl_cutoff_hz\tlp_nl_casc\tsource\n",
        );
        for ch in &self.channels {
            out.push_str(&format!(
                "{:.6}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.6}\t{}\t{}\t{}\t{:.6}\t{}\t{:.6}\t{}\t{}\n",
                ch.fc,
                ch.g_lin,
                ch.a,
                ch.b,
                ch.c,
                ch.gt_lin,
                ch.gt_nl_pre,
                ch.gt_nl_post,
                ch.lp_lin_cutoff,
                ch.lp_lin_casc,
                ch.lp_nl_cutoff,
                ch.lp_nl_casc,
                ch.source
            ));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty DRNL table file"))?;
        if !header.starts_with("fc_hz\t") {
            return Err(Error::invalid("DRNL table: missing header row"));
        }
        let mut channels = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 13 {
                return Err(Error::invalid(format!(
                    "DRNL table row {}: expected 13 fields, got {}",
                    i + 2,
                    f.len()
                )));
            }
            let num = |s: &str, what: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::invalid(format!("DRNL table: bad {what}: {s}")))
            };
            let int = |s: &str, what: &str| -> Result<usize> {
                s.parse()
                    .map_err(|_| Error::invalid(format!("DRNL table: bad {what}: {s}")))
            };
            channels.push(DrnlChannelParams {
                fc: num(f[0], "fc")?,
                g_lin: num(f[1], "g_lin")?,
                a: num(f[2], "a")?,
                b: num(f[3], "b")?,
                c: num(f[4], "c")?,
                gt_lin: int(f[5], "gt_lin")?,
                gt_nl_pre: int(f[6], "gt_nl_pre")?,
                gt_nl_post: int(f[7], "gt_nl_post")?,
                lp_lin_cutoff: num(f[8], "lp_lin_cutoff")?,
                lp_lin_casc: int(f[9], "lp_lin_casc")?,
                lp_nl_cutoff: num(f[10], "lp_nl_cutoff")?,
                lp_nl_casc: int(f[11], "lp_nl_casc")?,
                source: f[12].to_string(),
            });
        }
        let table = Self { channels };
        table.validate()?;
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_table_is_valid_and_erb_spaced() {
        let t = DrnlTable::standard();
        assert_eq!(t.n_channels(), 31);
        t.validate().unwrap();
        let fcs = t.center_freqs();
        assert!((fcs[0] - 80.0).abs() < 0.01);
        assert!((fcs[30] - 7643.0).abs() < 0.01);
        for ch in &t.channels {
            assert!(ch.c > 0.0 && ch.c < 1.0);
            assert!(ch.a > ch.g_lin, "nonlinear path dominates at low level");
            // knee at -65 dBFS by construction
            assert!((20.0 * ch.knee_amplitude().log10() + 65.0).abs() < 1e-6);
        }
    }

    #[test]
    fn tsv_roundtrip() {
        let t = DrnlTable::standard();
        let tsv = t.to_tsv();
        let back = DrnlTable::from_tsv(&tsv).unwrap();
        assert_eq!(back.n_channels(), 31);
        for (a, b) in back.channels.iter().zip(&t.channels) {
            assert!((a.fc - b.fc).abs() < 1e-5);
            assert!((a.a - b.a).abs() / b.a < 1e-10);
            assert_eq!(a.gt_nl_pre, b.gt_nl_pre);
        }
    }

    #[test]
    fn tsv_rejects_malformed_rows() {
        assert!(DrnlTable::from_tsv("").is_err());
        assert!(DrnlTable::from_tsv("wrong\theader\n").is_err());
        let good = DrnlTable::standard().to_tsv();
        let truncated: String = good
            .lines()
            .map(|l| l.rsplit_once('\t').map(|(a, _)| a).unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(DrnlTable::from_tsv(&truncated).is_err());
    }
}
