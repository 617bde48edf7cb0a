//! Model assembly and the differentiable forward pass.

use std::sync::Arc;

use ndarray::{Array2, IxDyn};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::audiogram::{interpolate_audiogram, split_hearing_loss, Audiogram};
use super::calibration::{LOG_COMP_G, LOG_COMP_THETA0};
use super::drnl::{DrnlChannelParams, DrnlTable};
use crate::autodiff::{concat, Arr, Tensor};
use crate::signal::{gammatone_fir, lowpass_fir, AudioSignal, FirFilter, PreparedFir};
use crate::{Error, Result};

const FIR_LEN: usize = 512;
const GAMMATONE_ORDER: usize = 4;
const IHC_LP_CUTOFF: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct AuditoryConfig {
    pub table: DrnlTable,
    /// Replace the middle-ear filter with identity (for tests).
    pub bypass_middle_ear: bool,
}

impl Default for AuditoryConfig {
    fn default() -> Self {
        Self {
            table: DrnlTable::standard(),
            bypass_middle_ear: false,
        }
    }
}

/// Prepared filters of one DRNL channel. Cascades are pre-combined into
/// single FIRs; causal truncation commutes with cascading, so this matches
/// applying the 32 ms stages in sequence.
pub struct ChannelFilters {
    pub params: DrnlChannelParams,
    pub lin: Arc<PreparedFir>,
    pub nl_pre: Arc<PreparedFir>,
    pub nl_post: Arc<PreparedFir>,
}

impl ChannelFilters {
    pub fn build(params: &DrnlChannelParams) -> Result<Self> {
        params.validate()?;
        let gt = gammatone_fir(params.fc, GAMMATONE_ORDER, FIR_LEN)?;
        let cascade_n = |f: &FirFilter, n: usize| -> Option<FirFilter> {
            let mut out: Option<FirFilter> = None;
            for _ in 0..n {
                out = Some(match out {
                    None => f.clone(),
                    Some(acc) => acc.cascade(f),
                });
            }
            out
        };
        // linear path: g_lin * GT^gt_lin * LP^lp_lin_casc
        let mut lin = cascade_n(&gt, params.gt_lin)
            .ok_or_else(|| Error::invalid("linear path needs at least one gammatone"))?;
        if params.lp_lin_casc > 0 {
            let lp = lowpass_fir(params.lp_lin_cutoff, FIR_LEN)?;
            lin = lin.cascade(&cascade_n(&lp, params.lp_lin_casc).unwrap());
        }
        for t in &mut lin.taps {
            *t *= params.g_lin;
        }
        // nonlinear path around the broken stick
        let nl_pre = cascade_n(&gt, params.gt_nl_pre)
            .ok_or_else(|| Error::invalid("nonlinear path needs a pre cascade"))?;
        let mut nl_post = cascade_n(&gt, params.gt_nl_post)
            .ok_or_else(|| Error::invalid("nonlinear path needs a post cascade"))?;
        if params.lp_nl_casc > 0 {
            let lp = lowpass_fir(params.lp_nl_cutoff, FIR_LEN)?;
            nl_post = nl_post.cascade(&cascade_n(&lp, params.lp_nl_casc).unwrap());
        }
        Ok(Self {
            params: params.clone(),
            lin: Arc::new(PreparedFir::from_filter(&lin)),
            nl_pre: Arc::new(PreparedFir::from_filter(&nl_pre)),
            nl_post: Arc::new(PreparedFir::from_filter(&nl_post)),
        })
    }

    fn broken_stick_values(&self, x: &[f64], ohc_gain: f64) -> Vec<f64> {
        let (a, b, c) = (self.params.a, self.params.b, self.params.c);
        x.iter()
            .map(|&v| {
                let m = v.abs();
                if m == 0.0 {
                    0.0
                } else {
                    v.signum() * (ohc_gain * a * m).min(b * m.powf(c))
                }
            })
            .collect()
    }

    /// Steady-state RMS of the channel output for a pure tone at `fc` with
    /// the given amplitude and OHC gain; also returns the linear-path-only
    /// RMS.
    pub fn probe_rms(&self, amplitude: f64, ohc_gain: f64) -> (f64, f64) {
        let fs = crate::SAMPLE_RATE as f64;
        let n = 6000usize;
        let probe: Vec<f64> = (0..n)
            .map(|i| amplitude * (2.0 * std::f64::consts::PI * self.params.fc * i as f64 / fs).sin())
            .collect();
        let lin = self.lin.conv_causal(&probe);
        let pre = self.nl_pre.conv_causal(&probe);
        let bs = self.broken_stick_values(&pre, ohc_gain);
        let nl = self.nl_post.conv_causal(&bs);
        let steady = 3000usize;
        let rms = |x: &[f64]| -> f64 {
            let s: f64 = x[steady..].iter().map(|v| v * v).sum();
            (s / (x.len() - steady) as f64).sqrt()
        };
        let full: Vec<f64> = lin.iter().zip(&nl).map(|(l, m)| l + m).collect();
        (rms(&full), rms(&lin))
    }
}

/// Maximum outer-hair-cell loss a channel can express: the output-level drop
/// at a low-level probe tone at `fc` when the nonlinear path is fully
/// attenuated, leaving the linear path only. Computed numerically once at
/// model construction.
pub fn compute_ohc_max(ch: &ChannelFilters) -> f64 {
    let amplitude = 1e-4; // -80 dBFS, below every knee
    let (full, _) = ch.probe_rms(amplitude, 1.0);
    // ohc gain 0 zeroes the broken stick entirely: min(0, b|x|^c) = 0
    let (lin_only, _) = ch.probe_rms(amplitude, 0.0);
    if lin_only <= 0.0 || full <= 0.0 {
        return 0.0;
    }
    (20.0 * (full / lin_only).log10()).max(0.0)
}

/// Linear-phase FIR approximation of the stapes-velocity magnitude curve,
/// fit by frequency sampling: a bandpass rising at 12 dB/oct below 500 Hz
/// and falling above 2 kHz, peak-normalized to 0 dB.
pub fn design_middle_ear() -> FirFilter {
    let len = FIR_LEN;
    let n_bins = len / 2 + 1;
    let fs = crate::SAMPLE_RATE as f64;
    let target = |f: f64| -> f64 {
        if f <= 0.0 {
            return 0.0;
        }
        let u = f / 500.0;
        let v = f / 2000.0;
        (u * u / (1.0 + u * u)) * (1.0 / (1.0 + v * v))
    };
    let delay = (len / 2) as f64;
    let mut spectrum = vec![Complex64::default(); len];
    for k in 0..n_bins {
        let f = k as f64 * fs / len as f64;
        let phase = -2.0 * std::f64::consts::PI * k as f64 * delay / len as f64;
        spectrum[k] = Complex64::from_polar(target(f), phase);
        if k > 0 && k < n_bins - 1 {
            spectrum[len - k] = spectrum[k].conj();
        }
    }
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(len);
    ifft.process(&mut spectrum);
    let window = crate::signal::hann_window(len);
    let mut taps: Vec<f64> = spectrum
        .iter()
        .zip(&window)
        .map(|(c, w)| c.re / len as f64 * w)
        .collect();
    // renormalize the realized peak to unity
    let mut filt = FirFilter::new(taps.clone());
    let mut peak = 0.0f64;
    let mut f = 100.0;
    while f <= 7900.0 {
        peak = peak.max(filt.response_at(f).norm());
        f += 10.0;
    }
    for t in &mut taps {
        *t /= peak;
    }
    filt.taps = taps;
    filt.center_freq = None;
    filt
}

/// Half-wave rectification followed by 1 kHz lowpass filtering.
pub fn ihc_transduction(x: &Tensor, lp: &Arc<PreparedFir>) -> Result<Tensor> {
    x.relu().fir_conv(lp)
}

/// Instantaneous log compression with IHC attenuation applied before the
/// knee: `y = G * ln(1 + 10^(-hl_ihc/20) * x / theta0)`. Requires `x >= 0`.
pub fn log_compression(x: &Tensor, hl_ihc_db: f64) -> Result<Tensor> {
    if x.value().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid(
            "log_compression requires non-negative input (post-rectification path)",
        ));
    }
    let ihc_gain = 10f64.powf(-hl_ihc_db / 20.0);
    Ok(x.mul_scalar(ihc_gain / LOG_COMP_THETA0)
        .add_scalar(1.0)
        .log()
        .mul_scalar(LOG_COMP_G))
}

/// The assembled auditory model. Construction (filter design, OHC caps) is
/// immutable after build; `run` is pure per call and safe to use from
/// multiple threads on separate tapes.
pub struct AuditoryModel {
    cfg: AuditoryConfig,
    center_freqs: Vec<f64>,
    middle_ear: Option<Arc<PreparedFir>>,
    channels: Vec<ChannelFilters>,
    ihc_lp: Arc<PreparedFir>,
    ohc_max_db: Vec<f64>,
}

impl AuditoryModel {
    pub fn new(cfg: AuditoryConfig) -> Result<Self> {
        cfg.table.validate()?;
        let channels: Vec<ChannelFilters> = cfg
            .table
            .channels
            .iter()
            .map(ChannelFilters::build)
            .collect::<Result<_>>()?;
        let ohc_max_db: Vec<f64> = channels.iter().map(compute_ohc_max).collect();
        let middle_ear = if cfg.bypass_middle_ear {
            None
        } else {
            Some(Arc::new(PreparedFir::from_filter(&design_middle_ear())))
        };
        Ok(Self {
            center_freqs: cfg.table.center_freqs(),
            channels,
            ihc_lp: Arc::new(PreparedFir::from_filter(&lowpass_fir(IHC_LP_CUTOFF, FIR_LEN)?)),
            ohc_max_db,
            middle_ear,
            cfg,
        })
    }

    pub fn standard() -> Result<Self> {
        Self::new(AuditoryConfig::default())
    }

    pub fn config(&self) -> &AuditoryConfig {
        &self.cfg
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn center_freqs(&self) -> &[f64] {
        &self.center_freqs
    }

    pub fn ohc_max_db(&self) -> &[f64] {
        &self.ohc_max_db
    }

    pub fn channel_filters(&self, i: usize) -> &ChannelFilters {
        &self.channels[i]
    }

    pub fn ihc_lowpass(&self) -> &Arc<PreparedFir> {
        &self.ihc_lp
    }

    /// Middle-ear stage (identity when bypassed).
    pub fn middle_ear(&self, x: &Tensor) -> Result<Tensor> {
        match &self.middle_ear {
            Some(me) => x.fir_conv(me),
            None => Ok(x.clone()),
        }
    }

    /// One DRNL channel on an (already middle-ear-filtered) signal:
    /// linear path plus broken-stick nonlinear path, with OHC loss
    /// attenuating the low-level gain by `10^(-hl_ohc/20)`.
    pub fn drnl_channel(&self, s: &Tensor, channel: usize, hl_ohc_db: f64) -> Result<Tensor> {
        let ch = &self.channels[channel];
        let ohc_gain = 10f64.powf(-hl_ohc_db / 20.0);
        let lin = s.fir_conv(&ch.lin)?;
        let nl = s
            .fir_conv(&ch.nl_pre)?
            .broken_stick(ohc_gain * ch.params.a, ch.params.b, ch.params.c)
            .fir_conv(&ch.nl_post)?;
        lin.add(&nl)
    }

    /// Full model: middle ear, 31 DRNL channels, IHC transduction, and log
    /// compression. `audiogram = None` and an all-zero audiogram produce
    /// bit-identical output (the gains are exactly 1). The result is a
    /// `[channels, samples]` internal representation; it stays on the tape
    /// when `x` does.
    pub fn run(&self, x: &Tensor, audiogram: Option<&Audiogram>) -> Result<Tensor> {
        if x.shape().len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "auditory run (input must be 1-d)",
                left: x.shape().to_vec(),
                right: vec![],
            });
        }
        let hl_total = match audiogram {
            Some(a) => interpolate_audiogram(a, &self.center_freqs),
            None => vec![0.0; self.channels.len()],
        };
        let profile = split_hearing_loss(&hl_total, &self.ohc_max_db)?;
        let s = self.middle_ear(x)?;
        let n = x.len();
        let mut rows = Vec::with_capacity(self.channels.len());
        for ci in 0..self.channels.len() {
            let summed = self.drnl_channel(&s, ci, profile.hl_ohc[ci])?;
            let ihc = ihc_transduction(&summed, &self.ihc_lp)?;
            // the lowpass can undershoot slightly below zero; clamp before
            // the log stage, which requires a non-negative domain
            let ihc = ihc.relu();
            let comp = log_compression(&ihc, profile.hl_ihc[ci])?;
            rows.push(comp.reshape(&[1, n])?);
        }
        concat(&rows, 0)
    }

    /// Gradient-free convenience wrapper returning a plain matrix.
    pub fn run_signal(&self, x: &AudioSignal, audiogram: Option<&Audiogram>) -> Result<Array2<f64>> {
        let xt = Tensor::constant(
            Arr::from_shape_vec(IxDyn(&[x.len()]), x.samples().to_vec()).unwrap(),
        );
        let rep = self.run(&xt, audiogram)?;
        let shape = (rep.shape()[0], rep.shape()[1]);
        Ok(Array2::from_shape_vec(shape, rep.value().iter().copied().collect()).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auditory::calibration::{CALIB_REFERENCE_AMPLITUDE, CALIB_THRESHOLD_AMPLITUDE};

    fn tiny_table(n: usize) -> DrnlTable {
        let std = DrnlTable::standard();
        let step = std.channels.len() / n;
        DrnlTable {
            channels: (0..n).map(|i| std.channels[i * step].clone()).collect(),
        }
    }

    fn rand_signal(n: usize, seed: u64, amp: f64) -> Vec<f64> {
        let mut state = seed.max(1);
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        (0..n).map(|_| amp * next()).collect()
    }

    #[test]
    fn nh_equivalence_is_bit_exact() {
        let model = AuditoryModel::new(AuditoryConfig {
            table: tiny_table(4),
            bypass_middle_ear: false,
        })
        .unwrap();
        let x = AudioSignal::new(rand_signal(2400, 11, 0.3)).unwrap();
        let none = model.run_signal(&x, None).unwrap();
        let zero = model.run_signal(&x, Some(&Audiogram::nh())).unwrap();
        for (a, b) in none.iter().zip(zero.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn silence_maps_to_zero_representation() {
        let model = AuditoryModel::new(AuditoryConfig {
            table: tiny_table(3),
            bypass_middle_ear: false,
        })
        .unwrap();
        let rep = model.run_signal(&AudioSignal::silence(1600), None).unwrap();
        assert!(rep.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_loss_reduces_representation_energy() {
        let model = AuditoryModel::new(AuditoryConfig {
            table: tiny_table(4),
            bypass_middle_ear: false,
        })
        .unwrap();
        // speech-ish snippet: modulated tone mixture at a healthy level
        let fs = crate::SAMPLE_RATE as f64;
        let x: Vec<f64> = (0..3200)
            .map(|i| {
                let t = i as f64 / fs;
                0.3 * (2.0 * std::f64::consts::PI * 300.0 * t).sin()
                    * (1.0 + 0.5 * (2.0 * std::f64::consts::PI * 4.0 * t).sin())
                    + 0.15 * (2.0 * std::f64::consts::PI * 1700.0 * t).sin()
            })
            .collect();
        let x = AudioSignal::new(x).unwrap();
        let nh = model.run_signal(&x, None).unwrap();
        let hi = model
            .run_signal(&x, Some(&Audiogram::new([60.0; 10]).unwrap()))
            .unwrap();
        let e_nh: f64 = nh.iter().map(|v| v * v).sum();
        let e_hi: f64 = hi.iter().map(|v| v * v).sum();
        assert!(e_hi < e_nh, "HI energy {e_hi} should be below NH {e_nh}");
    }

    #[test]
    fn ohc_max_for_identical_paths_is_about_6_db() {
        // both paths reduce to GT^2 * LP with unit gain: removing one of two
        // equal coherent contributions halves the output
        let params = DrnlChannelParams {
            fc: 1000.0,
            g_lin: 1.0,
            a: 1.0,
            b: 1e9,
            c: 0.25,
            gt_lin: 2,
            gt_nl_pre: 1,
            gt_nl_post: 1,
            lp_lin_cutoff: 1000.0,
            lp_lin_casc: 1,
            lp_nl_cutoff: 1000.0,
            lp_nl_casc: 1,
            source: "test".into(),
        };
        let ch = ChannelFilters::build(&params).unwrap();
        let m = compute_ohc_max(&ch);
        assert!((m - 6.02).abs() < 0.1, "got {m} dB");
    }

    #[test]
    fn ohc_max_grows_with_low_level_gain() {
        let base = DrnlTable::standard().channels[15].clone();
        let mut boosted = base.clone();
        boosted.a *= 4.0;
        boosted.b *= 4.0; // keep the knee put, scale the low-level gain
        let m1 = compute_ohc_max(&ChannelFilters::build(&base).unwrap());
        let m2 = compute_ohc_max(&ChannelFilters::build(&boosted).unwrap());
        assert!(m2 > m1 + 6.0, "{m1} -> {m2}");
    }

    #[test]
    fn standard_ohc_max_all_nonnegative_and_substantial() {
        let model = AuditoryModel::standard().unwrap();
        for (&m, &fc) in model.ohc_max_db().iter().zip(model.center_freqs()) {
            assert!(m >= 0.0, "ohc_max at {fc} Hz is {m}");
            assert!(m > 20.0, "ohc_max at {fc} Hz is only {m} dB");
        }
    }

    #[test]
    fn full_ohc_attenuation_approaches_linear_path() {
        // applying hl_ohc = ohc_max leaves a residual nonlinear contribution
        // of the same magnitude as the linear path, so the output sits
        // within [-0.5, +6.1] dB of linear-only (exactly +6 dB when the two
        // path responses are in phase)
        let ch = ChannelFilters::build(&DrnlTable::standard().channels[10]).unwrap();
        let m = compute_ohc_max(&ch);
        let gain = 10f64.powf(-m / 20.0);
        let amp = 1e-4;
        let (full_attenuated, lin_only) = ch.probe_rms(amp, gain);
        let rel_db = 20.0 * (full_attenuated / lin_only).log10();
        assert!(rel_db < 6.1, "residual {rel_db} dB");
        assert!(rel_db > -0.5, "residual {rel_db} dB");
    }

    #[test]
    fn drnl_growth_is_linear_then_compressive() {
        // channel nearest 1 kHz
        let model = AuditoryModel::standard().unwrap();
        let ci = model
            .center_freqs()
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - 1000.0).abs().partial_cmp(&(*b - 1000.0).abs()).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        let ch = model.channel_filters(ci);
        let level = |db: f64| 10f64.powf(db / 20.0);
        // below the -65 dBFS knee: ~1 dB/dB
        let (lo1, _) = ch.probe_rms(level(-90.0), 1.0);
        let (lo2, _) = ch.probe_rms(level(-80.0), 1.0);
        let slope_low = 20.0 * (lo2 / lo1).log10() / 10.0;
        assert!((slope_low - 1.0).abs() < 0.05, "low-level slope {slope_low}");
        // on the compressive segment: ~c dB/dB
        let (mid1, _) = ch.probe_rms(level(-45.0), 1.0);
        let (mid2, _) = ch.probe_rms(level(-25.0), 1.0);
        let slope_mid = 20.0 * (mid2 / mid1).log10() / 20.0;
        let c = ch.params.c;
        assert!(
            (slope_mid - c).abs() < 0.08,
            "mid-level slope {slope_mid}, c = {c}"
        );
    }

    #[test]
    fn middle_ear_peaks_between_500_and_2000_hz() {
        let me = design_middle_ear();
        let mut best = (0.0f64, 0.0f64);
        let mut f = 100.0;
        while f <= 7900.0 {
            let m = me.response_at(f).norm();
            if m > best.1 {
                best = (f, m);
            }
            f += 10.0;
        }
        assert!(
            (500.0..=2000.0).contains(&best.0),
            "middle ear peak at {} Hz",
            best.0
        );
        assert!((best.1 - 1.0).abs() < 0.01, "peak gain {}", best.1);
        // strong rolloff at the band edges
        assert!(me.response_at(100.0).norm() < 0.2);
        assert!(me.response_at(7500.0).norm() < 0.2);
    }

    #[test]
    fn middle_ear_bypass_is_identity_and_stage_is_linear() {
        let model = AuditoryModel::new(AuditoryConfig {
            table: tiny_table(2),
            bypass_middle_ear: true,
        })
        .unwrap();
        let x = Tensor::from_vec(rand_signal(600, 3, 0.5));
        let y = model.middle_ear(&x).unwrap();
        assert_eq!(x.value(), y.value());

        let full = AuditoryModel::new(AuditoryConfig {
            table: tiny_table(2),
            bypass_middle_ear: false,
        })
        .unwrap();
        let a = full.middle_ear(&x).unwrap();
        let b = full.middle_ear(&x.mul_scalar(2.5)).unwrap();
        for (u, v) in a.value().iter().zip(b.value().iter()) {
            assert!((2.5 * u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn ihc_rectifies_then_smooths() {
        let lp = Arc::new(PreparedFir::from_filter(&lowpass_fir(1000.0, 512).unwrap()));
        // rectification part
        let x = Tensor::from_vec(vec![-1.0, 2.0, -3.0]);
        let r = x.relu();
        assert_eq!(r.value().as_slice().unwrap(), &[0.0, 2.0, 0.0]);
        // constant positive input passes with DC gain 1 once the filter is full
        let c = Tensor::from_vec(vec![0.7; 2000]);
        let y = ihc_transduction(&c, &lp).unwrap();
        for &v in &y.value().as_slice().unwrap()[600..] {
            assert!((v - 0.7).abs() < 1e-3, "{v}");
        }
        // a 3 kHz carrier is attenuated far more than a 200 Hz carrier
        let fs = crate::SAMPLE_RATE as f64;
        let tone = |f: f64| -> Tensor {
            Tensor::from_vec(
                (0..4000)
                    .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
                    .collect(),
            )
        };
        let carrier_amp = |y: &Tensor, f: f64| -> f64 {
            // projection onto the carrier over the steady tail
            let v = y.value();
            let n0 = 1000usize;
            let mut re = 0.0;
            let mut im = 0.0;
            let mut cnt = 0.0;
            for i in n0..v.len() {
                let ph = 2.0 * std::f64::consts::PI * f * i as f64 / fs;
                let s = v[IxDyn(&[i])];
                re += s * ph.cos();
                im += s * ph.sin();
                cnt += 1.0;
            }
            2.0 * (re * re + im * im).sqrt() / cnt
        };
        let y200 = ihc_transduction(&tone(200.0), &lp).unwrap();
        let y3k = ihc_transduction(&tone(3000.0), &lp).unwrap();
        let a200 = carrier_amp(&y200, 200.0);
        let a3k = carrier_amp(&y3k, 3000.0);
        assert!(
            20.0 * (a200 / a3k).log10() > 20.0,
            "carrier attenuation only {} dB",
            20.0 * (a200 / a3k).log10()
        );
    }

    #[test]
    fn log_compression_domain_and_monotonicity() {
        assert_eq!(
            log_compression(&Tensor::from_vec(vec![0.0]), 0.0)
                .unwrap()
                .to_scalar()
                .unwrap(),
            0.0
        );
        assert!(log_compression(&Tensor::from_vec(vec![-0.1]), 0.0).is_err());
        let xs = [1e-6, 1e-4, 1e-2, 1.0];
        let mut prev = -1.0;
        for &x in &xs {
            let y = log_compression(&Tensor::from_vec(vec![x]), 0.0)
                .unwrap()
                .to_scalar()
                .unwrap();
            assert!(y > prev);
            prev = y;
        }
        // strictly decreasing in hl_ihc for x > 0
        let at = |hl: f64| {
            log_compression(&Tensor::from_vec(vec![0.05]), hl)
                .unwrap()
                .to_scalar()
                .unwrap()
        };
        assert!(at(0.0) > at(20.0));
        assert!(at(20.0) > at(60.0));
        // calibration anchors hold through the tape op
        let g = |x: f64| {
            log_compression(&Tensor::from_vec(vec![x]), 0.0)
                .unwrap()
                .to_scalar()
                .unwrap()
        };
        assert!((g(CALIB_REFERENCE_AMPLITUDE) - 1.0).abs() < 0.01);
        assert!(
            (g(CALIB_THRESHOLD_AMPLITUDE) - CALIB_THRESHOLD_AMPLITUDE.powf(1.0 / 32.0)).abs()
                / CALIB_THRESHOLD_AMPLITUDE.powf(1.0 / 32.0)
                < 0.01
        );
    }

    #[test]
    fn filterbank_is_time_shift_covariant() {
        let model = AuditoryModel::new(AuditoryConfig {
            table: tiny_table(2),
            bypass_middle_ear: true,
        })
        .unwrap();
        let k = 160usize;
        let n = 3000usize;
        let base = rand_signal(n, 17, 0.2);
        let mut shifted = vec![0.0; n];
        shifted[k..].copy_from_slice(&base[..n - k]);
        let x0 = Tensor::from_vec(base);
        let x1 = Tensor::from_vec(shifted);
        let y0 = model.drnl_channel(&x0, 1, 0.0).unwrap();
        let y1 = model.drnl_channel(&x1, 1, 0.0).unwrap();
        // compare the overlap, excluding the boundary region
        let v0 = y0.value();
        let v1 = y1.value();
        for i in 0..(n - k - 1) {
            let a = v0[IxDyn(&[i])];
            let b = v1[IxDyn(&[i + k])];
            assert!((a - b).abs() < 1e-9, "at {i}: {a} vs {b}");
        }
    }

    #[test]
    fn representation_shape_and_channel_count() {
        let model = AuditoryModel::standard().unwrap();
        assert_eq!(model.n_channels(), 31);
        let x = AudioSignal::new(rand_signal(1600, 5, 0.2)).unwrap();
        let rep = model.run_signal(&x, None).unwrap();
        assert_eq!(rep.shape(), &[31, 1600]);
        assert!(rep.iter().all(|v| v.is_finite()));
    }
}
