//! Processor configuration and parameter initialization.

use ndarray::IxDyn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bands::BandSplitSpec;
use crate::autodiff::{Arr, ParamSet};
use crate::signal::StftConfig;
use crate::{Error, Result};

/// Which output signals the processor produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSet {
    pub nr: bool,
    pub hlc: bool,
}

impl HeadSet {
    pub fn nr_only() -> Self {
        Self { nr: true, hlc: false }
    }

    pub fn hlc_only() -> Self {
        Self { nr: false, hlc: true }
    }

    pub fn dual() -> Self {
        Self { nr: true, hlc: true }
    }

    pub fn count(&self) -> usize {
        usize::from(self.nr) + usize::from(self.hlc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Nr,
    Hlc,
}

impl HeadKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeadKind::Nr => "NR",
            HeadKind::Hlc => "HLC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessorConfig {
    pub stft: StftConfig,
    /// Band edges in Hz; `None` selects the default 27-band schedule.
    pub band_edges_hz: Option<Vec<f64>>,
    /// Feature channels N.
    pub channels: usize,
    /// Dual-path layers L.
    pub layers: usize,
    /// LSTM hidden size (time direction and each band direction).
    pub lstm_hidden: usize,
    /// Hidden width of the per-band mask MLPs.
    pub head_hidden: usize,
    pub heads: HeadSet,
    pub audiogram_conditioning: bool,
}

impl ProcessorConfig {
    /// Paper-scale configuration: N=64, L=6, 27 bands.
    pub fn paper(heads: HeadSet, audiogram_conditioning: bool) -> Self {
        let n = 64;
        Self {
            stft: StftConfig::default(),
            band_edges_hz: None,
            channels: n,
            layers: 6,
            lstm_hidden: 2 * n,
            head_hidden: 8 * n,
            heads,
            audiogram_conditioning,
        }
    }

    /// Desk-scale default: N=16, L=2, same 27 bands.
    pub fn desk(heads: HeadSet, audiogram_conditioning: bool) -> Self {
        let n = 16;
        Self {
            stft: StftConfig::default(),
            band_edges_hz: None,
            channels: n,
            layers: 2,
            lstm_hidden: 2 * n,
            head_hidden: 8 * n,
            heads,
            audiogram_conditioning,
        }
    }

    /// Minimal configuration for gradient checks: K=3 bands, N=4, L=1.
    pub fn tiny(heads: HeadSet, audiogram_conditioning: bool) -> Self {
        Self {
            stft: StftConfig::default(),
            band_edges_hz: Some(vec![0.0, 2000.0, 5000.0, 8000.0]),
            channels: 4,
            layers: 1,
            lstm_hidden: 8,
            head_hidden: 32,
            heads,
            audiogram_conditioning,
        }
    }

    pub fn band_spec(&self) -> Result<BandSplitSpec> {
        match &self.band_edges_hz {
            Some(e) => BandSplitSpec::new(e.clone(), &self.stft),
            None => Ok(BandSplitSpec::default_27(&self.stft)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.layers == 0 || self.lstm_hidden == 0 || self.head_hidden == 0
        {
            return Err(Error::invalid("processor sizes must be positive"));
        }
        if self.heads.count() == 0 {
            return Err(Error::invalid("at least one head must be enabled"));
        }
        self.band_spec()?;
        Ok(())
    }

    pub fn enabled_heads(&self) -> Vec<HeadKind> {
        let mut v = Vec::new();
        if self.heads.nr {
            v.push(HeadKind::Nr);
        }
        if self.heads.hlc {
            v.push(HeadKind::Hlc);
        }
        v
    }
}

/// Initializes the full named parameter collection for a configuration.
///
/// Matrices draw from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); layer-norm
/// gains are 1 and biases 0; LSTM forget-gate biases start at 1; FiLM
/// projections start at zero so conditioning begins as identity; the final
/// mask projections start near zero with the real-mask bias at 1, so the
/// initial processor is approximately the identity map on the input
/// spectrogram.
pub fn init_params(cfg: &ProcessorConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let bands = cfg.band_spec()?;
    let k = bands.n_bands();
    let n = cfg.channels;
    let h = cfg.lstm_hidden;
    let p_hidden = cfg.head_hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();

    let mut uniform = |shape: &[usize], scale: f64| -> Arr {
        let count: usize = shape.iter().product();
        Arr::from_shape_vec(
            IxDyn(shape),
            (0..count).map(|_| rng.random_range(-scale..scale)).collect(),
        )
        .unwrap()
    };

    for ki in 0..k {
        let w2 = 2 * bands.band_width(ki);
        params.insert(format!("band_fc.{ki}.ln.gain"), Arr::from_elem(IxDyn(&[w2]), 1.0));
        params.insert(format!("band_fc.{ki}.ln.bias"), Arr::zeros(IxDyn(&[w2])));
        let s = 1.0 / (w2 as f64).sqrt();
        params.insert(format!("band_fc.{ki}.w"), uniform(&[w2, n], s));
        params.insert(format!("band_fc.{ki}.b"), Arr::zeros(IxDyn(&[n])));
    }

    if cfg.audiogram_conditioning {
        let s = 1.0 / (10f64).sqrt();
        params.insert("agram_embed.w", uniform(&[10, n], s));
        params.insert("agram_embed.b", Arr::zeros(IxDyn(&[n])));
    }

    for l in 0..cfg.layers {
        if cfg.audiogram_conditioning {
            // zero-initialized FiLM: gamma = 1 + 0, beta = 0 (identity)
            params.insert(format!("film.{l}.gamma.w"), Arr::zeros(IxDyn(&[n, n])));
            params.insert(format!("film.{l}.gamma.b"), Arr::zeros(IxDyn(&[n])));
            params.insert(format!("film.{l}.beta.w"), Arr::zeros(IxDyn(&[n, n])));
            params.insert(format!("film.{l}.beta.b"), Arr::zeros(IxDyn(&[n])));
        }
        let s_in = 1.0 / ((n + h) as f64).sqrt();
        params.insert(format!("layer.{l}.time_ln.gain"), Arr::from_elem(IxDyn(&[n]), 1.0));
        params.insert(format!("layer.{l}.time_ln.bias"), Arr::zeros(IxDyn(&[n])));
        params.insert(format!("layer.{l}.time_lstm.w"), uniform(&[n + h, 4 * h], s_in));
        params.insert(format!("layer.{l}.time_lstm.b"), forget_bias(h));
        let s_h = 1.0 / (h as f64).sqrt();
        params.insert(format!("layer.{l}.time_fc.w"), uniform(&[h, n], s_h));
        params.insert(format!("layer.{l}.time_fc.b"), Arr::zeros(IxDyn(&[n])));

        params.insert(format!("layer.{l}.band_ln.gain"), Arr::from_elem(IxDyn(&[n]), 1.0));
        params.insert(format!("layer.{l}.band_ln.bias"), Arr::zeros(IxDyn(&[n])));
        params.insert(format!("layer.{l}.band_lstm.fwd.w"), uniform(&[n + h, 4 * h], s_in));
        params.insert(format!("layer.{l}.band_lstm.fwd.b"), forget_bias(h));
        params.insert(format!("layer.{l}.band_lstm.bwd.w"), uniform(&[n + h, 4 * h], s_in));
        params.insert(format!("layer.{l}.band_lstm.bwd.b"), forget_bias(h));
        let s_2h = 1.0 / ((2 * h) as f64).sqrt();
        params.insert(format!("layer.{l}.band_fc.w"), uniform(&[2 * h, n], s_2h));
        params.insert(format!("layer.{l}.band_fc.b"), Arr::zeros(IxDyn(&[n])));
    }

    for head in cfg.enabled_heads() {
        let hs = head.as_str();
        for ki in 0..k {
            let w = bands.band_width(ki);
            params.insert(format!("head.{hs}.band.{ki}.ln.gain"), Arr::from_elem(IxDyn(&[n]), 1.0));
            params.insert(format!("head.{hs}.band.{ki}.ln.bias"), Arr::zeros(IxDyn(&[n])));
            let s1 = 1.0 / (n as f64).sqrt();
            params.insert(format!("head.{hs}.band.{ki}.fc1.w"), uniform(&[n, p_hidden], s1));
            params.insert(format!("head.{hs}.band.{ki}.fc1.b"), Arr::zeros(IxDyn(&[p_hidden])));
            // near-identity start: small final weights, real-mask bias of 1
            let s2 = 0.01 / (p_hidden as f64).sqrt();
            params.insert(format!("head.{hs}.band.{ki}.fc2.w"), uniform(&[p_hidden, 4 * w], s2));
            let mut b2 = Arr::zeros(IxDyn(&[4 * w]));
            for i in 0..w {
                b2[IxDyn(&[i])] = 1.0;
            }
            params.insert(format!("head.{hs}.band.{ki}.fc2.b"), b2);
        }
    }

    Ok(params)
}

fn forget_bias(h: usize) -> Arr {
    // gate order [input, forget, candidate, output]
    let mut b = Arr::zeros(IxDyn(&[4 * h]));
    for i in h..2 * h {
        b[IxDyn(&[i])] = 1.0;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_scale_dual_head_parameter_count() {
        let cfg = ProcessorConfig::paper(HeadSet::dual(), true);
        let params = init_params(&cfg, 0).unwrap();
        let count = params.total_elements();
        assert_eq!(count, 4_874_252, "schedule arithmetic changed: {count}");
    }

    #[test]
    fn tiny_config_matches_hand_count() {
        let cfg = ProcessorConfig::tiny(HeadSet::nr_only(), true);
        let params = init_params(&cfg, 0).unwrap();
        // hand count for K=3 (widths 64/96/97), N=4, H=8, P=32:
        // band_fc: ln 2*514 + w 4*514 + b 12             = 3096
        // agram: 10*4+4                                  = 44
        // film: 2*(16+4)                                 = 40
        // time: ln 8 + lstm (12*32+32) + fc (32+4)       = 460
        // band: ln 8 + 2*(12*32+32) + fc (16*4+4)        = 908
        // head: ln 3*8 + fc1 3*(4*32+32) + fc2 33*4*257  = 34428
        let expect = 3096 + 44 + 40 + 460 + 908 + 34428;
        assert_eq!(params.total_elements(), expect);
    }

    #[test]
    fn head_parameters_are_partitioned() {
        let dual = init_params(&ProcessorConfig::tiny(HeadSet::dual(), true), 0).unwrap();
        let single = init_params(&ProcessorConfig::tiny(HeadSet::nr_only(), true), 0).unwrap();
        let names_d: Vec<&str> = dual.iter().map(|(n, _)| n).collect();
        assert!(names_d.iter().any(|n| n.starts_with("head.NR.")));
        assert!(names_d.iter().any(|n| n.starts_with("head.HLC.")));
        let names_s: Vec<&str> = single.iter().map(|(n, _)| n).collect();
        assert!(!names_s.iter().any(|n| n.starts_with("head.HLC.")));
    }

    #[test]
    fn no_conditioning_means_no_film_parameters() {
        let p = init_params(&ProcessorConfig::tiny(HeadSet::nr_only(), false), 0).unwrap();
        assert!(!p.iter().any(|(n, _)| n.starts_with("film.") || n.starts_with("agram_")));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = ProcessorConfig::tiny(HeadSet::dual(), true);
        let a = init_params(&cfg, 7).unwrap();
        let b = init_params(&cfg, 7).unwrap();
        let c = init_params(&cfg, 8).unwrap();
        for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
        let differs = a
            .iter()
            .zip(c.iter())
            .any(|((_, x), (_, y))| x.iter().zip(y.iter()).any(|(u, v)| u != v));
        assert!(differs);
    }
}
