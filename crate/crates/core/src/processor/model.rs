//! The band-split recurrent speech processor.
//!
//! Pipeline: STFT -> band-split encoding -> L dual-path layers (time LSTM,
//! then bidirectional band LSTM, both residual) with FiLM audiogram
//! conditioning -> per-band mask+residual decoding for each enabled head ->
//! iSTFT. The STFT/iSTFT are expressed through tape primitives (framing,
//! windowing, DFT matrices) so the whole forward pass is differentiable.

use ndarray::IxDyn;

use super::bands::BandSplitSpec;
use super::config::{HeadKind, ProcessorConfig};
use crate::auditory::Audiogram;
use crate::autodiff::{concat, lstm_sequence, Arr, BoundParams, LstmWeights, Tensor};
use crate::signal::{hann_window, window_square_envelope};
use crate::{Error, Result};

/// Complex mask and residual spectrogram of one head, stored as real pairs
/// of shape `[T, F]`.
pub struct HeadOutput {
    pub mask_re: Tensor,
    pub mask_im: Tensor,
    pub residual_re: Tensor,
    pub residual_im: Tensor,
}

/// Per-head output signals of a forward pass.
pub struct HeadsOut {
    pub nr: Option<Tensor>,
    pub hlc: Option<Tensor>,
}

impl HeadsOut {
    pub fn head(&self, kind: HeadKind) -> Option<&Tensor> {
        match kind {
            HeadKind::Nr => self.nr.as_ref(),
            HeadKind::Hlc => self.hlc.as_ref(),
        }
    }
}

pub struct Processor {
    cfg: ProcessorConfig,
    bands: BandSplitSpec,
    window: Tensor,
    dft_cos: Tensor,
    dft_sin: Tensor,
    syn_cos: Tensor,
    syn_sin: Tensor,
}

impl Processor {
    pub fn new(cfg: ProcessorConfig) -> Result<Self> {
        cfg.validate()?;
        let bands = cfg.band_spec()?;
        let flen = cfg.stft.frame_len;
        let n_bins = cfg.stft.bins();
        let win = hann_window(flen);
        let window = Tensor::from_vec(win);
        // analysis: X[t,f] = sum_n frame[t,n] w[n] e^{-j 2 pi f n / flen}
        let mut cos_m = Arr::zeros(IxDyn(&[flen, n_bins]));
        let mut sin_m = Arr::zeros(IxDyn(&[flen, n_bins]));
        // synthesis: frame[t,n] = sum_f scale_f (re cos + im (-sin))
        let mut syn_c = Arr::zeros(IxDyn(&[n_bins, flen]));
        let mut syn_s = Arr::zeros(IxDyn(&[n_bins, flen]));
        for f in 0..n_bins {
            let scale = if f == 0 || f == n_bins - 1 { 1.0 } else { 2.0 } / flen as f64;
            for n in 0..flen {
                let ang = 2.0 * std::f64::consts::PI * (f * n) as f64 / flen as f64;
                cos_m[IxDyn(&[n, f])] = ang.cos();
                sin_m[IxDyn(&[n, f])] = -ang.sin();
                syn_c[IxDyn(&[f, n])] = scale * ang.cos();
                syn_s[IxDyn(&[f, n])] = -scale * ang.sin();
            }
        }
        Ok(Self {
            cfg,
            bands,
            window,
            dft_cos: Tensor::constant(cos_m),
            dft_sin: Tensor::constant(sin_m),
            syn_cos: Tensor::constant(syn_c),
            syn_sin: Tensor::constant(syn_s),
        })
    }

    pub fn config(&self) -> &ProcessorConfig {
        &self.cfg
    }

    pub fn bands(&self) -> &BandSplitSpec {
        &self.bands
    }

    /// Differentiable STFT: returns `(re, im)` of shape `[T, F]`.
    pub fn stft_pair(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let frames = x.frame(self.cfg.stft.frame_len, self.cfg.stft.hop)?;
        let wf = frames.mul(&self.window)?;
        Ok((wf.matmul(&self.dft_cos)?, wf.matmul(&self.dft_sin)?))
    }

    /// Differentiable iSTFT (windowed overlap-add with window-square
    /// normalization), truncated to `out_len` samples.
    pub fn istft_signal(&self, re: &Tensor, im: &Tensor, out_len: usize) -> Result<Tensor> {
        let frames = re
            .matmul(&self.syn_cos)?
            .add(&im.matmul(&self.syn_sin)?)?;
        let wf = frames.mul(&self.window)?;
        let ola = wf.overlap_add(self.cfg.stft.hop)?;
        let t = re.shape()[0];
        let env = window_square_envelope(&self.cfg.stft, t);
        let inv_env = Tensor::from_vec(env.iter().map(|&e| 1.0 / e).collect());
        let y = ola.mul(&inv_env)?;
        y.slice(0, 0, out_len)
    }

    /// Band-split encoding: per band, layer-normalize the concatenated
    /// real/imaginary bins and map them to N channels. Returns `[K, T, N]`.
    pub fn band_split(&self, p: &BoundParams, re: &Tensor, im: &Tensor) -> Result<Tensor> {
        let t = re.shape()[0];
        let n = self.cfg.channels;
        let mut rows = Vec::with_capacity(self.bands.n_bands());
        for k in 0..self.bands.n_bands() {
            let r = self.bands.band_bins(k);
            let w = r.len();
            let xr = re.slice(1, r.start, w)?;
            let xi = im.slice(1, r.start, w)?;
            let feat = concat(&[xr, xi], 1)?;
            let normed = layer_norm_last(
                &feat,
                p.get(&format!("band_fc.{k}.ln.gain")),
                p.get(&format!("band_fc.{k}.ln.bias")),
            )?;
            let fc = normed
                .matmul(p.get(&format!("band_fc.{k}.w")))?
                .add(p.get(&format!("band_fc.{k}.b")))?;
            rows.push(fc.reshape(&[1, t, n])?);
        }
        concat(&rows, 0)
    }

    /// Audiogram embedding: thresholds normalized by 105, one affine layer,
    /// Tanh. Returns `[1, N]`, every component in (-1, 1).
    pub fn audiogram_embed(&self, p: &BoundParams, a: &Audiogram) -> Result<Tensor> {
        let normed: Vec<f64> = a.thresholds().iter().map(|&t| t / 105.0).collect();
        let input = Tensor::constant(Arr::from_shape_vec(IxDyn(&[1, 10]), normed).unwrap());
        Ok(input
            .matmul(p.get("agram_embed.w"))?
            .add(p.get("agram_embed.b"))?
            .tanh())
    }

    /// FiLM conditioning for layer `l`: `gamma (.) h + beta`, with
    /// `gamma = 1 + embed . Wg + bg` so zero-initialized projections give the
    /// identity.
    pub fn film_condition(
        &self,
        p: &BoundParams,
        layer: usize,
        h: &Tensor,
        embed: &Tensor,
    ) -> Result<Tensor> {
        let gamma = embed
            .matmul(p.get(&format!("film.{layer}.gamma.w")))?
            .add(p.get(&format!("film.{layer}.gamma.b")))?
            .add_scalar(1.0);
        let beta = embed
            .matmul(p.get(&format!("film.{layer}.beta.w")))?
            .add(p.get(&format!("film.{layer}.beta.b")))?;
        h.mul(&gamma)?.add(&beta)
    }

    /// One dual-path layer: residual time-direction LSTM sub-block
    /// (unidirectional, causal) followed by a residual band-direction
    /// sub-block (bidirectional). Shape-preserving on `[K, T, N]`.
    pub fn dual_path_layer(&self, p: &BoundParams, layer: usize, h: &Tensor) -> Result<Tensor> {
        let (k, t, n) = (h.shape()[0], h.shape()[1], h.shape()[2]);
        // time sub-block
        let ln = layer_norm_last(
            h,
            p.get(&format!("layer.{layer}.time_ln.gain")),
            p.get(&format!("layer.{layer}.time_ln.bias")),
        )?;
        let time_w = LstmWeights {
            w: p.get(&format!("layer.{layer}.time_lstm.w")).clone(),
            b: p.get(&format!("layer.{layer}.time_lstm.b")).clone(),
        };
        let hidden = time_w.hidden_dim();
        let steps: Vec<Tensor> = (0..t)
            .map(|ti| ln.slice(1, ti, 1)?.reshape(&[k, n]))
            .collect::<Result<_>>()?;
        let outs = lstm_sequence(&steps, &time_w, false)?;
        let stacked: Vec<Tensor> = outs
            .into_iter()
            .map(|o| o.reshape(&[k, 1, hidden]))
            .collect::<Result<_>>()?;
        let seq = concat(&stacked, 1)?; // [K, T, H]
        let proj = seq
            .reshape(&[k * t, hidden])?
            .matmul(p.get(&format!("layer.{layer}.time_fc.w")))?
            .reshape(&[k, t, n])?
            .add(p.get(&format!("layer.{layer}.time_fc.b")))?;
        let h = h.add(&proj)?;

        // band sub-block
        let ln2 = layer_norm_last(
            &h,
            p.get(&format!("layer.{layer}.band_ln.gain")),
            p.get(&format!("layer.{layer}.band_ln.bias")),
        )?;
        let fwd_w = LstmWeights {
            w: p.get(&format!("layer.{layer}.band_lstm.fwd.w")).clone(),
            b: p.get(&format!("layer.{layer}.band_lstm.fwd.b")).clone(),
        };
        let bwd_w = LstmWeights {
            w: p.get(&format!("layer.{layer}.band_lstm.bwd.w")).clone(),
            b: p.get(&format!("layer.{layer}.band_lstm.bwd.b")).clone(),
        };
        let bsteps: Vec<Tensor> = (0..k)
            .map(|ki| ln2.slice(0, ki, 1)?.reshape(&[t, n]))
            .collect::<Result<_>>()?;
        let fwd = lstm_sequence(&bsteps, &fwd_w, false)?;
        let bwd = lstm_sequence(&bsteps, &bwd_w, true)?;
        let joined: Vec<Tensor> = fwd
            .into_iter()
            .zip(bwd)
            .map(|(f, b)| concat(&[f, b], 1)?.reshape(&[1, t, 2 * hidden]))
            .collect::<Result<_>>()?;
        let seq2 = concat(&joined, 0)?; // [K, T, 2H]
        let proj2 = seq2
            .reshape(&[k * t, 2 * hidden])?
            .matmul(p.get(&format!("layer.{layer}.band_fc.w")))?
            .reshape(&[k, t, n])?
            .add(p.get(&format!("layer.{layer}.band_fc.b")))?;
        h.add(&proj2)
    }

    /// Mask estimation for one head: per band, an MLP maps the N channels to
    /// mask and residual real/imaginary parts for the band's bins.
    pub fn mask_estimate(&self, p: &BoundParams, h: &Tensor, head: HeadKind) -> Result<HeadOutput> {
        let hs = head.as_str();
        let (k, t, n) = (h.shape()[0], h.shape()[1], h.shape()[2]);
        debug_assert_eq!(k, self.bands.n_bands());
        let mut m_re = Vec::with_capacity(k);
        let mut m_im = Vec::with_capacity(k);
        let mut r_re = Vec::with_capacity(k);
        let mut r_im = Vec::with_capacity(k);
        for ki in 0..k {
            let w = self.bands.band_width(ki);
            let hk = h.slice(0, ki, 1)?.reshape(&[t, n])?;
            let normed = layer_norm_last(
                &hk,
                p.get(&format!("head.{hs}.band.{ki}.ln.gain")),
                p.get(&format!("head.{hs}.band.{ki}.ln.bias")),
            )?;
            let hidden = normed
                .matmul(p.get(&format!("head.{hs}.band.{ki}.fc1.w")))?
                .add(p.get(&format!("head.{hs}.band.{ki}.fc1.b")))?
                .tanh();
            let out = hidden
                .matmul(p.get(&format!("head.{hs}.band.{ki}.fc2.w")))?
                .add(p.get(&format!("head.{hs}.band.{ki}.fc2.b")))?;
            m_re.push(out.slice(1, 0, w)?);
            m_im.push(out.slice(1, w, w)?);
            r_re.push(out.slice(1, 2 * w, w)?);
            r_im.push(out.slice(1, 3 * w, w)?);
        }
        Ok(HeadOutput {
            mask_re: concat(&m_re, 1)?,
            mask_im: concat(&m_im, 1)?,
            residual_re: concat(&r_re, 1)?,
            residual_im: concat(&r_im, 1)?,
        })
    }

    /// `Y = M (.) X + R` in the complex spectrogram domain, then iSTFT.
    fn head_signal(
        &self,
        out: &HeadOutput,
        re: &Tensor,
        im: &Tensor,
        out_len: usize,
    ) -> Result<Tensor> {
        let y_re = out
            .mask_re
            .mul(re)?
            .sub(&out.mask_im.mul(im)?)?
            .add(&out.residual_re)?;
        let y_im = out
            .mask_re
            .mul(im)?
            .add(&out.mask_im.mul(re)?)?
            .add(&out.residual_im)?;
        self.istft_signal(&y_re, &y_im, out_len)
    }

    /// Full forward pass. The audiogram must be present exactly when
    /// audiogram conditioning is enabled. Output signals have the same
    /// length as the input.
    pub fn forward(
        &self,
        p: &BoundParams,
        x: &Tensor,
        audiogram: Option<&Audiogram>,
    ) -> Result<HeadsOut> {
        if self.cfg.audiogram_conditioning && audiogram.is_none() {
            return Err(Error::invalid(
                "this processor is audiogram-conditioned: an audiogram is required",
            ));
        }
        if !self.cfg.audiogram_conditioning && audiogram.is_some() {
            return Err(Error::invalid(
                "this processor has no audiogram conditioning: audiogram must be absent",
            ));
        }
        let orig_len = x.len();
        let flen = self.cfg.stft.frame_len;
        let hop = self.cfg.stft.hop;
        if orig_len < flen {
            return Err(Error::InputTooShort {
                got: orig_len,
                need: flen,
            });
        }
        // pad so overlap-add covers the whole signal
        let rem = (orig_len - flen) % hop;
        let x_pad = if rem == 0 {
            x.clone()
        } else {
            concat(&[x.clone(), Tensor::zeros(&[hop - rem])], 0)?
        };
        let (re, im) = self.stft_pair(&x_pad)?;
        let mut h = self.band_split(p, &re, &im)?;
        let embed = match audiogram {
            Some(a) => Some(self.audiogram_embed(p, a)?),
            None => None,
        };
        for l in 0..self.cfg.layers {
            if let Some(e) = &embed {
                h = self.film_condition(p, l, &h, e)?;
            }
            h = self.dual_path_layer(p, l, &h)?;
        }
        let mut nr = None;
        let mut hlc = None;
        for head in self.cfg.enabled_heads() {
            let mask = self.mask_estimate(p, &h, head)?;
            let sig = self.head_signal(&mask, &re, &im, orig_len)?;
            match head {
                HeadKind::Nr => nr = Some(sig),
                HeadKind::Hlc => hlc = Some(sig),
            }
        }
        Ok(HeadsOut { nr, hlc })
    }
}

/// Layer normalization over the last axis with learned gain and bias.
pub fn layer_norm_last(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let axis = x.shape().len() - 1;
    let mu = x.mean_axis(axis);
    let centered = x.sub(&mu)?;
    let var = centered.mul(&centered)?.mean_axis(axis);
    let y = centered.div(&var.add_scalar(1e-5).sqrt())?;
    y.mul(gain)?.add(bias)
}
