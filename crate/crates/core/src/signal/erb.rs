//! ERB-rate scale utilities (Glasberg-Moore).

use crate::{Error, Result};

/// ERB-rate (ERB number) of a frequency in Hz:
/// `E(f) = 21.4 * log10(1 + 0.00437 * f)`.
pub fn erb_rate(f_hz: f64) -> Result<f64> {
    if f_hz <= 0.0 || !f_hz.is_finite() {
        return Err(Error::invalid(format!(
            "erb_rate requires f > 0, got {f_hz}"
        )));
    }
    Ok(21.4 * (1.0 + 0.00437 * f_hz).log10())
}

/// Inverse of [`erb_rate`].
pub fn erb_rate_inverse(erb: f64) -> f64 {
    (10f64.powf(erb / 21.4) - 1.0) / 0.00437
}

/// Equivalent rectangular bandwidth at a center frequency in Hz:
/// `ERB(f) = 24.7 * (1 + 0.00437 * f)`.
pub fn erb_bandwidth(f_hz: f64) -> f64 {
    24.7 * (1.0 + 0.00437 * f_hz)
}

/// `n` center frequencies uniformly spaced on the ERB-rate axis, with the
/// first exactly `f_lo` and the last exactly `f_hi`.
pub fn erb_space(f_lo: f64, f_hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(f_lo > 0.0 && f_hi > f_lo) {
        return Err(Error::invalid(format!(
            "erb_space requires 0 < f_lo < f_hi, got [{f_lo}, {f_hi}]"
        )));
    }
    if n < 2 {
        return Err(Error::invalid("erb_space requires n >= 2"));
    }
    let e_lo = erb_rate(f_lo)?;
    let e_hi = erb_rate(f_hi)?;
    let step = (e_hi - e_lo) / (n - 1) as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(erb_rate_inverse(e_lo + step * i as f64));
    }
    // pin endpoints exactly; interior values keep uniform ERB spacing
    out[0] = f_lo;
    out[n - 1] = f_hi;
    Ok(out)
}
