//! Log-compression output stage constants.
//!
//! The stage `y = G * ln(1 + x / theta0)` replaces a cascade of five
//! adaptation loops (time constants 5, 50, 129, 253, 500 ms). `G` and
//! `theta0` are fixed by requiring the stage to reproduce the loops'
//! steady-state outputs for constant inputs at two anchor levels: the
//! threshold amplitude and the reference (100 dB) amplitude. At steady state
//! the loop cascade maps a constant input `I >= threshold` to `I^(1/32)`;
//! the committed constants below solve the two-anchor system and are
//! reproduced against a time-domain loop simulation by
//! `adaptation_loop_oracle_matches_log_stage` in this module's tests.

/// Amplitude of the threshold-level anchor (0 dB on the model's level scale).
pub const CALIB_THRESHOLD_AMPLITUDE: f64 = 1e-5;

/// Amplitude of the reference anchor (100 dB on the model's level scale,
/// digital full scale).
pub const CALIB_REFERENCE_AMPLITUDE: f64 = 1.0;

/// Gain of the log-compression stage.
pub const LOG_COMP_G: f64 = 0.026246101919065047;

/// Knee constant of the log-compression stage.
pub const LOG_COMP_THETA0: f64 = 2.8378609068516786e-17;

/// Solves `G * ln(1 + I/theta0) = O(I)` at the two anchors for `(G, theta0)`
/// given the target outputs at the threshold and reference anchors.
/// Bisection on `ln(theta0)`; the ratio of the two logs is monotone in it.
pub fn solve_log_compression_constants(o_threshold: f64, o_reference: f64) -> (f64, f64) {
    let i0 = CALIB_THRESHOLD_AMPLITUDE;
    let i1 = CALIB_REFERENCE_AMPLITUDE;
    let target = o_threshold / o_reference;
    let ratio = |u: f64| -> f64 {
        let th = u.exp();
        (i0 / th).ln_1p() / (i1 / th).ln_1p()
    };
    let (mut lo, mut hi) = (-200.0f64, -1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta0 = (0.5 * (lo + hi)).exp();
    let g = o_reference / (i1 / theta0).ln_1p();
    (g, theta0)
}
