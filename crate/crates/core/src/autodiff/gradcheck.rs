//! Finite-difference gradient checking.
//!
//! The numeric side evaluates the checked function forward-only, so it stays
//! independent of the backward pass it verifies. Points where a symmetric
//! second difference reveals a kink (relu/abs branch boundaries) are reported
//! as excluded rather than failed.

use ndarray::IxDyn;
use rand::prelude::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Arr, Tape, Tensor};
use crate::Result;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub excluded: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: max rel err {:.3e} over {} coords ({} excluded)",
            self.name, self.max_rel_err, self.checked, self.excluded
        )
    }
}

/// Central-difference check of `f` at `x` over all coordinates (or a random
/// subset of `max_coords` for large inputs). `eps` scales the step per
/// coordinate as `eps * (1 + |x_i|)`.
pub fn gradient_check<F>(name: &str, f: F, x: &Arr, eps: f64, max_coords: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    // analytic gradient via the tape
    let tape = Tape::new();
    let xt = tape.leaf(x.clone());
    let loss = f(&xt)?;
    let analytic = tape.backward(&loss)?.get_or_zeros(&xt);
    let f0 = loss.to_scalar()?;

    let eval = |arr: Arr| -> Result<f64> { f(&Tensor::constant(arr))?.to_scalar() };

    let n = x.len();
    let coords: Vec<usize> = if n <= max_coords {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<usize> = (0..n).collect();
        let mut picked: Vec<usize> = all.choose_multiple(&mut rng, max_coords).copied().collect();
        picked.sort_unstable();
        picked
    };

    let flat_x: Vec<f64> = x.iter().copied().collect();
    let flat_a: Vec<f64> = analytic.iter().copied().collect();
    let mut max_rel: f64 = 0.0;
    let mut checked = 0usize;
    let mut excluded = 0usize;
    for &i in &coords {
        let h = eps * (1.0 + flat_x[i].abs());
        let mut xp = flat_x.clone();
        xp[i] += h;
        let mut xm = flat_x.clone();
        xm[i] -= h;
        let fp = eval(Arr::from_shape_vec(IxDyn(x.shape()), xp).unwrap())?;
        let fm = eval(Arr::from_shape_vec(IxDyn(x.shape()), xm).unwrap())?;
        let fd = (fp - fm) / (2.0 * h);
        // a kink inside [x-h, x+h] shows up as a large symmetric second
        // difference relative to the local slope
        let second = (fp - 2.0 * f0 + fm).abs() / h;
        if !fd.is_finite() || second > 0.01 * (1.0 + fd.abs()) {
            excluded += 1;
            continue;
        }
        let a = flat_a[i];
        if a.abs() < 1e-12 && fd.abs() < 1e-12 {
            checked += 1;
            continue;
        }
        let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-10);
        max_rel = max_rel.max(rel);
        checked += 1;
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_err: max_rel,
        checked,
        excluded,
    })
}

/// [`gradient_check`] with the default step (1e-5 scale) and coordinate cap.
pub fn gradient_check_at<F>(name: &str, f: F, x: &Arr, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    gradient_check(name, f, x, 1e-5, 64, seed)
}

fn rand_arr(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Arr {
    use rand::Rng;
    let n: usize = shape.iter().product();
    Arr::from_shape_vec(
        IxDyn(shape),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Random values bounded away from zero (both signs), for ops with a kink or
/// an unbounded derivative at the origin.
fn rand_arr_signed_away(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Arr {
    use rand::Rng;
    let n: usize = shape.iter().product();
    Arr::from_shape_vec(
        IxDyn(shape),
        (0..n)
            .map(|_| {
                let m = rng.random_range(lo..hi);
                if rng.random_range(0.0..1.0) < 0.5 {
                    -m
                } else {
                    m
                }
            })
            .collect(),
    )
    .unwrap()
}

/// Finite-difference checks for every tape primitive, each reduced to a
/// scalar through a fixed random weighting so all output elements are
/// exercised. Returns one report per primitive.
pub fn check_all_primitives(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let w34 = Tensor::constant(rand_arr(&[3, 4], -1.0, 1.0, &mut rng));
    let b34 = Tensor::constant(rand_arr(&[3, 4], 0.5, 1.5, &mut rng));
    let x34 = rand_arr(&[3, 4], -1.0, 1.0, &mut rng);

    let weighted = |t: &Tensor, w: &Tensor| -> Result<Tensor> { Ok(t.mul(w)?.sum()) };

    out.push(gradient_check_at(
        "add",
        |x| weighted(&x.add(&b34)?, &w34),
        &x34,
        1,
    )?);
    out.push(gradient_check_at(
        "add_broadcast_rhs",
        |x| weighted(&Tensor::constant(x34.clone()).add(&x.reshape(&[4])?)?, &w34),
        &rand_arr(&[1, 4], -1.0, 1.0, &mut rng),
        2,
    )?);
    out.push(gradient_check_at(
        "sub",
        |x| weighted(&x.sub(&b34)?, &w34),
        &x34,
        3,
    )?);
    out.push(gradient_check_at(
        "mul",
        |x| weighted(&x.mul(&b34)?, &w34),
        &x34,
        4,
    )?);
    out.push(gradient_check_at(
        "div_lhs",
        |x| weighted(&x.div(&b34)?, &w34),
        &x34,
        5,
    )?);
    out.push(gradient_check_at(
        "div_rhs",
        |x| weighted(&Tensor::constant(x34.clone()).div(x)?, &w34),
        &rand_arr(&[3, 4], 0.5, 2.0, &mut rng),
        6,
    )?);
    out.push(gradient_check_at("neg", |x| weighted(&x.neg(), &w34), &x34, 7)?);
    out.push(gradient_check_at(
        "add_scalar",
        |x| weighted(&x.add_scalar(0.7), &w34),
        &x34,
        8,
    )?);
    out.push(gradient_check_at(
        "mul_scalar",
        |x| weighted(&x.mul_scalar(-1.3), &w34),
        &x34,
        9,
    )?);

    let m_rhs = Tensor::constant(rand_arr(&[4, 2], -1.0, 1.0, &mut rng));
    let w32 = Tensor::constant(rand_arr(&[3, 2], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "matmul_lhs",
        |x| weighted(&x.matmul(&m_rhs)?, &w32),
        &x34,
        10,
    )?);
    let m_lhs = Tensor::constant(rand_arr(&[3, 4], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "matmul_rhs",
        |x| weighted(&m_lhs.matmul(x)?, &w32),
        &rand_arr(&[4, 2], -1.0, 1.0, &mut rng),
        11,
    )?);

    // fir_conv: short (direct) and long (FFT overlap-add) paths
    use crate::signal::PreparedFir;
    use std::sync::Arc;
    let taps_short: Vec<f64> = (0..9).map(|i| ((i as f64) * 0.7).sin() * 0.5).collect();
    let fir_short = Arc::new(PreparedFir::new(taps_short));
    let w40 = Tensor::constant(rand_arr(&[40], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "fir_conv_short",
        |x| weighted(&x.fir_conv(&fir_short)?, &w40),
        &rand_arr(&[40], -1.0, 1.0, &mut rng),
        12,
    )?);
    let taps_long: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.13).cos() / 30.0).collect();
    let fir_long = Arc::new(PreparedFir::new(taps_long));
    let w200 = Tensor::constant(rand_arr(&[200], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "fir_conv_fft",
        |x| weighted(&x.fir_conv(&fir_long)?, &w200),
        &rand_arr(&[200], -1.0, 1.0, &mut rng),
        13,
    )?);

    let w24 = Tensor::constant(rand_arr(&[2, 4], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "slice",
        |x| weighted(&x.slice(0, 1, 2)?, &w24),
        &x34,
        14,
    )?);
    let w64 = Tensor::constant(rand_arr(&[6, 4], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "concat",
        |x| {
            let top = x.mul_scalar(2.0);
            weighted(&super::tape::concat(&[top, x.clone()], 0)?, &w64)
        },
        &x34,
        15,
    )?);
    let w12 = Tensor::constant(rand_arr(&[12], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "reshape",
        |x| weighted(&x.reshape(&[12])?, &w12),
        &x34,
        16,
    )?);
    let w43 = Tensor::constant(rand_arr(&[4, 3], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "permute",
        |x| weighted(&x.permute(&[1, 0])?, &w43),
        &x34,
        17,
    )?);

    out.push(gradient_check_at(
        "relu",
        |x| weighted(&x.relu(), &w34),
        &rand_arr_signed_away(&[3, 4], 0.2, 1.0, &mut rng),
        18,
    )?);
    out.push(gradient_check_at("tanh", |x| weighted(&x.tanh(), &w34), &x34, 19)?);
    out.push(gradient_check_at(
        "sigmoid",
        |x| weighted(&x.sigmoid(), &w34),
        &x34,
        20,
    )?);
    out.push(gradient_check_at("exp", |x| weighted(&x.exp(), &w34), &x34, 21)?);
    out.push(gradient_check_at(
        "log",
        |x| weighted(&x.log(), &w34),
        &rand_arr(&[3, 4], 0.3, 2.0, &mut rng),
        22,
    )?);
    out.push(gradient_check_at(
        "sqrt",
        |x| weighted(&x.sqrt(), &w34),
        &rand_arr(&[3, 4], 0.3, 2.0, &mut rng),
        23,
    )?);
    out.push(gradient_check_at(
        "abs",
        |x| weighted(&x.abs(), &w34),
        &rand_arr_signed_away(&[3, 4], 0.2, 1.0, &mut rng),
        24,
    )?);
    out.push(gradient_check_at(
        "abs_pow",
        |x| weighted(&x.abs_pow(0.25), &w34),
        &rand_arr_signed_away(&[3, 4], 0.3, 1.0, &mut rng),
        25,
    )?);
    // broken stick, both branches: knee for (2, 1, 0.25) is ~0.397
    out.push(gradient_check_at(
        "broken_stick_linear_branch",
        |x| weighted(&x.broken_stick(2.0, 1.0, 0.25), &w34),
        &rand_arr_signed_away(&[3, 4], 0.05, 0.15, &mut rng),
        26,
    )?);
    out.push(gradient_check_at(
        "broken_stick_compressive_branch",
        |x| weighted(&x.broken_stick(2.0, 1.0, 0.25), &w34),
        &rand_arr_signed_away(&[3, 4], 0.8, 1.5, &mut rng),
        27,
    )?);

    out.push(gradient_check_at("sum", |x| Ok(x.sum()), &x34, 28)?);
    out.push(gradient_check_at("mean", |x| Ok(x.mean()), &x34, 29)?);
    let w14 = Tensor::constant(rand_arr(&[1, 4], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "sum_axis",
        |x| weighted(&x.sum_axis(0), &w14),
        &x34,
        30,
    )?);
    out.push(gradient_check_at(
        "mean_axis",
        |x| weighted(&x.mean_axis(0), &w14),
        &x34,
        31,
    )?);

    let w_frames = Tensor::constant(rand_arr(&[4, 6], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "frame",
        |x| weighted(&x.frame(6, 3)?, &w_frames),
        &rand_arr(&[15], -1.0, 1.0, &mut rng),
        32,
    )?);
    let w_sig = Tensor::constant(rand_arr(&[12], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "overlap_add",
        |x| weighted(&x.overlap_add(3)?, &w_sig),
        &rand_arr(&[3, 6], -1.0, 1.0, &mut rng),
        33,
    )?);

    // lstm_cell with respect to input, state, and weights
    use super::lstm::{lstm_cell, LstmWeights};
    let lw = Tensor::constant(rand_arr(&[5, 8], -0.5, 0.5, &mut rng));
    let lb = Tensor::constant(rand_arr(&[8], -0.5, 0.5, &mut rng));
    let lx = rand_arr(&[2, 3], -1.0, 1.0, &mut rng);
    let lh = Tensor::constant(rand_arr(&[2, 2], -0.5, 0.5, &mut rng));
    let lc = Tensor::constant(rand_arr(&[2, 2], -0.5, 0.5, &mut rng));
    let w22 = Tensor::constant(rand_arr(&[2, 2], -1.0, 1.0, &mut rng));
    out.push(gradient_check_at(
        "lstm_cell_input",
        |x| {
            let w = LstmWeights {
                w: lw.clone(),
                b: lb.clone(),
            };
            let (h, _) = lstm_cell(x, &lh, &lc, &w)?;
            weighted(&h, &w22)
        },
        &lx,
        34,
    )?);
    let lx2 = Tensor::constant(lx.clone());
    out.push(gradient_check_at(
        "lstm_cell_weights",
        |wt| {
            let w = LstmWeights {
                w: wt.clone(),
                b: lb.clone(),
            };
            let (h, c) = lstm_cell(&lx2, &lh, &lc, &w)?;
            Ok(h.mul(&w22)?.sum().add(&c.sum())?)
        },
        &rand_arr(&[5, 8], -0.5, 0.5, &mut rng),
        35,
    )?);
    out.push(gradient_check_at(
        "lstm_cell_bias",
        |bt| {
            let w = LstmWeights {
                w: lw.clone(),
                b: bt.clone(),
            };
            let (h, _) = lstm_cell(&lx2, &lh, &lc, &w)?;
            weighted(&h, &w22)
        },
        &rand_arr(&[8], -0.5, 0.5, &mut rng),
        36,
    )?);

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_arr(&[6], -2.0, 2.0, &mut rng);
        let r = gradient_check_at("sq", |t| Ok(t.mul(t)?.sum()), &x, 1).unwrap();
        assert_eq!(r.excluded, 0);
        assert!(r.max_rel_err < 1e-8, "{r}");
    }

    #[test]
    fn abs_at_zero_is_excluded_not_failed() {
        let x = Arr::from_shape_vec(IxDyn(&[3]), vec![0.0, 1.0, -1.0]).unwrap();
        let r = gradient_check_at("abs0", |t| Ok(t.abs().sum()), &x, 1).unwrap();
        assert_eq!(r.excluded, 1, "{r}");
        assert!(r.max_rel_err < 1e-8, "{r}");
    }

    #[test]
    fn every_primitive_passes_at_1e4() {
        for r in check_all_primitives(42).unwrap() {
            assert!(r.passes(1e-4), "{r}");
        }
    }
}
