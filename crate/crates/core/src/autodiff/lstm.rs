//! LSTM cell built from tape primitives.
//!
//! Standard gate formulation, no peepholes, no layer norm inside the cell.
//! The input and recurrent weights are packed into one matrix applied to
//! `[x, h]`, with gate order `[input, forget, candidate, output]`.

use super::tape::{concat, Tensor};
use crate::{Error, Result};

/// Packed LSTM weights: `w` is `[(input_dim + hidden), 4*hidden]`, `b` is
/// `[4*hidden]`.
#[derive(Clone)]
pub struct LstmWeights {
    pub w: Tensor,
    pub b: Tensor,
}

impl LstmWeights {
    pub fn hidden_dim(&self) -> usize {
        self.w.shape()[1] / 4
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[0] - self.hidden_dim()
    }
}

/// One LSTM step on a batch: `x_t` is `[B, I]`, `h_prev`/`c_prev` are
/// `[B, H]`. Returns `(h_t, c_t)`.
pub fn lstm_cell(
    x_t: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    weights: &LstmWeights,
) -> Result<(Tensor, Tensor)> {
    let h = weights.hidden_dim();
    let i_dim = weights.input_dim();
    if x_t.shape().len() != 2 || x_t.shape()[1] != i_dim {
        return Err(Error::ShapeMismatch {
            op: "lstm_cell input",
            left: x_t.shape().to_vec(),
            right: vec![x_t.shape().first().copied().unwrap_or(0), i_dim],
        });
    }
    if h_prev.shape() != [x_t.shape()[0], h] || c_prev.shape() != [x_t.shape()[0], h] {
        return Err(Error::ShapeMismatch {
            op: "lstm_cell state",
            left: h_prev.shape().to_vec(),
            right: vec![x_t.shape()[0], h],
        });
    }
    let xh = concat(&[x_t.clone(), h_prev.clone()], 1)?;
    let z = xh.matmul(&weights.w)?.add(&weights.b)?;
    let i_gate = z.slice(1, 0, h)?.sigmoid();
    let f_gate = z.slice(1, h, h)?.sigmoid();
    let g_gate = z.slice(1, 2 * h, h)?.tanh();
    let o_gate = z.slice(1, 3 * h, h)?.sigmoid();
    let c_t = f_gate.mul(c_prev)?.add(&i_gate.mul(&g_gate)?)?;
    let h_t = o_gate.mul(&c_t.tanh())?;
    Ok((h_t, c_t))
}

/// Runs an LSTM over a sequence of `[B, I]` inputs with zero initial state.
/// With `reverse`, the sequence is consumed back-to-front and outputs are
/// returned in the original order.
pub fn lstm_sequence(
    inputs: &[Tensor],
    weights: &LstmWeights,
    reverse: bool,
) -> Result<Vec<Tensor>> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let batch = inputs[0].shape()[0];
    let h = weights.hidden_dim();
    let mut h_t = Tensor::zeros(&[batch, h]);
    let mut c_t = Tensor::zeros(&[batch, h]);
    let mut out: Vec<Option<Tensor>> = vec![None; inputs.len()];
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    for t in order {
        let (h_next, c_next) = lstm_cell(&inputs[t], &h_t, &c_t, weights)?;
        out[t] = Some(h_next.clone());
        h_t = h_next;
        c_t = c_next;
    }
    Ok(out.into_iter().map(|o| o.unwrap()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tape::{Arr, Tape};
    use ndarray::IxDyn;

    fn rand_arr(shape: &[usize], seed: u64) -> Arr {
        let mut state = seed.max(1);
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let n: usize = shape.iter().product();
        Arr::from_shape_vec(IxDyn(shape), (0..n).map(|_| 0.5 * next()).collect()).unwrap()
    }

    #[test]
    fn zero_weights_zero_state_give_zero_output() {
        let w = LstmWeights {
            w: Tensor::zeros(&[3 + 2, 8]),
            b: Tensor::zeros(&[8]),
        };
        let x = Tensor::constant(rand_arr(&[4, 3], 7));
        let h0 = Tensor::zeros(&[4, 2]);
        let c0 = Tensor::zeros(&[4, 2]);
        let (h, c) = lstm_cell(&x, &h0, &c0, &w).unwrap();
        assert!(h.value().iter().all(|&v| v == 0.0));
        // c = sigmoid(0)*0 + sigmoid(0)*tanh(0) = 0
        assert!(c.value().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let w = LstmWeights {
            w: Tensor::zeros(&[5, 8]),
            b: Tensor::zeros(&[8]),
        };
        let x = Tensor::zeros(&[4, 4]); // input dim should be 3
        let s = Tensor::zeros(&[4, 2]);
        assert!(lstm_cell(&x, &s, &s, &w).is_err());
    }

    #[test]
    fn sequence_output_is_order_dependent() {
        let w = LstmWeights {
            w: Tensor::constant(rand_arr(&[3 + 2, 8], 21)),
            b: Tensor::constant(rand_arr(&[8], 22)),
        };
        let xs: Vec<Tensor> = (0..5)
            .map(|t| Tensor::constant(rand_arr(&[1, 3], 100 + t)))
            .collect();
        let fwd = lstm_sequence(&xs, &w, false).unwrap();
        let mut rev_in = xs.clone();
        rev_in.reverse();
        let rev = lstm_sequence(&rev_in, &w, false).unwrap();
        let a = fwd.last().unwrap().value();
        let b = rev.last().unwrap().value();
        let diff: f64 = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-6, "recurrence should depend on input order");
    }

    #[test]
    fn gradients_flow_to_all_weights() {
        let tape = Tape::new();
        let w = LstmWeights {
            w: tape.leaf(rand_arr(&[5, 8], 31)),
            b: tape.leaf(rand_arr(&[8], 32)),
        };
        let x = tape.leaf(rand_arr(&[2, 3], 33));
        let h0 = Tensor::zeros(&[2, 2]);
        let c0 = Tensor::zeros(&[2, 2]);
        let (h, _) = lstm_cell(&x, &h0, &c0, &w).unwrap();
        let loss = h.mul(&h).unwrap().sum();
        let g = tape.backward(&loss).unwrap();
        assert!(g.get(&w.w).unwrap().iter().any(|&v| v != 0.0));
        assert!(g.get(&w.b).unwrap().iter().any(|&v| v != 0.0));
        assert!(g.get(&x).unwrap().iter().any(|&v| v != 0.0));
    }
}
