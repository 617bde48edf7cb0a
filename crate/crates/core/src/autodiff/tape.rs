//! The tape, tensors, and the primitive operation set.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use ndarray::{concatenate, Axis, Ix2, IxDyn, Slice, Zip};

use crate::signal::PreparedFir;
use crate::{Error, Result};

/// Dynamic-dimensional double-precision array, the value type of every node.
pub type Arr = ndarray::ArrayD<f64>;

/// One operand of a recorded operation: the value, plus the producing node if
/// the operand carries gradient.
#[derive(Clone)]
struct In {
    node: Option<usize>,
    val: Arc<Arr>,
}

enum Op {
    Leaf,
    Add { a: In, b: In },
    Sub { a: In, b: In },
    Mul { a: In, b: In },
    Div { a: In, b: In },
    Neg { a: In },
    AddScalar { a: In },
    MulScalar { a: In, c: f64 },
    Matmul { a: In, b: In },
    FirConv { a: In, fir: Arc<PreparedFir> },
    Slice { a: In, axis: usize, start: usize, len: usize },
    Concat { parts: Vec<In>, axis: usize },
    Reshape { a: In },
    Permute { a: In, perm: Vec<usize> },
    Relu { a: In },
    Tanh { a: In, out: Arc<Arr> },
    Sigmoid { a: In, out: Arc<Arr> },
    Exp { a: In, out: Arc<Arr> },
    Log { a: In },
    Sqrt { a: In, out: Arc<Arr> },
    Abs { a: In },
    AbsPow { a: In, c: f64 },
    BrokenStick { a: In, lin_gain: f64, comp_gain: f64, exponent: f64 },
    Sum { a: In },
    Mean { a: In },
    SumAxis { a: In, axis: usize },
    MeanAxis { a: In, axis: usize },
    Frame { a: In, frame_len: usize, hop: usize },
    OverlapAdd { a: In, hop: usize },
}

/// Recording context for one forward/backward pass.
#[derive(Clone)]
pub struct Tape {
    records: Rc<RefCell<Vec<Op>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            records: Rc::new(RefCell::new(Vec::new())),
        }
    }

    /// Registers a gradient-carrying input (parameter or differentiated
    /// input signal).
    pub fn leaf(&self, value: Arr) -> Tensor {
        let id = self.push(Op::Leaf);
        Tensor {
            value: Arc::new(value),
            node: Some((self.clone(), id)),
        }
    }

    pub fn len(&self) -> usize {
        self.records.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all records. Tensors created on this tape must not be used for
    /// backward afterwards.
    pub fn clear(&self) {
        self.records.borrow_mut().clear();
    }

    fn push(&self, op: Op) -> usize {
        let mut r = self.records.borrow_mut();
        r.push(op);
        r.len() - 1
    }

    fn same_as(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.records, &other.records)
    }

    /// Reverse pass from a scalar loss. Returns gradients for every node on
    /// the tape that the loss depends on; constants never appear.
    pub fn backward(&self, loss: &Tensor) -> Result<GradientMap> {
        let Some((tape, loss_id)) = &loss.node else {
            return Err(Error::invalid("backward: loss is not on the tape"));
        };
        if !self.same_as(tape) {
            return Err(Error::invalid("backward: loss belongs to another tape"));
        }
        if loss.value.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward (loss must be scalar)",
                left: loss.value.shape().to_vec(),
                right: vec![1],
            });
        }
        let records = self.records.borrow();
        let mut grads: Vec<Option<Arr>> = (0..records.len()).map(|_| None).collect();
        grads[*loss_id] = Some(Arr::from_elem(loss.value.raw_dim(), 1.0));
        for id in (0..=*loss_id).rev() {
            let Some(g) = grads[id].take() else { continue };
            records[id].backward(&g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(GradientMap { grads })
    }
}

/// Node id -> gradient, produced by [`Tape::backward`].
pub struct GradientMap {
    grads: Vec<Option<Arr>>,
}

impl GradientMap {
    /// Gradient of the loss with respect to `t`. `None` when the loss does
    /// not depend on `t` (or `t` is a constant).
    pub fn get(&self, t: &Tensor) -> Option<&Arr> {
        let (_, id) = t.node.as_ref()?;
        self.grads.get(*id)?.as_ref()
    }

    /// Gradient for `t`, densified to zeros when the loss does not depend on
    /// it.
    pub fn get_or_zeros(&self, t: &Tensor) -> Arr {
        self.get(t)
            .cloned()
            .unwrap_or_else(|| Arr::zeros(t.value.raw_dim()))
    }
}

/// A value in the computation graph: a shared array plus an optional tape
/// node. Tensors without a node are constants and record nothing.
#[derive(Clone)]
pub struct Tensor {
    value: Arc<Arr>,
    node: Option<(Tape, usize)>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.value.shape())
            .field("on_tape", &self.node.is_some())
            .finish()
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0usize; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::ShapeMismatch {
                op: "broadcast",
                left: a.to_vec(),
                right: b.to_vec(),
            });
        };
    }
    Ok(out)
}

fn bc_zip(a: &Arr, b: &Arr, f: impl Fn(f64, f64) -> f64) -> Result<Arr> {
    let shape = broadcast_shape(a.shape(), b.shape())?;
    let av = a.broadcast(IxDyn(&shape)).expect("broadcast a");
    let bv = b.broadcast(IxDyn(&shape)).expect("broadcast b");
    let mut out = Arr::zeros(IxDyn(&shape));
    Zip::from(&mut out).and(&av).and(&bv).for_each(|o, &x, &y| *o = f(x, y));
    Ok(out)
}

/// Sums a broadcast gradient back down to the original operand shape.
fn reduce_to_shape(g: &Arr, shape: &[usize]) -> Arr {
    let mut cur = g.clone();
    while cur.ndim() > shape.len() {
        cur = cur.sum_axis(Axis(0));
    }
    for i in 0..shape.len() {
        if cur.shape()[i] != shape[i] {
            debug_assert_eq!(shape[i], 1, "invalid gradient reduction");
            cur = cur.sum_axis(Axis(i)).insert_axis(Axis(i));
        }
    }
    cur
}

fn acc(grads: &mut [Option<Arr>], input: &In, g: Arr) {
    let Some(id) = input.node else { return };
    match &mut grads[id] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

impl Op {
    fn backward(&self, g: &Arr, grads: &mut [Option<Arr>]) {
        match self {
            Op::Leaf => {}
            Op::Add { a, b } => {
                acc(grads, a, reduce_to_shape(g, a.val.shape()));
                acc(grads, b, reduce_to_shape(g, b.val.shape()));
            }
            Op::Sub { a, b } => {
                acc(grads, a, reduce_to_shape(g, a.val.shape()));
                acc(grads, b, reduce_to_shape(&g.mapv(|v| -v), b.val.shape()));
            }
            Op::Mul { a, b } => {
                let da = bc_zip(g, &b.val, |x, y| x * y).expect("mul backward");
                let db = bc_zip(g, &a.val, |x, y| x * y).expect("mul backward");
                acc(grads, a, reduce_to_shape(&da, a.val.shape()));
                acc(grads, b, reduce_to_shape(&db, b.val.shape()));
            }
            Op::Div { a, b } => {
                let da = bc_zip(g, &b.val, |x, y| x / y).expect("div backward");
                acc(grads, a, reduce_to_shape(&da, a.val.shape()));
                let ga = bc_zip(g, &a.val, |x, y| x * y).expect("div backward");
                let db = bc_zip(&ga, &b.val, |x, y| -x / (y * y)).expect("div backward");
                acc(grads, b, reduce_to_shape(&db, b.val.shape()));
            }
            Op::Neg { a } => acc(grads, a, g.mapv(|v| -v)),
            Op::AddScalar { a } => acc(grads, a, g.clone()),
            Op::MulScalar { a, c } => acc(grads, a, g.mapv(|v| v * c)),
            Op::Matmul { a, b } => {
                let g2 = g.view().into_dimensionality::<Ix2>().expect("matmul grad");
                let av = a.val.view().into_dimensionality::<Ix2>().expect("matmul a");
                let bv = b.val.view().into_dimensionality::<Ix2>().expect("matmul b");
                let da = g2.dot(&bv.t()).into_dyn();
                let db = av.t().dot(&g2).into_dyn();
                acc(grads, a, da);
                acc(grads, b, db);
            }
            Op::FirConv { a, fir } => {
                let dy: Vec<f64> = g.iter().copied().collect();
                let dx = fir.adjoint(&dy);
                acc(grads, a, Arr::from_shape_vec(a.val.raw_dim(), dx).expect("fir grad"));
            }
            Op::Slice { a, axis, start, len } => {
                let mut da = Arr::zeros(a.val.raw_dim());
                da.slice_axis_mut(Axis(*axis), Slice::from(*start..start + len))
                    .assign(g);
                acc(grads, a, da);
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0usize;
                for p in parts {
                    let w = p.val.shape()[*axis];
                    let gp = g
                        .slice_axis(Axis(*axis), Slice::from(offset..offset + w))
                        .to_owned();
                    acc(grads, p, gp);
                    offset += w;
                }
            }
            Op::Reshape { a } => {
                let da = g
                    .clone()
                    .into_shape_with_order(a.val.raw_dim())
                    .expect("reshape grad");
                acc(grads, a, da);
            }
            Op::Permute { a, perm } => {
                let mut inv = vec![0usize; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                let da = g.view().permuted_axes(IxDyn(&inv)).as_standard_layout().to_owned();
                acc(grads, a, da);
            }
            Op::Relu { a } => {
                let da = bc_zip(g, &a.val, |x, v| if v > 0.0 { x } else { 0.0 }).unwrap();
                acc(grads, a, da);
            }
            Op::Tanh { a, out } => {
                let da = bc_zip(g, out, |x, y| x * (1.0 - y * y)).unwrap();
                acc(grads, a, da);
            }
            Op::Sigmoid { a, out } => {
                let da = bc_zip(g, out, |x, y| x * y * (1.0 - y)).unwrap();
                acc(grads, a, da);
            }
            Op::Exp { a, out } => {
                let da = bc_zip(g, out, |x, y| x * y).unwrap();
                acc(grads, a, da);
            }
            Op::Log { a } => {
                let da = bc_zip(g, &a.val, |x, v| x / v).unwrap();
                acc(grads, a, da);
            }
            Op::Sqrt { a, out } => {
                let da = bc_zip(g, out, |x, y| x / (2.0 * y)).unwrap();
                acc(grads, a, da);
            }
            Op::Abs { a } => {
                // sign(0) = 0: left-branch derivative at the tie
                let da = bc_zip(g, &a.val, |x, v| x * v.signum() * f64::from(v != 0.0)).unwrap();
                acc(grads, a, da);
            }
            Op::AbsPow { a, c } => {
                let c = *c;
                let da = bc_zip(g, &a.val, |x, v| {
                    if v == 0.0 {
                        0.0
                    } else {
                        x * c * v.abs().powf(c - 1.0) * v.signum()
                    }
                })
                .unwrap();
                acc(grads, a, da);
            }
            Op::BrokenStick { a, lin_gain, comp_gain, exponent } => {
                let (ga, b, c) = (*lin_gain, *comp_gain, *exponent);
                let da = bc_zip(g, &a.val, |x, v| {
                    let av = v.abs();
                    if av == 0.0 || ga * av <= b * av.powf(c) {
                        x * ga
                    } else {
                        x * b * c * av.powf(c - 1.0)
                    }
                })
                .unwrap();
                acc(grads, a, da);
            }
            Op::Sum { a } => {
                let gv = g.iter().next().copied().unwrap_or(0.0);
                acc(grads, a, Arr::from_elem(a.val.raw_dim(), gv));
            }
            Op::Mean { a } => {
                let gv = g.iter().next().copied().unwrap_or(0.0) / a.val.len() as f64;
                acc(grads, a, Arr::from_elem(a.val.raw_dim(), gv));
            }
            Op::SumAxis { a, axis: _ } => {
                let da = g
                    .broadcast(a.val.raw_dim())
                    .expect("sum_axis grad")
                    .to_owned();
                acc(grads, a, da);
            }
            Op::MeanAxis { a, axis } => {
                let n = a.val.shape()[*axis] as f64;
                let da = g
                    .broadcast(a.val.raw_dim())
                    .expect("mean_axis grad")
                    .mapv(|v| v / n);
                acc(grads, a, da);
            }
            Op::Frame { a, frame_len, hop } => {
                let mut da = Arr::zeros(a.val.raw_dim());
                {
                    let flat = da.as_slice_mut().expect("frame grad layout");
                    let g2 = g.view().into_dimensionality::<Ix2>().expect("frame grad");
                    for (t, row) in g2.outer_iter().enumerate() {
                        let base = t * hop;
                        for j in 0..*frame_len {
                            flat[base + j] += row[j];
                        }
                    }
                }
                acc(grads, a, da);
            }
            Op::OverlapAdd { a, hop } => {
                let shape = a.val.shape();
                let (frames, flen) = (shape[0], shape[1]);
                let gf = g.as_slice().expect("ola grad layout");
                let mut da = Arr::zeros(a.val.raw_dim());
                {
                    let mut d2 = da.view_mut().into_dimensionality::<Ix2>().unwrap();
                    for t in 0..frames {
                        for j in 0..flen {
                            d2[(t, j)] = gf[t * hop + j];
                        }
                    }
                }
                acc(grads, a, da);
            }
        }
    }
}

impl Tensor {
    /// A constant (gradient-free) tensor.
    pub fn constant(value: Arr) -> Tensor {
        Tensor {
            value: Arc::new(value),
            node: None,
        }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::constant(Arr::from_elem(IxDyn(&[]), v))
    }

    pub fn from_vec(v: Vec<f64>) -> Tensor {
        let dim = IxDyn(&[v.len()]);
        Tensor::constant(Arr::from_shape_vec(dim, v).unwrap())
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::constant(Arr::zeros(IxDyn(shape)))
    }

    pub fn value(&self) -> &Arr {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// The value of a single-element tensor.
    pub fn to_scalar(&self) -> Result<f64> {
        if self.value.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "to_scalar",
                left: self.value.shape().to_vec(),
                right: vec![1],
            });
        }
        Ok(self.value.iter().next().copied().unwrap())
    }

    /// Same value, detached from the tape (a constant).
    pub fn detach(&self) -> Tensor {
        Tensor {
            value: self.value.clone(),
            node: None,
        }
    }

    fn as_in(&self) -> In {
        In {
            node: self.node.as_ref().map(|(_, id)| *id),
            val: self.value.clone(),
        }
    }

    fn tape_of(inputs: &[&Tensor]) -> Option<Tape> {
        let mut found: Option<Tape> = None;
        for t in inputs {
            if let Some((tape, _)) = &t.node {
                match &found {
                    None => found = Some(tape.clone()),
                    Some(f) => assert!(f.same_as(tape), "tensors from different tapes"),
                }
            }
        }
        found
    }

    fn emit(inputs: &[&Tensor], value: Arr, build: impl FnOnce() -> Op) -> Tensor {
        match Tensor::tape_of(inputs) {
            None => Tensor::constant(value),
            Some(tape) => {
                let id = tape.push(build());
                Tensor {
                    value: Arc::new(value),
                    node: Some((tape, id)),
                }
            }
        }
    }

    // ---- elementwise binary (broadcasting) ----

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let v = bc_zip(&self.value, &other.value, |a, b| a + b)?;
        Ok(Tensor::emit(&[self, other], v, || Op::Add {
            a: self.as_in(),
            b: other.as_in(),
        }))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        let v = bc_zip(&self.value, &other.value, |a, b| a - b)?;
        Ok(Tensor::emit(&[self, other], v, || Op::Sub {
            a: self.as_in(),
            b: other.as_in(),
        }))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let v = bc_zip(&self.value, &other.value, |a, b| a * b)?;
        Ok(Tensor::emit(&[self, other], v, || Op::Mul {
            a: self.as_in(),
            b: other.as_in(),
        }))
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        let v = bc_zip(&self.value, &other.value, |a, b| a / b)?;
        Ok(Tensor::emit(&[self, other], v, || Op::Div {
            a: self.as_in(),
            b: other.as_in(),
        }))
    }

    // ---- elementwise unary ----

    pub fn neg(&self) -> Tensor {
        let v = self.value.mapv(|x| -x);
        Tensor::emit(&[self], v, || Op::Neg { a: self.as_in() })
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let v = self.value.mapv(|x| x + c);
        Tensor::emit(&[self], v, || Op::AddScalar { a: self.as_in() })
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        let v = self.value.mapv(|x| x * c);
        Tensor::emit(&[self], v, || Op::MulScalar { a: self.as_in(), c })
    }

    pub fn relu(&self) -> Tensor {
        let v = self.value.mapv(|x| x.max(0.0));
        Tensor::emit(&[self], v, || Op::Relu { a: self.as_in() })
    }

    pub fn tanh(&self) -> Tensor {
        let v = self.value.mapv(f64::tanh);
        let out = Arc::new(v.clone());
        Tensor::emit(&[self], v, || Op::Tanh { a: self.as_in(), out })
    }

    pub fn sigmoid(&self) -> Tensor {
        let v = self.value.mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let out = Arc::new(v.clone());
        Tensor::emit(&[self], v, || Op::Sigmoid { a: self.as_in(), out })
    }

    pub fn exp(&self) -> Tensor {
        let v = self.value.mapv(f64::exp);
        let out = Arc::new(v.clone());
        Tensor::emit(&[self], v, || Op::Exp { a: self.as_in(), out })
    }

    pub fn log(&self) -> Tensor {
        let v = self.value.mapv(f64::ln);
        Tensor::emit(&[self], v, || Op::Log { a: self.as_in() })
    }

    pub fn sqrt(&self) -> Tensor {
        let v = self.value.mapv(f64::sqrt);
        let out = Arc::new(v.clone());
        Tensor::emit(&[self], v, || Op::Sqrt { a: self.as_in(), out })
    }

    pub fn abs(&self) -> Tensor {
        let v = self.value.mapv(f64::abs);
        Tensor::emit(&[self], v, || Op::Abs { a: self.as_in() })
    }

    /// `|x|^c` with subgradient 0 at x = 0.
    pub fn abs_pow(&self, c: f64) -> Tensor {
        let v = self.value.mapv(|x| x.abs().powf(c));
        Tensor::emit(&[self], v, || Op::AbsPow { a: self.as_in(), c })
    }

    /// Broken-stick nonlinearity
    /// `y = sign(x) * min(lin_gain*|x|, comp_gain*|x|^exponent)`, linear at
    /// low levels and compressive above the knee. Ties take the linear
    /// branch derivative.
    pub fn broken_stick(&self, lin_gain: f64, comp_gain: f64, exponent: f64) -> Tensor {
        let v = self.value.mapv(|x| {
            let a = x.abs();
            if a == 0.0 {
                0.0
            } else {
                x.signum() * (lin_gain * a).min(comp_gain * a.powf(exponent))
            }
        });
        Tensor::emit(&[self], v, || Op::BrokenStick {
            a: self.as_in(),
            lin_gain,
            comp_gain,
            exponent,
        })
    }

    // ---- reductions ----

    pub fn sum(&self) -> Tensor {
        let v = Arr::from_elem(IxDyn(&[]), self.value.sum());
        Tensor::emit(&[self], v, || Op::Sum { a: self.as_in() })
    }

    pub fn mean(&self) -> Tensor {
        let m = self.value.sum() / self.value.len() as f64;
        let v = Arr::from_elem(IxDyn(&[]), m);
        Tensor::emit(&[self], v, || Op::Mean { a: self.as_in() })
    }

    /// Sum along `axis`, keeping the axis with size 1.
    pub fn sum_axis(&self, axis: usize) -> Tensor {
        let v = self.value.sum_axis(Axis(axis)).insert_axis(Axis(axis));
        Tensor::emit(&[self], v, || Op::SumAxis { a: self.as_in(), axis })
    }

    /// Mean along `axis`, keeping the axis with size 1.
    pub fn mean_axis(&self, axis: usize) -> Tensor {
        let n = self.value.shape()[axis] as f64;
        let v = self
            .value
            .sum_axis(Axis(axis))
            .insert_axis(Axis(axis))
            .mapv(|x| x / n);
        Tensor::emit(&[self], v, || Op::MeanAxis { a: self.as_in(), axis })
    }

    // ---- shape ops ----

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let v = self
            .value
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(IxDyn(shape))
            .map_err(|_| Error::ShapeMismatch {
                op: "reshape",
                left: self.value.shape().to_vec(),
                right: shape.to_vec(),
            })?;
        Ok(Tensor::emit(&[self], v, || Op::Reshape { a: self.as_in() }))
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        if perm.len() != self.value.ndim() {
            return Err(Error::ShapeMismatch {
                op: "permute",
                left: self.value.shape().to_vec(),
                right: perm.to_vec(),
            });
        }
        let v = self
            .value
            .view()
            .permuted_axes(IxDyn(perm))
            .as_standard_layout()
            .to_owned();
        Ok(Tensor::emit(&[self], v, || Op::Permute {
            a: self.as_in(),
            perm: perm.to_vec(),
        }))
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let shape = self.value.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::ShapeMismatch {
                op: "slice",
                left: shape.to_vec(),
                right: vec![axis, start, len],
            });
        }
        let v = self
            .value
            .slice_axis(Axis(axis), Slice::from(start..start + len))
            .as_standard_layout()
            .to_owned();
        Ok(Tensor::emit(&[self], v, || Op::Slice {
            a: self.as_in(),
            axis,
            start,
            len,
        }))
    }

    // ---- linear algebra & signal ops ----

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let a = self
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|_| Error::ShapeMismatch {
                op: "matmul (lhs must be 2-d)",
                left: self.value.shape().to_vec(),
                right: other.value.shape().to_vec(),
            })?;
        let b = other
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|_| Error::ShapeMismatch {
                op: "matmul (rhs must be 2-d)",
                left: self.value.shape().to_vec(),
                right: other.value.shape().to_vec(),
            })?;
        if a.ncols() != b.nrows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.value.shape().to_vec(),
                right: other.value.shape().to_vec(),
            });
        }
        let v = a.dot(&b).into_dyn();
        Ok(Tensor::emit(&[self, other], v, || Op::Matmul {
            a: self.as_in(),
            b: other.as_in(),
        }))
    }

    /// Causal FIR convolution of a 1-D tensor, output truncated to the input
    /// length. The taps are fixed (no gradient flows to the filter).
    pub fn fir_conv(&self, fir: &Arc<PreparedFir>) -> Result<Tensor> {
        if self.value.ndim() != 1 {
            return Err(Error::ShapeMismatch {
                op: "fir_conv (input must be 1-d)",
                left: self.value.shape().to_vec(),
                right: vec![],
            });
        }
        let x = self.value.as_slice().expect("fir input layout");
        let y = fir.conv_causal(x);
        let v = Arr::from_shape_vec(self.value.raw_dim(), y).unwrap();
        let fir = fir.clone();
        Ok(Tensor::emit(&[self], v, || Op::FirConv {
            a: self.as_in(),
            fir,
        }))
    }

    /// Splits a 1-D signal into overlapping frames `[T, frame_len]`.
    /// Trailing samples that do not fill a frame are dropped.
    pub fn frame(&self, frame_len: usize, hop: usize) -> Result<Tensor> {
        if self.value.ndim() != 1 {
            return Err(Error::ShapeMismatch {
                op: "frame (input must be 1-d)",
                left: self.value.shape().to_vec(),
                right: vec![],
            });
        }
        let n = self.value.len();
        if n < frame_len {
            return Err(Error::InputTooShort {
                got: n,
                need: frame_len,
            });
        }
        let frames = (n - frame_len) / hop + 1;
        let x = self.value.as_slice().expect("frame input layout");
        let mut v = Arr::zeros(IxDyn(&[frames, frame_len]));
        {
            let mut v2 = v.view_mut().into_dimensionality::<Ix2>().unwrap();
            for t in 0..frames {
                for j in 0..frame_len {
                    v2[(t, j)] = x[t * hop + j];
                }
            }
        }
        Ok(Tensor::emit(&[self], v, || Op::Frame {
            a: self.as_in(),
            frame_len,
            hop,
        }))
    }

    /// Overlap-adds frames `[T, frame_len]` into a signal of length
    /// `(T-1)*hop + frame_len`.
    pub fn overlap_add(&self, hop: usize) -> Result<Tensor> {
        let shape = self.value.shape();
        if shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "overlap_add (input must be 2-d)",
                left: shape.to_vec(),
                right: vec![],
            });
        }
        let (frames, flen) = (shape[0], shape[1]);
        let out_len = (frames - 1) * hop + flen;
        let mut out = vec![0.0; out_len];
        let v2 = self.value.view().into_dimensionality::<Ix2>().unwrap();
        for t in 0..frames {
            for j in 0..flen {
                out[t * hop + j] += v2[(t, j)];
            }
        }
        let v = Arr::from_shape_vec(IxDyn(&[out_len]), out).unwrap();
        Ok(Tensor::emit(&[self], v, || Op::OverlapAdd {
            a: self.as_in(),
            hop,
        }))
    }
}

/// Concatenates tensors along `axis`.
pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::invalid("concat of zero tensors"));
    }
    let views: Vec<_> = parts.iter().map(|p| p.value.view()).collect();
    let v = concatenate(Axis(axis), &views).map_err(|_| Error::ShapeMismatch {
        op: "concat",
        left: parts[0].value.shape().to_vec(),
        right: parts.last().unwrap().value.shape().to_vec(),
    })?;
    let refs: Vec<&Tensor> = parts.iter().collect();
    Ok(Tensor::emit(&refs, v, || Op::Concat {
        parts: parts.iter().map(|p| p.as_in()).collect(),
        axis,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    fn leaf1(tape: &Tape, v: &[f64]) -> Tensor {
        tape.leaf(arr1(v).into_dyn())
    }

    #[test]
    fn add_basic() {
        let a = Tensor::from_vec(vec![1.0, 2.0]);
        let b = Tensor::from_vec(vec![3.0, 4.0]);
        let c = a.add(&b).unwrap();
        assert_eq!(c.value().as_slice().unwrap(), &[4.0, 6.0]);
        assert!(!c.requires_grad());
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let a = Tensor::from_vec(vec![1.0, 2.0]);
        let b = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        match a.add(&b) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2]);
                assert_eq!(right, vec![3]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let tape = Tape::new();
        let x = leaf1(&tape, &[0.0]);
        let y = x.tanh().sum();
        let g = tape.backward(&y).unwrap();
        assert_eq!(g.get(&x).unwrap().as_slice().unwrap(), &[1.0]);
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let tape = Tape::new();
        let x = leaf1(&tape, &[1.0, -2.0, 3.0]);
        let loss = x.sum();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&x).unwrap().as_slice().unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_half_sum_squares_is_identity() {
        let tape = Tape::new();
        let x = leaf1(&tape, &[1.5, -0.5, 2.0]);
        let loss = x.mul(&x).unwrap().sum().mul_scalar(0.5);
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&x).unwrap().as_slice().unwrap(), &[1.5, -0.5, 2.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let tape = Tape::new();
        let x = leaf1(&tape, &[1.0, 2.0]);
        let y = x.mul_scalar(2.0);
        assert!(tape.backward(&y).is_err());
    }

    #[test]
    fn constants_do_not_appear_in_gradient_map() {
        let tape = Tape::new();
        let x = leaf1(&tape, &[1.0, 2.0]);
        let c = Tensor::from_vec(vec![3.0, 4.0]);
        let loss = x.mul(&c).unwrap().sum();
        let g = tape.backward(&loss).unwrap();
        assert!(g.get(&c).is_none());
        assert_eq!(g.get(&x).unwrap().as_slice().unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        let run = |wa: f64, wb: f64| -> Vec<f64> {
            let tape = Tape::new();
            let x = leaf1(&tape, &[0.4, -1.2, 2.2]);
            let f = x.tanh().sum();
            let g = x.mul(&x).unwrap().sum();
            let loss = f.mul_scalar(wa).add(&g.mul_scalar(wb)).unwrap();
            let gm = tape.backward(&loss).unwrap();
            gm.get(&x).unwrap().iter().copied().collect()
        };
        let gf = run(1.0, 0.0);
        let gg = run(0.0, 1.0);
        let gc = run(2.5, -1.5);
        for i in 0..gf.len() {
            assert!((gc[i] - (2.5 * gf[i] - 1.5 * gg[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_backward_is_deterministic() {
        let run = || -> (f64, Vec<f64>) {
            let tape = Tape::new();
            let x = leaf1(&tape, &[0.3, 0.7, -0.9, 1.1]);
            let y = x
                .mul_scalar(1.7)
                .tanh()
                .mul(&x.sigmoid())
                .unwrap()
                .sum();
            let g = tape.backward(&y).unwrap();
            (
                y.to_scalar().unwrap(),
                g.get(&x).unwrap().iter().copied().collect(),
            )
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert_eq!(l1.to_bits(), l2.to_bits());
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn broadcast_add_reduces_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Arr::zeros(IxDyn(&[3, 2])));
        let b = leaf1(&tape, &[1.0, 2.0]);
        let y = x.add(&b).unwrap().sum();
        let g = tape.backward(&y).unwrap();
        assert_eq!(g.get(&b).unwrap().as_slice().unwrap(), &[3.0, 3.0]);
        assert_eq!(g.get(&x).unwrap().shape(), &[3, 2]);
    }

    #[test]
    fn slice_concat_roundtrip_gradient() {
        let tape = Tape::new();
        let x = leaf1(&tape, &[1.0, 2.0, 3.0, 4.0]);
        let a = x.slice(0, 0, 2).unwrap();
        let b = x.slice(0, 2, 2).unwrap();
        let y = concat(&[b, a], 0).unwrap();
        let w = Tensor::from_vec(vec![1.0, 10.0, 100.0, 1000.0]);
        let loss = y.mul(&w).unwrap().sum();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(
            g.get(&x).unwrap().as_slice().unwrap(),
            &[100.0, 1000.0, 1.0, 10.0]
        );
    }

    #[test]
    fn broken_stick_branch_selection() {
        // lin 2, comp 1, c 0.25: knee at (1/2)^{4/3} ~= 0.397
        let x = Tensor::from_vec(vec![0.1, -0.1, 1.0, -1.0, 0.0]);
        let y = x.broken_stick(2.0, 1.0, 0.25);
        let v = y.value().as_slice().unwrap();
        assert!((v[0] - 0.2).abs() < 1e-12);
        assert!((v[1] + 0.2).abs() < 1e-12);
        assert!((v[2] - 1.0).abs() < 1e-12);
        assert!((v[3] + 1.0).abs() < 1e-12);
        assert_eq!(v[4], 0.0);
    }

    #[test]
    fn matmul_values_and_gradients() {
        let tape = Tape::new();
        let a = tape.leaf(
            Arr::from_shape_vec(IxDyn(&[2, 3]), vec![1., 2., 3., 4., 5., 6.]).unwrap(),
        );
        let b = tape.leaf(
            Arr::from_shape_vec(IxDyn(&[3, 2]), vec![7., 8., 9., 10., 11., 12.]).unwrap(),
        );
        let y = a.matmul(&b).unwrap();
        assert_eq!(
            y.value().as_slice().unwrap(),
            &[58., 64., 139., 154.]
        );
        let loss = y.sum();
        let g = tape.backward(&loss).unwrap();
        // d/da = ones(2,2) . b^T
        assert_eq!(
            g.get(&a).unwrap().as_slice().unwrap(),
            &[15., 19., 23., 15., 19., 23.]
        );
        assert_eq!(
            g.get(&b).unwrap().as_slice().unwrap(),
            &[5., 5., 7., 7., 9., 9.]
        );
    }

    #[test]
    fn frame_overlap_add_inverse_on_gradient() {
        let tape = Tape::new();
        let x = leaf1(&tape, &[1., 2., 3., 4., 5., 6., 7., 8.]);
        let frames = x.frame(4, 2).unwrap();
        assert_eq!(frames.shape(), &[3, 4]);
        let y = frames.overlap_add(2).unwrap();
        // each interior sample counted per its overlap multiplicity
        let loss = y.sum();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(
            g.get(&x).unwrap().as_slice().unwrap(),
            &[1., 1., 2., 2., 2., 2., 1., 1.]
        );
    }
}
