//! Reverse-mode differentiation over whole matrices.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append a node and return a [`Var`] handle; [`Tape::backward`] sweeps the
//! nodes in reverse insertion order, accumulating gradients additively into
//! every input a node consumed.

use rand::Rng;

use super::matrix::{self, Matrix};
use super::Scalar;
use crate::error::{shape_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train mode enables dropout; eval mode is deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulTransposed(Var, Var),
    Transpose(Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Scale(Var, T),
    Relu(Var),
    /// Elementwise product with a constant (dropout masks).
    Mask(Var, Matrix<T>),
    /// Row normalization; keeps the input row norms.
    Normalize(Var, Vec<T>),
    LogSoftmax(Var),
    /// Scalar `Σ W∘X` with constant `W`.
    WeightedSum(Var, Matrix<T>),
    /// `Σ_l softmax(w)_l · X_l` with constant layer matrices.
    LayerMix {
        weights: Var,
        layers: Vec<Matrix<T>>,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Recorded forward pass.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one scalar output with respect to every node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
    visit_order: Vec<usize>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get) but returns zeros for unreached nodes.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }

    /// Node indices in the order the backward sweep processed them.
    pub fn visit_order(&self) -> &[usize] {
        &self.visit_order
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> T {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.get(0, 0)
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_transposed(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_transposed(self.value(b))?;
        Ok(self.push(value, Op::MatMulTransposed(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    /// Adds a `1×cols` bias row to every row of `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err(format!(
                "bias {}x{} for input {}x{}",
                bv.rows(),
                bv.cols(),
                xv.rows(),
                xv.cols()
            )));
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (o, &b) in value.row_mut(r).iter_mut().zip(bv.row(0)) {
                *o += b;
            }
        }
        Ok(self.push(value, Op::AddRowBias(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = relu(self.value(x));
        self.push(value, Op::Relu(x))
    }

    /// Inverted dropout. Eval mode and `p == 0` return `x` itself.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: T, mode: Mode, rng: &mut R) -> Result<Var> {
        check_dropout_p(p)?;
        if mode == Mode::Eval || p == T::zero() {
            return Ok(x);
        }
        let (rows, cols) = self.value(x).shape();
        let mask = dropout_mask(rows, cols, p, rng);
        Ok(self.mask(x, mask)?)
    }

    /// Elementwise product with a constant matrix.
    pub fn mask(&mut self, x: Var, mask: Matrix<T>) -> Result<Var> {
        let value = self.value(x).zip_map(&mask, |a, m| a * m)?;
        Ok(self.push(value, Op::Mask(x, mask)))
    }

    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let norms = xv.row_norms();
        let value = matrix::l2_normalize_rows(xv)?;
        Ok(self.push(value, Op::Normalize(x, norms)))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let value = matrix::log_softmax_rows(self.value(x));
        self.push(value, Op::LogSoftmax(x))
    }

    /// Scalar `Σ_ij W_ij·X_ij`.
    pub fn weighted_sum(&mut self, x: Var, weights: Matrix<T>) -> Result<Var> {
        let xv = self.value(x);
        xv.check_same_shape(&weights, "weighted_sum")?;
        let s = matrix::dot(xv.data(), weights.data());
        let value = Matrix::from_parts_unchecked(1, 1, vec![s]);
        Ok(self.push(value, Op::WeightedSum(x, weights)))
    }

    /// Convex combination of `layers` using `softmax(weights)`; `weights` is `1×L`.
    pub fn layer_mix(&mut self, weights: Var, layers: Vec<Matrix<T>>) -> Result<Var> {
        let w = self.value(weights);
        if w.rows() != 1 || w.cols() != layers.len() || layers.is_empty() {
            return Err(shape_err(format!(
                "{} layer weights for {} layers",
                w.rows() * w.cols(),
                layers.len()
            )));
        }
        let shape = layers[0].shape();
        if let Some(bad) = layers.iter().find(|l| l.shape() != shape) {
            return Err(shape_err(format!(
                "layer of shape {}x{} among {}x{} layers",
                bad.rows(),
                bad.cols(),
                shape.0,
                shape.1
            )));
        }
        let probs = matrix::softmax(w.row(0));
        let mut value = Matrix::zeros(shape.0, shape.1);
        for (layer, &p) in layers.iter().zip(&probs) {
            for (o, &x) in value.data_mut().iter_mut().zip(layer.data()) {
                *o += p * x;
            }
        }
        Ok(self.push(value, Op::LayerMix { weights, layers, probs }))
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(shape_err(format!(
                "backward needs a 1x1 output, got {}x{}",
                out.rows(),
                out.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::filled(1, 1, T::one()));
        let mut visit_order = Vec::with_capacity(output.0 + 1);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            visit_order.push(idx);
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_transposed(self.value(*b))?;
                    let gb = self.value(*a).transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulTransposed(a, b) => {
                    // y = a bᵀ: da = g b, db = gᵀ a
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.transpose().matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::AddRowBias(x, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *bias, gb);
                    accumulate(&mut grads, *x, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.scale(*c)),
                Op::Relu(x) => {
                    let gx = self
                        .value(*x)
                        .zip_map(&g, |v, gv| if v > T::zero() { gv } else { T::zero() })?;
                    accumulate(&mut grads, *x, gx);
                }
                Op::Mask(x, mask) => accumulate(&mut grads, *x, g.zip_map(mask, |a, m| a * m)?),
                Op::Normalize(x, norms) => {
                    // y = x/|x|: dx = (g - y (y·g)) / |x|
                    let y = &node.value;
                    let mut gx = g.clone();
                    for (r, &n) in norms.iter().enumerate() {
                        let yg = matrix::dot(y.row(r), g.row(r));
                        for (o, &yv) in gx.row_mut(r).iter_mut().zip(y.row(r)) {
                            *o = (*o - yv * yg) / n;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::LogSoftmax(x) => {
                    // dx = g - softmax · Σg
                    let y = &node.value;
                    let mut gx = g.clone();
                    for r in 0..g.rows() {
                        let total: T = g.row(r).iter().copied().sum();
                        for (o, &yv) in gx.row_mut(r).iter_mut().zip(y.row(r)) {
                            *o -= yv.exp() * total;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::WeightedSum(x, w) => accumulate(&mut grads, *x, w.scale(g.get(0, 0))),
                Op::LayerMix { weights, layers, probs } => {
                    // ds_l = Σ g∘X_l; dw = s∘(ds − s·ds)
                    let ds: Vec<T> = layers.iter().map(|l| matrix::dot(l.data(), g.data())).collect();
                    let mean = matrix::dot(probs, &ds);
                    let gw: Vec<T> = probs.iter().zip(&ds).map(|(&s, &d)| s * (d - mean)).collect();
                    accumulate(&mut grads, *weights, Matrix::from_parts_unchecked(1, gw.len(), gw));
                }
            }
            grads[idx] = Some(g);
        }

        if let Some((i, _)) = grads
            .iter()
            .enumerate()
            .find(|(_, g)| g.as_ref().is_some_and(|m| !m.is_finite()))
        {
            return Err(Error::Numerical(format!("non-finite gradient at node {i}")));
        }
        Ok(Gradients { grads, visit_order })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn check_dropout_p<T: Scalar>(p: T) -> Result<()> {
    if !(p >= T::zero() && p < T::one()) {
        return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
    }
    Ok(())
}

fn dropout_mask<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, p: T, rng: &mut R) -> Matrix<T> {
    let keep_scale = T::one() / (T::one() - p);
    let p = p.as_f64();
    let data = (0..rows * cols)
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep_scale
            }
        })
        .collect();
    Matrix::from_parts_unchecked(rows, cols, data)
}

/// Elementwise `max(0, x)`.
/// `max(x, 0)`; NaN passes through so non-finite inputs stay visible.
pub fn relu<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v < T::zero() { T::zero() } else { v })
}

/// Inverted dropout on a plain matrix.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    x: &Matrix<T>,
    p: T,
    mode: Mode,
    rng: &mut R,
) -> Result<Matrix<T>> {
    check_dropout_p(p)?;
    if mode == Mode::Eval || p == T::zero() {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.rows(), x.cols(), p, rng);
    x.zip_map(&mask, |a, m| a * m)
}
