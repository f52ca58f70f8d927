use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::kernels;
use crate::error::{Error, Result};

/// Dense row-major `f64` array that records the operations applied to it.
///
/// Cloning a `Tensor` is cheap: clones share the same node. Leaf tensors
/// created with [`Tensor::param`] accumulate gradients across calls to
/// [`Tensor::backward`] until [`Tensor::zero_grad`] is called.
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Node>);

pub(crate) struct Node {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: RefCell<Rc<Vec<f64>>>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: RefCell<Option<Vec<f64>>>,
    pub(crate) op: Option<Op>,
}

/// Recorded operation with the inputs needed by its vector-Jacobian product.
pub(crate) enum Op {
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Div(Tensor, Tensor),
    Neg(Tensor),
    Scale(Tensor, f64),
    AddScalar(Tensor),
    Expand(Tensor),
    SumTo(Tensor),
    Reshape(Tensor),
    Transpose(Tensor),
    MatMul(Tensor, Tensor),
    LeakyRelu(Tensor, f64),
    Tanh(Tensor),
    Sigmoid(Tensor),
    Silu(Tensor),
    Softplus(Tensor),
    Exp(Tensor),
    Log(Tensor),
    Sqrt(Tensor),
    Square(Tensor),
    Sum(Tensor),
    Concat(Vec<Tensor>, usize),
    Slice { x: Tensor, axis: usize, start: usize },
    Pad { x: Tensor, axis: usize, start: usize },
    Conv1d { x: Tensor, w: Tensor, stride: usize, pad: usize },
    ConvTranspose1d { x: Tensor, w: Tensor, stride: usize, pad: usize },
    Conv1dWeightGrad { x: Tensor, g: Tensor, stride: usize, pad: usize },
    Conv2d { x: Tensor, w: Tensor, stride: usize, pad: usize },
    Conv2dInputGrad { g: Tensor, w: Tensor },
    Conv2dWeightGrad { x: Tensor, g: Tensor },
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<&Tensor> {
        use Op::*;
        match self {
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => vec![a, b],
            Neg(a) | Scale(a, _) | AddScalar(a) | Expand(a) | SumTo(a) | Reshape(a)
            | Transpose(a) | LeakyRelu(a, _) | Tanh(a) | Sigmoid(a) | Silu(a) | Softplus(a)
            | Exp(a) | Log(a) | Sqrt(a) | Square(a) | Sum(a) => vec![a],
            Concat(xs, _) => xs.iter().collect(),
            Slice { x, .. } | Pad { x, .. } => vec![x],
            Conv1d { x, w, .. } | ConvTranspose1d { x, w, .. } | Conv2d { x, w, .. } => {
                vec![x, w]
            }
            Conv1dWeightGrad { x, g, .. } | Conv2dWeightGrad { x, g, .. } => vec![x, g],
            Conv2dInputGrad { g, w, .. } => vec![g, w],
        }
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Numpy-style broadcast of two shapes.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for k in 0..rank {
        let da = if k + a.len() >= rank { a[k + a.len() - rank] } else { 1 };
        let db = if k + b.len() >= rank { b[k + b.len() - rank] } else { 1 };
        out[k] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every flat index of `out`, the flat index of `input` it reads from
/// under broadcasting.
fn broadcast_index(input: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let offset = rank - input.len();
    let mut in_strides = vec![0usize; rank];
    let mut stride = 1;
    for k in (0..input.len()).rev() {
        in_strides[k + offset] = if input[k] == 1 { 0 } else { stride };
        stride *= input[k];
    }
    let total = numel(out);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut pos = 0usize;
    for _ in 0..total {
        map.push(pos);
        for k in (0..rank).rev() {
            idx[k] += 1;
            pos += in_strides[k];
            if idx[k] < out[k] {
                break;
            }
            pos -= in_strides[k] * idx[k];
            idx[k] = 0;
        }
    }
    map
}

fn can_broadcast_to(from: &[usize], to: &[usize]) -> bool {
    from.len() <= to.len() && broadcast_shape(from, to).as_deref() == Some(to)
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

impl Tensor {
    fn make(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Option<Op>) -> Tensor {
        debug_assert_eq!(data.len(), numel(&shape));
        Tensor(Rc::new(Node {
            shape,
            data: RefCell::new(Rc::new(data)),
            requires_grad,
            grad: RefCell::new(None),
            op,
        }))
    }

    /// Output of an op: records the op only if some input needs gradients.
    pub(crate) fn from_op(data: Vec<f64>, shape: Vec<usize>, op: Op) -> Tensor {
        let rg = op.inputs().iter().any(|t| t.requires_grad());
        if rg {
            Tensor::make(data, shape, true, Some(op))
        } else {
            Tensor::make(data, shape, false, None)
        }
    }

    /// Constant tensor (no gradient).
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if data.len() != numel(shape) {
            return Err(Error::shape(
                "new",
                format!("{} values for shape {:?}", data.len(), shape),
            ));
        }
        Ok(Tensor::make(data, shape.to_vec(), false, None))
    }

    /// Trainable leaf tensor.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::new(data, shape)?.requiring_grad())
    }

    /// Copy of this tensor's value as a fresh leaf that requires gradients.
    pub fn requiring_grad(&self) -> Tensor {
        Tensor(Rc::new(Node {
            shape: self.0.shape.clone(),
            data: RefCell::new(self.data()),
            requires_grad: true,
            grad: RefCell::new(None),
            op: None,
        }))
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::make(vec![v], vec![], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        Tensor::make(vec![v; numel(shape)], shape.to_vec(), false, None)
    }

    /// Standard-normal draws scaled by `std`.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
        let data = (0..numel(shape))
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Tensor::make(data, shape.to_vec(), false, None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    /// Shared handle to the current values.
    pub fn data(&self) -> Rc<Vec<f64>> {
        self.0.data.borrow().clone()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().as_ref().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.0.data.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Overwrites the values of a leaf in place (used by optimizers and
    /// checkpoint loading).
    pub fn set_data(&self, data: Vec<f64>) -> Result<()> {
        if data.len() != self.numel() {
            return Err(Error::shape(
                "set_data",
                format!("{} values for shape {:?}", data.len(), self.shape()),
            ));
        }
        *self.0.data.borrow_mut() = Rc::new(data);
        Ok(())
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor(Rc::new(Node {
            shape: self.0.shape.clone(),
            data: RefCell::new(self.data()),
            requires_grad: false,
            grad: RefCell::new(None),
            op: None,
        }))
    }

    pub(crate) fn ptr(&self) -> *const Node {
        Rc::as_ptr(&self.0)
    }

    pub(crate) fn node_op(&self) -> Option<&Op> {
        self.0.op.as_ref()
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.data().iter().map(|&v| f(v)).collect()
    }

    fn zip_same(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let a = self.data();
        let b = other.data();
        a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect()
    }

    /// Broadcasts both operands to a common shape.
    fn align(&self, other: &Tensor, op: &'static str) -> Result<(Tensor, Tensor)> {
        if self.shape() == other.shape() {
            return Ok((self.clone(), other.clone()));
        }
        let shape = broadcast_shape(self.shape(), other.shape()).ok_or_else(|| {
            Error::shape(op, format!("{:?} vs {:?}", self.shape(), other.shape()))
        })?;
        Ok((self.expand(&shape)?, other.expand(&shape)?))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = self.align(other, "add")?;
        let data = a.zip_same(&b, |x, y| x + y);
        Ok(Tensor::from_op(data, a.shape().to_vec(), Op::Add(a, b)))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = self.align(other, "sub")?;
        let data = a.zip_same(&b, |x, y| x - y);
        Ok(Tensor::from_op(data, a.shape().to_vec(), Op::Sub(a, b)))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = self.align(other, "mul")?;
        let data = a.zip_same(&b, |x, y| x * y);
        Ok(Tensor::from_op(data, a.shape().to_vec(), Op::Mul(a, b)))
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = self.align(other, "div")?;
        let data = a.zip_same(&b, |x, y| x / y);
        Ok(Tensor::from_op(data, a.shape().to_vec(), Op::Div(a, b)))
    }

    pub fn neg(&self) -> Tensor {
        Tensor::from_op(self.map(|v| -v), self.shape().to_vec(), Op::Neg(self.clone()))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor::from_op(
            self.map(|v| c * v),
            self.shape().to_vec(),
            Op::Scale(self.clone(), c),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        Tensor::from_op(
            self.map(|v| v + c),
            self.shape().to_vec(),
            Op::AddScalar(self.clone()),
        )
    }

    /// Broadcasts to `shape` (numpy rules).
    pub fn expand(&self, shape: &[usize]) -> Result<Tensor> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        if !can_broadcast_to(self.shape(), shape) {
            return Err(Error::shape(
                "expand",
                format!("{:?} cannot broadcast to {:?}", self.shape(), shape),
            ));
        }
        let src = self.data();
        let data = broadcast_index(self.shape(), shape)
            .into_iter()
            .map(|i| src[i])
            .collect();
        Ok(Tensor::from_op(data, shape.to_vec(), Op::Expand(self.clone())))
    }

    /// Sums over broadcast dimensions so the result has `shape`; the
    /// adjoint of [`Tensor::expand`].
    pub fn sum_to(&self, shape: &[usize]) -> Result<Tensor> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        if !can_broadcast_to(shape, self.shape()) {
            return Err(Error::shape(
                "sum_to",
                format!("{:?} does not reduce to {:?}", self.shape(), shape),
            ));
        }
        let src = self.data();
        let mut data = vec![0.0; numel(shape)];
        for (j, i) in broadcast_index(shape, self.shape()).into_iter().enumerate() {
            data[i] += src[j];
        }
        Ok(Tensor::from_op(data, shape.to_vec(), Op::SumTo(self.clone())))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} to {:?}", self.shape(), shape),
            ));
        }
        Ok(Tensor::from_op(
            self.to_vec(),
            shape.to_vec(),
            Op::Reshape(self.clone()),
        ))
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        let [m, n] = self.shape() else {
            return Err(Error::shape("transpose", format!("{:?} is not 2-D", self.shape())));
        };
        let (m, n) = (*m, *n);
        let src = self.data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        Ok(Tensor::from_op(data, vec![n, m], Op::Transpose(self.clone())))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (&[m, k], &[k2, n]) = (self.shape(), other.shape()) else {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}: both operands must be 2-D", self.shape(), other.shape()),
            ));
        };
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        let data = kernels::matmul(&self.data(), &other.data(), m, k, n);
        Ok(Tensor::from_op(
            data,
            vec![m, n],
            Op::MatMul(self.clone(), other.clone()),
        ))
    }

    pub fn relu(&self) -> Tensor {
        self.leaky_relu(0.0)
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        Tensor::from_op(
            self.map(|v| if v > 0.0 { v } else { slope * v }),
            self.shape().to_vec(),
            Op::LeakyRelu(self.clone(), slope),
        )
    }

    pub fn tanh(&self) -> Tensor {
        Tensor::from_op(self.map(f64::tanh), self.shape().to_vec(), Op::Tanh(self.clone()))
    }

    pub fn sigmoid(&self) -> Tensor {
        Tensor::from_op(
            self.map(kernels::sigmoid),
            self.shape().to_vec(),
            Op::Sigmoid(self.clone()),
        )
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&self) -> Tensor {
        Tensor::from_op(
            self.map(|v| v * kernels::sigmoid(v)),
            self.shape().to_vec(),
            Op::Silu(self.clone()),
        )
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&self) -> Tensor {
        Tensor::from_op(
            self.map(kernels::softplus),
            self.shape().to_vec(),
            Op::Softplus(self.clone()),
        )
    }

    pub fn exp(&self) -> Tensor {
        Tensor::from_op(self.map(f64::exp), self.shape().to_vec(), Op::Exp(self.clone()))
    }

    pub fn log(&self) -> Tensor {
        Tensor::from_op(self.map(f64::ln), self.shape().to_vec(), Op::Log(self.clone()))
    }

    pub fn sqrt(&self) -> Tensor {
        Tensor::from_op(self.map(f64::sqrt), self.shape().to_vec(), Op::Sqrt(self.clone()))
    }

    pub fn square(&self) -> Tensor {
        Tensor::from_op(
            self.map(|v| v * v),
            self.shape().to_vec(),
            Op::Square(self.clone()),
        )
    }

    /// Sum of all elements as a 0-d tensor.
    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        Tensor::from_op(vec![s], vec![], Op::Sum(self.clone()))
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Mean over every axis whose target extent is 1, e.g. `[B, C, L] -> [B, C, 1]`.
    pub fn mean_to(&self, shape: &[usize]) -> Result<Tensor> {
        let n = self.numel() as f64 / numel(shape).max(1) as f64;
        Ok(self.sum_to(shape)?.scale(1.0 / n))
    }

    /// Contiguous range `[start, start + len)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.shape().len() || start + len > self.shape()[axis] {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {}) on axis {axis} of {:?}", start + len, self.shape()),
            ));
        }
        let (outer, n, inner) = axis_split(self.shape(), axis);
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(
            data,
            shape,
            Op::Slice {
                x: self.clone(),
                axis,
                start,
            },
        ))
    }

    /// Zero-pads along `axis` so this tensor occupies `[start, start + len)` of
    /// an extent of `full`; the adjoint of [`Tensor::slice`].
    pub(crate) fn pad_axis(&self, axis: usize, start: usize, full: usize) -> Result<Tensor> {
        let (outer, n, inner) = axis_split(self.shape(), axis);
        if start + n > full {
            return Err(Error::shape("pad", format!("{start}+{n} > {full}")));
        }
        let src = self.data();
        let mut data = vec![0.0; outer * full * inner];
        for o in 0..outer {
            let dst = o * full * inner + start * inner;
            data[dst..dst + n * inner].copy_from_slice(&src[o * n * inner..(o + 1) * n * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = full;
        Ok(Tensor::from_op(
            data,
            shape,
            Op::Pad {
                x: self.clone(),
                axis,
                start,
            },
        ))
    }

    /// 1-D convolution. `self`: `[B, C_in, L]`, `w`: `[C_out, C_in, K]`.
    pub fn conv1d(&self, w: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        let (b, ci, l) = dims3("conv1d", self)?;
        let (co, wci, k) = dims3("conv1d", w)?;
        if wci != ci || stride == 0 || l + 2 * pad < k {
            return Err(Error::shape(
                "conv1d",
                format!("input {:?}, weight {:?}, stride {stride}, pad {pad}", self.shape(), w.shape()),
            ));
        }
        let lo = (l + 2 * pad - k) / stride + 1;
        let data = kernels::conv1d(&self.data(), &w.data(), b, ci, l, co, k, stride, pad, lo);
        Ok(Tensor::from_op(
            data,
            vec![b, co, lo],
            Op::Conv1d {
                x: self.clone(),
                w: w.clone(),
                stride,
                pad,
            },
        ))
    }

    /// 1-D transposed convolution. `self`: `[B, C_in, L]`, `w`: `[C_in, C_out, K]`;
    /// output length `(L - 1) * stride - 2 * pad + K`.
    pub fn conv_transpose1d(&self, w: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        let (_, _, l) = dims3("conv_transpose1d", self)?;
        let (_, _, k) = dims3("conv_transpose1d", w)?;
        if l == 0 || (l - 1) * stride + k < 2 * pad + 1 {
            return Err(Error::shape("conv_transpose1d", "empty output"));
        }
        self.conv_transpose1d_len(w, stride, pad, (l - 1) * stride + k - 2 * pad)
    }

    pub(crate) fn conv_transpose1d_len(
        &self,
        w: &Tensor,
        stride: usize,
        pad: usize,
        out_len: usize,
    ) -> Result<Tensor> {
        let (b, ci, l) = dims3("conv_transpose1d", self)?;
        let (wci, co, k) = dims3("conv_transpose1d", w)?;
        if wci != ci || stride == 0 {
            return Err(Error::shape(
                "conv_transpose1d",
                format!("input {:?}, weight {:?}", self.shape(), w.shape()),
            ));
        }
        let data = kernels::conv_transpose1d(
            &self.data(),
            &w.data(),
            b,
            ci,
            l,
            co,
            k,
            stride,
            pad,
            out_len,
        );
        Ok(Tensor::from_op(
            data,
            vec![b, co, out_len],
            Op::ConvTranspose1d {
                x: self.clone(),
                w: w.clone(),
                stride,
                pad,
            },
        ))
    }

    /// `out[a, c, k] = sum_{b, l} g[b, a, l] * x[b, c, l * stride + k - pad]`.
    pub(crate) fn conv1d_weight_grad(
        x: &Tensor,
        g: &Tensor,
        stride: usize,
        pad: usize,
        k: usize,
    ) -> Result<Tensor> {
        let (b, c, lx) = dims3("conv1d_weight_grad", x)?;
        let (gb, a, lg) = dims3("conv1d_weight_grad", g)?;
        if gb != b {
            return Err(Error::shape("conv1d_weight_grad", "batch mismatch"));
        }
        let data = kernels::conv1d_weight_grad(&x.data(), &g.data(), b, c, lx, a, lg, k, stride, pad);
        Ok(Tensor::from_op(
            data,
            vec![a, c, k],
            Op::Conv1dWeightGrad {
                x: x.clone(),
                g: g.clone(),
                stride,
                pad,
            },
        ))
    }

    /// 2-D convolution. `self`: `[B, C_in, H, W]`, `w`: `[C_out, C_in, KH, KW]`.
    /// Differentiable once; the gradient graph it produces cannot itself be
    /// differentiated.
    pub fn conv2d(&self, w: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        let (b, ci, h, wd) = dims4("conv2d", self)?;
        let (co, wci, kh, kw) = dims4("conv2d", w)?;
        if wci != ci || stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?}, weight {:?}", self.shape(), w.shape()),
            ));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (wd + 2 * pad - kw) / stride + 1;
        let geom = kernels::Geom2d { b, ci, h, w: wd, co, kh, kw, stride, pad, ho, wo };
        let data = kernels::conv2d(&self.data(), &w.data(), &geom);
        Ok(Tensor::from_op(
            data,
            vec![b, co, ho, wo],
            Op::Conv2d {
                x: self.clone(),
                w: w.clone(),
                stride,
                pad,
            },
        ))
    }

    pub(crate) fn conv2d_input_grad(
        g: &Tensor,
        w: &Tensor,
        stride: usize,
        pad: usize,
        in_hw: (usize, usize),
    ) -> Result<Tensor> {
        let (b, co, ho, wo) = dims4("conv2d_input_grad", g)?;
        let (_, ci, kh, kw) = dims4("conv2d_input_grad", w)?;
        let geom = kernels::Geom2d { b, ci, h: in_hw.0, w: in_hw.1, co, kh, kw, stride, pad, ho, wo };
        let data = kernels::conv2d_input_grad(&g.data(), &w.data(), &geom);
        Ok(Tensor::from_op(
            data,
            vec![b, ci, in_hw.0, in_hw.1],
            Op::Conv2dInputGrad { g: g.clone(), w: w.clone() },
        ))
    }

    pub(crate) fn conv2d_weight_grad(
        x: &Tensor,
        g: &Tensor,
        stride: usize,
        pad: usize,
        k_hw: (usize, usize),
    ) -> Result<Tensor> {
        let (b, ci, h, wd) = dims4("conv2d_weight_grad", x)?;
        let (_, co, ho, wo) = dims4("conv2d_weight_grad", g)?;
        let geom = kernels::Geom2d { b, ci, h, w: wd, co, kh: k_hw.0, kw: k_hw.1, stride, pad, ho, wo };
        let data = kernels::conv2d_weight_grad(&x.data(), &g.data(), &geom);
        Ok(Tensor::from_op(
            data,
            vec![co, ci, k_hw.0, k_hw.1],
            Op::Conv2dWeightGrad { x: x.clone(), g: g.clone() },
        ))
    }
}

/// Concatenation along `axis`; all other extents must agree.
pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat", "no inputs"))?;
    let rank = first.shape().len();
    if axis >= rank {
        return Err(Error::shape("concat", format!("axis {axis} of rank {rank}")));
    }
    let mut total = 0;
    for p in parts {
        let s = p.shape();
        let same = s.len() == rank
            && s.iter()
                .zip(first.shape())
                .enumerate()
                .all(|(k, (a, b))| k == axis || a == b);
        if !same {
            return Err(Error::shape(
                "concat",
                format!("{:?} vs {:?} along axis {axis}", s, first.shape()),
            ));
        }
        total += s[axis];
    }
    let (outer, _, inner) = axis_split(first.shape(), axis);
    let mut data = Vec::with_capacity(outer * total * inner);
    let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();
    for o in 0..outer {
        for (p, d) in parts.iter().zip(&datas) {
            let n = p.shape()[axis] * inner;
            data.extend_from_slice(&d[o * n..(o + 1) * n]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_op(data, shape, Op::Concat(parts.to_vec(), axis)))
}

pub(crate) fn dims3(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [a, b, c] => Ok((a, b, c)),
        ref s => Err(Error::shape(op, format!("expected 3-D, got {s:?}"))),
    }
}

pub(crate) fn dims4(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [a, b, c, d] => Ok((a, b, c, d)),
        ref s => Err(Error::shape(op, format!("expected 4-D, got {s:?}"))),
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data();
        let head: Vec<_> = data.iter().take(8).collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("data", &head)
            .finish()
    }
}
