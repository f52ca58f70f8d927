//! Reverse-mode traversal.
//!
//! Every vector-Jacobian product is written with ordinary tensor ops. When
//! gradients are requested with `create_graph`, those ops are recorded like
//! any forward computation, so the resulting gradients can themselves be
//! differentiated. Otherwise saved inputs are detached first and nothing is
//! recorded.
//!
//! Second-order support covers every op except the two gradient kernels of
//! `conv2d`, which return [`Error::DoubleBackward`] when reached.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};

use super::tensor::{Node, Op, Tensor};
use crate::error::{Error, Result};

fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut visited: HashSet<*const Node> = HashSet::new();
    let mut order = Vec::new();
    let mut stack = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.ptr()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(op) = t.node_op() {
            for inp in op.inputs().into_iter().rev() {
                if inp.requires_grad() && !visited.contains(&inp.ptr()) {
                    stack.push((inp.clone(), false));
                }
            }
        }
    }
    order
}

/// Runs the reverse pass from `root` seeded with `seed` and hands each
/// node's total gradient to `sink`. With `targets`, only nodes from which
/// some target is reachable receive gradients.
fn backprop(
    root: &Tensor,
    seed: Tensor,
    create_graph: bool,
    targets: Option<&HashSet<*const Node>>,
    mut sink: impl FnMut(&Tensor, Tensor),
) -> Result<()> {
    if !root.requires_grad() {
        return Ok(());
    }
    let order = topo_order(root);
    let relevant: Option<HashSet<*const Node>> = targets.map(|targets| {
        let mut rel = HashSet::new();
        for node in &order {
            let hit = targets.contains(&node.ptr())
                || node
                    .node_op()
                    .is_some_and(|op| op.inputs().iter().any(|i| rel.contains(&i.ptr())));
            if hit {
                rel.insert(node.ptr());
            }
        }
        rel
    });
    let need = |t: &Tensor| {
        t.requires_grad() && relevant.as_ref().is_none_or(|r| r.contains(&t.ptr()))
    };
    let mut pending: HashMap<*const Node, Tensor> = HashMap::new();
    pending.insert(root.ptr(), seed);
    for node in order.iter().rev() {
        let Some(g) = pending.remove(&node.ptr()) else {
            continue;
        };
        if let Some(op) = node.node_op() {
            let grads = vjp(node, op, &g, create_graph, &need)?;
            for (inp, gi) in op.inputs().into_iter().zip(grads) {
                let Some(gi) = gi else { continue };
                if !need(inp) {
                    continue;
                }
                match pending.entry(inp.ptr()) {
                    Entry::Occupied(mut e) => {
                        let acc = e.get().add(&gi)?;
                        e.insert(acc);
                    }
                    Entry::Vacant(e) => {
                        e.insert(gi);
                    }
                }
            }
        }
        sink(node, g);
    }
    Ok(())
}

impl Tensor {
    /// Accumulates `d self / d leaf` into every reachable trainable leaf.
    ///
    /// Gradients add up across calls; clear them with [`Tensor::zero_grad`].
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", self.shape()),
            ));
        }
        let seed = Tensor::ones(self.shape());
        backprop(self, seed, false, None, |node, g| {
            if node.is_leaf() {
                let g = g.data();
                let mut slot = node.0.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => acc.iter_mut().zip(g.iter()).for_each(|(a, b)| *a += b),
                    None => *slot = Some(g.as_ref().clone()),
                }
            }
        })
    }
}

/// Gradients of the scalar `output` with respect to each of `inputs`.
///
/// Inputs the output does not depend on get zeros. With `create_graph` the
/// returned tensors are part of the graph and can be differentiated again.
pub fn grad(output: &Tensor, inputs: &[&Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
    if output.numel() != 1 {
        return Err(Error::shape(
            "grad",
            format!("output must be a scalar, got shape {:?}", output.shape()),
        ));
    }
    let wanted: HashMap<*const Node, usize> =
        inputs.iter().enumerate().map(|(i, t)| (t.ptr(), i)).collect();
    let mut found: Vec<Option<Tensor>> = vec![None; inputs.len()];
    let targets: HashSet<*const Node> = wanted.keys().copied().collect();
    backprop(output, Tensor::ones(output.shape()), create_graph, Some(&targets), |node, g| {
        if let Some(&i) = wanted.get(&node.ptr()) {
            found[i] = Some(g);
        }
    })?;
    Ok(found
        .into_iter()
        .zip(inputs)
        .map(|(g, t)| g.unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect())
}

/// Gradient of `sum_b f(x)_b` with respect to `x`, where `f` maps a batch to
/// one scalar per batch element (`[B]` or `[B, 1]`).
pub fn input_gradient(x: &Tensor, f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<Tensor> {
    let x = x.requiring_grad();
    let out = f(&x)?;
    let batch = x.shape().first().copied().unwrap_or(1);
    if out.numel() != batch {
        return Err(Error::shape(
            "input_gradient",
            format!(
                "expected one scalar per batch element ({batch}), got shape {:?}",
                out.shape()
            ),
        ));
    }
    Ok(grad(&out.sum(), &[&x], false)?.remove(0))
}

fn vjp(
    out: &Tensor,
    op: &Op,
    g: &Tensor,
    cg: bool,
    need: &dyn Fn(&Tensor) -> bool,
) -> Result<Vec<Option<Tensor>>> {
    let keep = |t: &Tensor| if cg { t.clone() } else { t.detach() };
    use Op::*;
    Ok(match op {
        Add(a, b) => vec![need(a).then(|| g.clone()), need(b).then(|| g.clone())],
        Sub(a, b) => vec![need(a).then(|| g.clone()), need(b).then(|| g.neg())],
        Mul(a, b) => vec![
            if need(a) { Some(g.mul(&keep(b))?) } else { None },
            if need(b) { Some(g.mul(&keep(a))?) } else { None },
        ],
        Div(a, b) => {
            let bk = keep(b);
            vec![
                if need(a) { Some(g.div(&bk)?) } else { None },
                if need(b) {
                    Some(g.mul(&keep(a))?.div(&bk.square())?.neg())
                } else {
                    None
                },
            ]
        }
        Neg(_) => vec![Some(g.neg())],
        Scale(_, c) => vec![Some(g.scale(*c))],
        AddScalar(_) => vec![Some(g.clone())],
        Expand(a) => vec![Some(g.sum_to(a.shape())?)],
        SumTo(a) => vec![Some(g.expand(a.shape())?)],
        Reshape(a) => vec![Some(g.reshape(a.shape())?)],
        Transpose(_) => vec![Some(g.transpose()?)],
        MatMul(a, b) => vec![
            if need(a) { Some(g.matmul(&keep(b).transpose()?)?) } else { None },
            if need(b) { Some(keep(a).transpose()?.matmul(g)?) } else { None },
        ],
        LeakyRelu(a, slope) => {
            let mask: Vec<f64> = a
                .data()
                .iter()
                .map(|&v| if v > 0.0 { 1.0 } else { *slope })
                .collect();
            vec![Some(g.mul(&Tensor::new(mask, a.shape())?)?)]
        }
        Tanh(_) => {
            let y = keep(out);
            vec![Some(g.mul(&y.square().neg().add_scalar(1.0))?)]
        }
        Sigmoid(_) => {
            let y = keep(out);
            vec![Some(g.mul(&y.mul(&y.neg().add_scalar(1.0))?)?)]
        }
        Silu(a) => {
            let x = keep(a);
            let s = x.sigmoid();
            let d = s.mul(&x.mul(&s.neg().add_scalar(1.0))?.add_scalar(1.0))?;
            vec![Some(g.mul(&d)?)]
        }
        Softplus(a) => vec![Some(g.mul(&keep(a).sigmoid())?)],
        Exp(_) => vec![Some(g.mul(&keep(out))?)],
        Log(a) => vec![Some(g.div(&keep(a))?)],
        Sqrt(_) => vec![Some(g.div(&keep(out))?.scale(0.5))],
        Square(a) => vec![Some(g.mul(&keep(a))?.scale(2.0))],
        Sum(a) => vec![Some(g.expand(a.shape())?)],
        Concat(parts, axis) => {
            let mut offset = 0;
            let mut grads = Vec::with_capacity(parts.len());
            for p in parts {
                let n = p.shape()[*axis];
                grads.push(if need(p) { Some(g.slice(*axis, offset, n)?) } else { None });
                offset += n;
            }
            grads
        }
        Slice { x, axis, start } => vec![Some(g.pad_axis(*axis, *start, x.shape()[*axis])?)],
        Pad { x, axis, start } => vec![Some(g.slice(*axis, *start, x.shape()[*axis])?)],
        Conv1d { x, w, stride, pad } => vec![
            if need(x) {
                Some(g.conv_transpose1d_len(&keep(w), *stride, *pad, x.shape()[2])?)
            } else {
                None
            },
            if need(w) {
                Some(Tensor::conv1d_weight_grad(&keep(x), g, *stride, *pad, w.shape()[2])?)
            } else {
                None
            },
        ],
        ConvTranspose1d { x, w, stride, pad } => vec![
            if need(x) { Some(g.conv1d(&keep(w), *stride, *pad)?) } else { None },
            if need(w) {
                Some(Tensor::conv1d_weight_grad(g, &keep(x), *stride, *pad, w.shape()[2])?)
            } else {
                None
            },
        ],
        Conv1dWeightGrad { x, g: gr, stride, pad } => vec![
            if need(x) {
                Some(keep(gr).conv_transpose1d_len(g, *stride, *pad, x.shape()[2])?)
            } else {
                None
            },
            if need(gr) { Some(keep(x).conv1d(g, *stride, *pad)?) } else { None },
        ],
        Conv2d { x, w, stride, pad } => {
            let xs = x.shape();
            let ws = w.shape();
            vec![
                if need(x) {
                    Some(Tensor::conv2d_input_grad(g, &keep(w), *stride, *pad, (xs[2], xs[3]))?)
                } else {
                    None
                },
                if need(w) {
                    Some(Tensor::conv2d_weight_grad(&keep(x), g, *stride, *pad, (ws[2], ws[3]))?)
                } else {
                    None
                },
            ]
        }
        Conv2dInputGrad { .. } | Conv2dWeightGrad { .. } => {
            return Err(Error::DoubleBackward("conv2d"));
        }
    })
}
