use super::tensor::{matmul_nt_into, matmul_tn_into, sigmoid, softplus, Tensor};
use super::NumericsError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Exp,
    Softplus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Unary(Unary, Var),
    Softmax { input: Var, axis: usize },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Sum(Var),
    RowSum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of differentiable operations.
///
/// Every operation appends one node; `backward` walks the nodes in reverse
/// exactly once and consumes the tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for `var`, or zeros of `shape` when the loss does not depend on it.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

/// `(outer, axis_len, inner)` decomposition of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize), NumericsError> {
    if axis >= shape.len() {
        return Err(NumericsError::Axis {
            axis,
            shape: shape.to_vec(),
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (va, vb) = (self.value(a), self.value(b));
        let f = match kind {
            Binary::Add => |x: f64, y: f64| x + y,
            Binary::Sub => |x: f64, y: f64| x - y,
            Binary::Mul => |x: f64, y: f64| x * y,
        };
        let out = if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::from_parts(va.shape().to_vec(), data)
        } else if vb.is_scalar() {
            let y = vb.data()[0];
            Tensor::from_parts(va.shape().to_vec(), va.data().iter().map(|&x| f(x, y)).collect())
        } else if va.is_scalar() {
            let x = va.data()[0];
            Tensor::from_parts(vb.shape().to_vec(), vb.data().iter().map(|&y| f(x, y)).collect())
        } else {
            return Err(NumericsError::ShapeMismatch {
                op: match kind {
                    Binary::Add => "add",
                    Binary::Sub => "sub",
                    Binary::Mul => "mul",
                },
                left: va.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, factor), rg)
    }

    /// Adds a `1 × n` (or length-`n`) row to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.value(a).matrix_dims()?;
        let vr = self.value(row);
        if vr.len() != n {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row",
                left: self.value(a).shape().to_vec(),
                right: vr.shape().to_vec(),
            });
        }
        let r = vr.data();
        let mut data = self.value(a).data().to_vec();
        for i in 0..m {
            for (x, &b) in data[i * n..(i + 1) * n].iter_mut().zip(r) {
                *x += b;
            }
        }
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(&[a, row]);
        Ok(self.push(Tensor::from_parts(shape, data), Op::AddRow(a, row), rg))
    }

    /// Scales row `i` of an `m × n` matrix by entry `i` of an `m × 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.value(a).matrix_dims()?;
        let vc = self.value(col);
        if vc.len() != m {
            return Err(NumericsError::ShapeMismatch {
                op: "mul_col",
                left: self.value(a).shape().to_vec(),
                right: vc.shape().to_vec(),
            });
        }
        let c = vc.data();
        let mut data = self.value(a).data().to_vec();
        for i in 0..m {
            for x in &mut data[i * n..(i + 1) * n] {
                *x *= c[i];
            }
        }
        let shape = self.value(a).shape().to_vec();
        let rg = self.rg(&[a, col]);
        Ok(self.push(Tensor::from_parts(shape, data), Op::MulCol(a, col), rg))
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let f = match kind {
            Unary::Tanh => f64::tanh,
            Unary::Sigmoid => sigmoid,
            Unary::Exp => f64::exp,
            Unary::Softplus => softplus,
        };
        let out = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(out, Op::Unary(kind, a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    /// Softmax along `axis`, shifted by the per-slice maximum.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, NumericsError> {
        let out = softmax_values(self.value(a), axis)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Softmax { input: a, axis }, rg))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, NumericsError> {
        let first = inputs.first().ok_or(NumericsError::EmptyInput { op: "concat" })?;
        let base = self.value(*first).shape().to_vec();
        split_axis(&base, axis)?;
        let mut total = 0;
        for v in inputs {
            let s = self.value(*v).shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis)?;
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = self.rg(inputs);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Copies `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, NumericsError> {
        let src = self.value(a);
        let (outer, n, inner) = split_axis(src.shape(), axis)?;
        if len == 0 || start + len > n {
            return Err(NumericsError::SliceRange {
                start,
                len,
                shape: src.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&src.data()[base..base + len * inner]);
        }
        let mut shape = src.shape().to_vec();
        shape[axis] = len;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Slice { input: a, axis, start }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sums each row of an `m × n` matrix into an `m × 1` column.
    pub fn row_sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.value(a).matrix_dims()?;
        let d = self.value(a).data();
        let data = (0..m).map(|i| d[i * n..(i + 1) * n].iter().sum()).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_parts(vec![m, 1], data), Op::RowSum(a), rg))
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, NumericsError> {
        if self.consumed {
            return Err(NumericsError::TapeConsumed);
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(NumericsError::NonScalarLoss {
                shape: lv.shape().to_vec(),
            });
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let mut acc = |var: Var, contribution: &dyn Fn(&mut [f64])| {
                if !nodes[var.0].requires_grad {
                    return;
                }
                let slot = grads[var.0].get_or_insert_with(|| vec![0.0; nodes[var.0].value.len()]);
                contribution(slot);
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let va = &nodes[a.0].value;
                    let vb = &nodes[b.0].value;
                    let (m, k) = va.matrix_dims()?;
                    let (_, n) = vb.matrix_dims()?;
                    acc(*a, &|s| matmul_nt_into(&g, vb.data(), s, m, n, k));
                    acc(*b, &|s| matmul_tn_into(va.data(), &g, s, m, k, n));
                }
                Op::Binary(kind, a, b) => {
                    let va = &nodes[a.0].value;
                    let vb = &nodes[b.0].value;
                    let out_len = g.len();
                    // Gradient of each side, pre-reduction, given the other operand.
                    let side = |this: &Tensor, other: &Tensor, is_left: bool, s: &mut [f64]| {
                        let other_at = |i: usize| {
                            if other.len() == out_len {
                                other.data()[i]
                            } else {
                                other.data()[0]
                            }
                        };
                        let local = |i: usize| match kind {
                            Binary::Add => g[i],
                            Binary::Sub => {
                                if is_left {
                                    g[i]
                                } else {
                                    -g[i]
                                }
                            }
                            Binary::Mul => g[i] * other_at(i),
                        };
                        if this.len() == out_len {
                            for (i, x) in s.iter_mut().enumerate() {
                                *x += local(i);
                            }
                        } else {
                            s[0] += (0..out_len).map(local).sum::<f64>();
                        }
                    };
                    acc(*a, &|s| side(va, vb, true, s));
                    acc(*b, &|s| side(vb, va, false, s));
                }
                Op::Scale(a, f) => {
                    acc(*a, &|s| {
                        for (x, &gi) in s.iter_mut().zip(&g) {
                            *x += gi * f;
                        }
                    });
                }
                Op::AddRow(a, row) => {
                    let n = nodes[row.0].value.len();
                    acc(*a, &|s| {
                        for (x, &gi) in s.iter_mut().zip(&g) {
                            *x += gi;
                        }
                    });
                    acc(*row, &|s| {
                        for chunk in g.chunks(n) {
                            for (x, &gi) in s.iter_mut().zip(chunk) {
                                *x += gi;
                            }
                        }
                    });
                }
                Op::MulCol(a, col) => {
                    let va = &nodes[a.0].value;
                    let vc = &nodes[col.0].value;
                    let n = va.len() / vc.len();
                    acc(*a, &|s| {
                        for (i, (sx, gx)) in s.chunks_mut(n).zip(g.chunks(n)).enumerate() {
                            let c = vc.data()[i];
                            for (x, &gi) in sx.iter_mut().zip(gx) {
                                *x += gi * c;
                            }
                        }
                    });
                    acc(*col, &|s| {
                        for (i, (ax, gx)) in va.data().chunks(n).zip(g.chunks(n)).enumerate() {
                            s[i] += ax.iter().zip(gx).map(|(x, y)| x * y).sum::<f64>();
                        }
                    });
                }
                Op::Unary(kind, a) => {
                    let y = &node.value;
                    let x = &nodes[a.0].value;
                    acc(*a, &|s| {
                        for i in 0..s.len() {
                            let d = match kind {
                                Unary::Tanh => 1.0 - y.data()[i] * y.data()[i],
                                Unary::Sigmoid => y.data()[i] * (1.0 - y.data()[i]),
                                Unary::Exp => y.data()[i],
                                Unary::Softplus => sigmoid(x.data()[i]),
                            };
                            s[i] += g[i] * d;
                        }
                    });
                }
                Op::Softmax { input, axis } => {
                    let y = &node.value;
                    let (outer, n, inner) = split_axis(y.shape(), *axis)?;
                    acc(*input, &|s| {
                        for o in 0..outer {
                            for k in 0..inner {
                                let at = |j: usize| o * n * inner + j * inner + k;
                                let dot: f64 = (0..n).map(|j| g[at(j)] * y.data()[at(j)]).sum();
                                for j in 0..n {
                                    s[at(j)] += y.data()[at(j)] * (g[at(j)] - dot);
                                }
                            }
                        }
                    });
                }
                Op::Concat { inputs, axis } => {
                    let (outer, total, inner) = split_axis(node.value.shape(), *axis)?;
                    let mut offset = 0;
                    for v in inputs {
                        let width = nodes[v.0].value.shape()[*axis];
                        acc(*v, &|s| {
                            for o in 0..outer {
                                let src = o * total * inner + offset * inner;
                                let dst = o * width * inner;
                                for (x, &gi) in s[dst..dst + width * inner]
                                    .iter_mut()
                                    .zip(&g[src..src + width * inner])
                                {
                                    *x += gi;
                                }
                            }
                        });
                        offset += width;
                    }
                }
                Op::Slice { input, axis, start } => {
                    let (outer, n, inner) = split_axis(nodes[input.0].value.shape(), *axis)?;
                    let len = node.value.shape()[*axis];
                    acc(*input, &|s| {
                        for o in 0..outer {
                            let dst = o * n * inner + start * inner;
                            let src = o * len * inner;
                            for (x, &gi) in s[dst..dst + len * inner].iter_mut().zip(&g[src..src + len * inner]) {
                                *x += gi;
                            }
                        }
                    });
                }
                Op::Sum(a) => {
                    acc(*a, &|s| {
                        for x in s.iter_mut() {
                            *x += g[0];
                        }
                    });
                }
                Op::RowSum(a) => {
                    let n = nodes[a.0].value.len() / g.len();
                    acc(*a, &|s| {
                        for (chunk, &gi) in s.chunks_mut(n).zip(&g) {
                            for x in chunk {
                                *x += gi;
                            }
                        }
                    });
                }
            }
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match (&node.op, g) {
                (Op::Leaf, Some(g)) if node.requires_grad => {
                    Some(Tensor::from_parts(node.value.shape().to_vec(), g))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}

pub(crate) fn softmax_values(t: &Tensor, axis: usize) -> Result<Tensor, NumericsError> {
    let (outer, n, inner) = split_axis(t.shape(), axis)?;
    let x = t.data();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for k in 0..inner {
            let at = |j: usize| o * n * inner + j * inner + k;
            let max = (0..n).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..n {
                let e = (x[at(j)] - max).exp();
                out[at(j)] = e;
                total += e;
            }
            for j in 0..n {
                out[at(j)] /= total;
            }
        }
    }
    Ok(Tensor::from_parts(t.shape().to_vec(), out))
}
