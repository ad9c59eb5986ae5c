use super::Tensor;
use crate::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// A value recorded on the tape together with its accumulated gradient.
///
/// `values` and `grad` always have `shape.iter().product()` elements.
#[derive(Clone, Debug)]
pub struct DiffArray {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    id: Var,
}

impl DiffArray {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn id(&self) -> Var {
        self.id
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Tanh,
    Sigmoid,
    Mul,
    Add,
    Sub,
}

impl ElementwiseKind {
    fn is_binary(self) -> bool {
        matches!(
            self,
            ElementwiseKind::Mul | ElementwiseKind::Add | ElementwiseKind::Sub
        )
    }
}

type Derivative = Box<dyn Fn(f64) -> f64 + Send + Sync>;

enum Op {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Tanh(Var),
    Sigmoid(Var),
    Mul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Softmax(Var),
    SoftmaxXent { logits: Var, label: usize },
    Concat { a: Var, b: Var, outer: usize, a_inner: usize, b_inner: usize },
    Slice { a: Var, start: usize },
    Stack(Vec<Var>),
    Mean(Vec<Var>),
    Sum(Var),
    Dot(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    Map { a: Var, derivative: Derivative },
}

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every operation's inputs
/// precede it and a single reverse sweep visits each node once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<DiffArray>,
    ops: Vec<Op>,
    backpropagated: bool,
}

fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
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

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let id = Var(self.nodes.len());
        let grad = vec![0.0; values.len()];
        self.nodes.push(DiffArray {
            shape,
            values,
            grad,
            id,
        });
        self.ops.push(op);
        id
    }

    pub fn array(&self, v: Var) -> &DiffArray {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Records an input array. Gradients flowing into it are kept after
    /// [`Tape::backward`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf)
    }

    pub fn leaf_slice(&mut self, shape: &[usize], values: &[f64]) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.push(shape.to_vec(), values.to_vec(), Op::Leaf)
    }

    /// Matrix product. Vectors act as a row on the left and as a column on the right.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n, out_shape) = match (sa.len(), sb.len()) {
            (2, 2) if sa[1] == sb[0] => (sa[0], sa[1], sb[1], vec![sa[0], sb[1]]),
            (2, 1) if sa[1] == sb[0] => (sa[0], sa[1], 1, vec![sa[0]]),
            (1, 2) if sa[0] == sb[0] => (1, sa[0], sb[1], vec![sb[1]]),
            _ => return Err(mismatch("matmul", sa, sb)),
        };
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * k..(i + 1) * k];
            let dst = &mut out[i * n..(i + 1) * n];
            for (p, &x) in row.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (d, &y) in dst.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *d += x * y;
                }
            }
        }
        Ok(self.push(out_shape, out, Op::MatMul { a, b, m, k, n }))
    }

    pub fn elementwise(&mut self, kind: ElementwiseKind, a: Var, b: Option<Var>) -> Result<Var> {
        match (kind.is_binary(), b) {
            (true, Some(b)) => match kind {
                ElementwiseKind::Mul => self.mul(a, b),
                ElementwiseKind::Add => self.add(a, b),
                _ => self.sub(a, b),
            },
            (false, None) => Ok(match kind {
                ElementwiseKind::Tanh => self.tanh(a),
                _ => self.sigmoid(a),
            }),
            (true, None) => Err(Error::invalid(format!("{kind:?} needs two operands"))),
            (false, Some(_)) => Err(Error::invalid(format!("{kind:?} takes one operand"))),
        }
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let values = self.value(a).iter().map(|x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, values, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let values = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, values, Op::Sigmoid(a))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(name, self.shape(a), self.shape(b)));
        }
        let values = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, values, op))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Softmax over a 1-D array, computed with max-subtraction.
    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 1 || shape[0] == 0 {
            return Err(Error::invalid(format!(
                "softmax expects a nonempty vector, got shape {shape:?}"
            )));
        }
        let values = softmax(self.value(logits))?;
        Ok(self.push(shape, values, Op::Softmax(logits)))
    }

    /// `-log softmax(logits)[label]`, fused through log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let x = self.value(logits);
        if self.shape(logits).len() != 1 {
            return Err(Error::invalid("cross entropy expects a logit vector"));
        }
        if label >= x.len() {
            return Err(Error::InvalidLabel(label));
        }
        let loss = log_sum_exp(x)? - x[label];
        Ok(self.push(Vec::new(), vec![loss], Op::SoftmaxXent { logits, label }))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || axis >= sa.len() {
            return Err(mismatch("concat", &sa, &sb));
        }
        for d in 0..sa.len() {
            if d != axis && sa[d] != sb[d] {
                return Err(mismatch("concat", &sa, &sb));
            }
        }
        let outer: usize = sa[..axis].iter().product();
        let a_inner: usize = sa[axis..].iter().product();
        let b_inner: usize = sb[axis..].iter().product();
        let (av, bv) = (self.value(a), self.value(b));
        let mut values = Vec::with_capacity(av.len() + bv.len());
        for o in 0..outer {
            values.extend_from_slice(&av[o * a_inner..(o + 1) * a_inner]);
            values.extend_from_slice(&bv[o * b_inner..(o + 1) * b_inner]);
        }
        let mut shape = sa;
        shape[axis] += sb[axis];
        Ok(self.push(
            shape,
            values,
            Op::Concat {
                a,
                b,
                outer,
                a_inner,
                b_inner,
            },
        ))
    }

    /// Contiguous range `[start, start + len)` of a 1-D array.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a);
        if shape.len() != 1 || start + len > shape[0] {
            return Err(mismatch("slice", shape, &[start, len]));
        }
        let values = self.value(a)[start..start + len].to_vec();
        Ok(self.push(vec![len], values, Op::Slice { a, start }))
    }

    /// Stacks equally shaped arrays along a new leading axis.
    pub fn stack(&mut self, items: &[Var]) -> Result<Var> {
        let first = *items
            .first()
            .ok_or_else(|| Error::invalid("stack of zero arrays"))?;
        let inner = self.shape(first).to_vec();
        let mut values = Vec::with_capacity(items.len() * self.value(first).len());
        for &v in items {
            if self.shape(v) != inner.as_slice() {
                return Err(mismatch("stack", &inner, self.shape(v)));
            }
            values.extend_from_slice(self.value(v));
        }
        let mut shape = vec![items.len()];
        shape.extend(inner);
        Ok(self.push(shape, values, Op::Stack(items.to_vec())))
    }

    /// Elementwise arithmetic mean of equally shaped arrays.
    pub fn mean(&mut self, items: &[Var]) -> Result<Var> {
        let first = *items
            .first()
            .ok_or_else(|| Error::invalid("mean of zero arrays"))?;
        let shape = self.shape(first).to_vec();
        let mut values = vec![0.0; self.value(first).len()];
        for &v in items {
            if self.shape(v) != shape.as_slice() {
                return Err(mismatch("mean", &shape, self.shape(v)));
            }
            add_into(&mut values, self.value(v));
        }
        let scale = 1.0 / items.len() as f64;
        values.iter_mut().for_each(|x| *x *= scale);
        Ok(self.push(shape, values, Op::Mean(items.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Vec::new(), vec![s], Op::Sum(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("dot", self.shape(a), self.shape(b)));
        }
        let s = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        Ok(self.push(Vec::new(), vec![s], Op::Dot(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let values = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, values, Op::Scale(a, c))
    }

    /// Multiplies by a constant (non-differentiated) array, e.g. a dropout mask.
    pub fn mul_const(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(a).len() {
            return Err(mismatch("mul_const", self.shape(a), &[mask.len()]));
        }
        let values = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, values, Op::MulConst(a, mask)))
    }

    /// Applies a user-supplied scalar function with its derivative (in terms of the input).
    pub fn map(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Var {
        let values = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(
            shape,
            values,
            Op::Map {
                a,
                derivative: Box::new(derivative),
            },
        )
    }

    /// Resets every gradient buffer to zero and re-arms [`Tape::backward`].
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.backpropagated = false;
    }

    /// Propagates d`loss`/d(node) to every node recorded before `loss`.
    ///
    /// A second call without an intervening [`Tape::zero_grad`] is rejected.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backpropagated {
            return Err(Error::GradientsNotCleared);
        }
        if self.nodes[loss.0].values.len() != 1 {
            return Err(Error::NonScalarLoss(self.nodes[loss.0].shape.clone()));
        }
        self.backpropagated = true;
        self.nodes[loss.0].grad[0] = 1.0;
        for id in (0..=loss.0).rev() {
            self.backward_node(id);
        }
        Ok(())
    }

    fn backward_node(&mut self, id: usize) {
        let g = std::mem::take(&mut self.nodes[id].grad);
        if g.iter().all(|&x| x == 0.0) {
            self.nodes[id].grad = g;
            return;
        }
        let nodes = &mut self.nodes;
        match &self.ops[id] {
            Op::Leaf => {}
            &Op::MatMul { a, b, m, k, n } => {
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * n];
                {
                    let (av, bv) = (&nodes[a.0].values, &nodes[b.0].values);
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            da[i * k + p] += gi.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            let x = av[i * k + p];
                            if x != 0.0 {
                                for (d, &gy) in db[p * n..(p + 1) * n].iter_mut().zip(gi) {
                                    *d += x * gy;
                                }
                            }
                        }
                    }
                }
                add_into(&mut nodes[a.0].grad, &da);
                add_into(&mut nodes[b.0].grad, &db);
            }
            &Op::Tanh(a) => {
                let y = &nodes[id].values;
                let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                add_into(&mut nodes[a.0].grad, &d);
            }
            &Op::Sigmoid(a) => {
                let y = &nodes[id].values;
                let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                add_into(&mut nodes[a.0].grad, &d);
            }
            &Op::Mul(a, b) => {
                let da: Vec<f64> = g.iter().zip(&nodes[b.0].values).map(|(g, y)| g * y).collect();
                let db: Vec<f64> = g.iter().zip(&nodes[a.0].values).map(|(g, x)| g * x).collect();
                add_into(&mut nodes[a.0].grad, &da);
                add_into(&mut nodes[b.0].grad, &db);
            }
            &Op::Add(a, b) => {
                add_into(&mut nodes[a.0].grad, &g);
                add_into(&mut nodes[b.0].grad, &g);
            }
            &Op::Sub(a, b) => {
                add_into(&mut nodes[a.0].grad, &g);
                for (d, x) in nodes[b.0].grad.iter_mut().zip(&g) {
                    *d -= x;
                }
            }
            &Op::Softmax(a) => {
                let y = &nodes[id].values;
                let gy: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| y * (g - gy)).collect();
                add_into(&mut nodes[a.0].grad, &d);
            }
            &Op::SoftmaxXent { logits, label } => {
                // log_sum_exp already succeeded on the forward pass
                let mut p = softmax(&nodes[logits.0].values).unwrap_or_default();
                p[label] -= 1.0;
                p.iter_mut().for_each(|x| *x *= g[0]);
                add_into(&mut nodes[logits.0].grad, &p);
            }
            &Op::Concat {
                a,
                b,
                outer,
                a_inner,
                b_inner,
            } => {
                let w = a_inner + b_inner;
                for o in 0..outer {
                    add_into(
                        &mut nodes[a.0].grad[o * a_inner..(o + 1) * a_inner],
                        &g[o * w..o * w + a_inner],
                    );
                    add_into(
                        &mut nodes[b.0].grad[o * b_inner..(o + 1) * b_inner],
                        &g[o * w + a_inner..(o + 1) * w],
                    );
                }
            }
            &Op::Slice { a, start } => {
                add_into(&mut nodes[a.0].grad[start..start + g.len()], &g);
            }
            Op::Stack(items) => {
                let inner = g.len() / items.len();
                for (i, v) in items.iter().enumerate() {
                    add_into(&mut nodes[v.0].grad, &g[i * inner..(i + 1) * inner]);
                }
            }
            Op::Mean(items) => {
                let scale = 1.0 / items.len() as f64;
                let d: Vec<f64> = g.iter().map(|x| x * scale).collect();
                for v in items {
                    add_into(&mut nodes[v.0].grad, &d);
                }
            }
            &Op::Sum(a) => {
                nodes[a.0].grad.iter_mut().for_each(|x| *x += g[0]);
            }
            &Op::Dot(a, b) => {
                let da: Vec<f64> = nodes[b.0].values.iter().map(|y| y * g[0]).collect();
                let db: Vec<f64> = nodes[a.0].values.iter().map(|x| x * g[0]).collect();
                add_into(&mut nodes[a.0].grad, &da);
                add_into(&mut nodes[b.0].grad, &db);
            }
            &Op::Scale(a, c) => {
                for (d, x) in nodes[a.0].grad.iter_mut().zip(&g) {
                    *d += c * x;
                }
            }
            Op::MulConst(a, mask) => {
                for ((d, x), m) in nodes[a.0].grad.iter_mut().zip(&g).zip(mask) {
                    *d += x * m;
                }
            }
            Op::Map { a, derivative } => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(&nodes[a.0].values)
                    .map(|(g, &x)| g * derivative(x))
                    .collect();
                add_into(&mut nodes[a.0].grad, &d);
            }
        }
        self.nodes[id].grad = g;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(x: &[f64]) -> Result<f64> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Numerically stable softmax of a slice. Rejects NaN and infinities.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    Ok(out)
}
