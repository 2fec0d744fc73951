//! Reverse-mode differentiation over dense matrices.
//!
//! Values are computed eagerly as ops are recorded. `backward` walks the tape
//! in reverse, accumulating adjoints only into nodes that (transitively)
//! depend on a leaf registered with [`Tape::param`].

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::Matrix;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a + 1 b` with `b` a single row broadcast down `a`.
    AddRow(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Transpose(Var),
    /// Output row `i` is source row `rows[i]`, or zeros for `None`.
    GatherRows(Var, Vec<Option<usize>>),
    /// Row `i` of `a` scaled by `s[i, 0]`.
    ScaleRows(Var, Var),
    /// `a / ||p||_F`.
    DivNorm(Var, Var),
    /// Summed weighted softmax cross-entropy, 1x1.
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        weights: Vec<f64>,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Matrix, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.push(value, op, needs_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push_op(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push_op(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push_op(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push_op(v, Op::Mul(a, b), &[a, b])
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (av, rv) = (self.value(a), self.value(row));
        assert!(rv.rows == 1 && rv.cols == av.cols, "row broadcast shape");
        let mut v = av.clone();
        for r in 0..v.rows {
            for (x, b) in v.data[r * v.cols..(r + 1) * v.cols].iter_mut().zip(&rv.data) {
                *x += b;
            }
        }
        self.push_op(v, Op::AddRow(a, row), &[a, row])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(math::sigmoid);
        self.push_op(v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(math::tanh);
        self.push_op(v, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push_op(v, Op::Relu(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push_op(v, Op::Transpose(a), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<Option<usize>>) -> Var {
        let src = self.value(a);
        let mut v = Matrix::zeros(rows.len(), src.cols);
        for (i, r) in rows.iter().enumerate() {
            if let Some(r) = *r {
                v.data[i * src.cols..(i + 1) * src.cols].copy_from_slice(src.row(r));
            }
        }
        self.push_op(v, Op::GatherRows(a, rows), &[a])
    }

    pub fn scale_rows(&mut self, a: Var, s: Var) -> Var {
        let (av, sv) = (self.value(a), self.value(s));
        assert!(sv.cols == 1 && sv.rows == av.rows, "row scale shape");
        let mut v = av.clone();
        for r in 0..v.rows {
            let k = sv.data[r];
            v.data[r * v.cols..(r + 1) * v.cols].iter_mut().for_each(|x| *x *= k);
        }
        self.push_op(v, Op::ScaleRows(a, s), &[a, s])
    }

    pub fn div_norm(&mut self, a: Var, p: Var) -> Var {
        let norm = self.value(p).frobenius_norm();
        let v = self.value(a).map(|x| x / norm);
        self.push_op(v, Op::DivNorm(a, p), &[a, p])
    }

    /// `sum_i w_i * (logsumexp(z_i) - z_i[y_i])`. Weights default to 1.
    pub fn cross_entropy(&mut self, logits: Var, labels: Vec<usize>, weights: Option<Vec<f64>>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows, labels.len(), "one label per logits row");
        let weights = weights.unwrap_or_else(|| vec![1.0; labels.len()]);
        let mut loss = 0.0;
        for (i, (&y, &w)) in labels.iter().zip(&weights).enumerate() {
            let row = z.row(i);
            loss += w * (log_sum_exp(row) - row[y]);
        }
        let v = Matrix { rows: 1, cols: 1, data: vec![loss] };
        self.push_op(v, Op::CrossEntropy { logits, labels, weights }, &[logits])
    }

    /// Adjoints of `root` (a 1x1 node) with respect to every node. Entries
    /// for nodes that do not need a gradient are `None`.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        assert_eq!(self.value(root).shape(), (1, 1), "backward from a scalar");
        grads[root.0] = Some(Matrix { rows: 1, cols: 1, data: vec![1.0] });
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |v: Var, d: Matrix| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot => *slot = Some(d),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].needs_grad {
                    acc(*a, g.matmul_nt(val(*b)));
                }
                if self.nodes[b.0].needs_grad {
                    acc(*b, val(*a).matmul_tn(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x * y));
                acc(*b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let mut d = Matrix::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (s, x) in d.data.iter_mut().zip(g.row(r)) {
                        *s += x;
                    }
                }
                acc(*row, d);
            }
            Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |x, s| x * s * (1.0 - s))),
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |x, t| x * (1.0 - t * t))),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |x, z| if z > 0.0 { x } else { 0.0 })),
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::GatherRows(a, rows) => {
                let src = val(*a);
                let mut d = Matrix::zeros(src.rows, src.cols);
                for (i, r) in rows.iter().enumerate() {
                    if let Some(r) = *r {
                        for (s, x) in d.data[r * src.cols..(r + 1) * src.cols].iter_mut().zip(g.row(i)) {
                            *s += x;
                        }
                    }
                }
                acc(*a, d);
            }
            Op::ScaleRows(a, s) => {
                let (av, sv) = (val(*a), val(*s));
                let mut da = g.clone();
                let mut ds = Matrix::zeros(sv.rows, 1);
                for r in 0..g.rows {
                    let k = sv.data[r];
                    let gr = &mut da.data[r * g.cols..(r + 1) * g.cols];
                    ds.data[r] = gr.iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                    gr.iter_mut().for_each(|x| *x *= k);
                }
                acc(*a, da);
                acc(*s, ds);
            }
            Op::DivNorm(a, p) => {
                let pv = val(*p);
                let norm = pv.frobenius_norm();
                acc(*a, g.map(|x| x / norm));
                // d/dp (a / |p|) contracted with g: -(g . a) p / |p|^3
                let dot: f64 = g.data.iter().zip(&val(*a).data).map(|(x, y)| x * y).sum();
                let k = -dot / (norm * norm * norm);
                acc(*p, pv.map(|x| k * x));
            }
            Op::CrossEntropy { logits, labels, weights } => {
                let z = val(*logits);
                let scale = g.data[0];
                let mut d = Matrix::zeros(z.rows, z.cols);
                for (i, (&y, &w)) in labels.iter().zip(weights).enumerate() {
                    let row = z.row(i);
                    let lse = log_sum_exp(row);
                    for (j, out) in d.data[i * z.cols..(i + 1) * z.cols].iter_mut().enumerate() {
                        let p = math::exp(row[j] - lse);
                        *out = scale * w * (p - if j == y { 1.0 } else { 0.0 });
                    }
                }
                acc(*logits, d);
            }
        }
    }
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + math::ln(row.iter().map(|&x| math::exp(x - m)).sum())
}

pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of a node; zeros of the right shape if nothing reached it.
    pub fn get(&self, tape: &Tape, v: Var) -> Matrix {
        self.grads[v.0].clone().unwrap_or_else(|| {
            let (r, c) = tape.value(v).shape();
            Matrix::zeros(r, c)
        })
    }
}
