//! Reverse-mode differentiation over a fixed set of matrix operations.
//!
//! Every value is a 2-D array; scalars are `1 x 1`. Nodes are appended in
//! evaluation order, so a reverse sweep visits each node after all of its
//! consumers.

use crate::sparse::SparseAdj;
use ndarray::{Array2, Axis, Zip};
use std::rc::Rc;

/// Bounds applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Rc<SparseAdj>, Var),
    /// `a + b` with `b` a `1 x k` row broadcast over `a`'s rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    SoftmaxRows(Var),
    Sigmoid(Var),
    Hadamard(Var, Var),
    GatherRows(Var, Vec<usize>),
    /// `-mean(log p)` (positive) or `-mean(log(1 - p))`, `p` clamped.
    NegLogMean { p: Var, positive: bool },
    /// `sum((a - b)^2) / denom`.
    SqDiff { a: Var, b: Var, denom: f64 },
    /// Mean cross-entropy of row-wise softmax logits against class indices.
    SoftmaxXent { logits: Var, labels: Vec<usize> },
    /// `sum(a^2)`.
    SumSq(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub struct Grads(Vec<Option<Array2<f64>>>);

impl Grads {
    /// Gradient of the differentiated scalar with respect to `v`; zeros when
    /// `v` does not influence it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Array2<f64> {
        self.0[v.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(tape.value(v).raw_dim()))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    y
}

fn scalar(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn spmm(&mut self, adj: Rc<SparseAdj>, b: Var) -> Var {
        let v = adj.mul(self.value(b));
        self.push(v, Op::SpMM(adj, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Hadamard(a, b))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let v = self.value(a).select(Axis(0), &idx);
        self.push(v, Op::GatherRows(a, idx))
    }

    /// Zero when `p` has no entries.
    pub fn neg_log_mean(&mut self, p: Var, positive: bool) -> Var {
        let x = self.value(p);
        let v = if x.is_empty() {
            0.0
        } else {
            let s: f64 = x
                .iter()
                .map(|&q| {
                    let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
                    -(if positive { q } else { 1.0 - q }).ln()
                })
                .sum();
            s / x.len() as f64
        };
        self.push(scalar(v), Op::NegLogMean { p, positive })
    }

    pub fn sq_diff(&mut self, a: Var, b: Var, denom: f64) -> Var {
        let d = self.value(a) - self.value(b);
        let v = d.iter().map(|x| x * x).sum::<f64>() / denom;
        self.push(scalar(v), Op::SqDiff { a, b, denom })
    }

    pub fn softmax_xent(&mut self, logits: Var, labels: Vec<usize>) -> Var {
        let p = softmax_rows(self.value(logits));
        let n = labels.len().max(1) as f64;
        let v = labels
            .iter()
            .enumerate()
            .map(|(i, &c)| -p[[i, c]].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / n;
        self.push(scalar(v), Op::SoftmaxXent { logits, labels })
    }

    pub fn sum_sq(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|x| x * x).sum();
        self.push(scalar(v), Op::SumSq(a))
    }

    /// Gradients of scalar `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Grads {
        let mut g: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        g[out.0] = Some(Array2::ones(self.value(out).raw_dim()));
        let acc = |g: &mut Vec<Option<Array2<f64>>>, v: Var, d: Array2<f64>| match &mut g[v.0] {
            Some(x) => *x += &d,
            slot @ None => *slot = Some(d),
        };
        for i in (0..=out.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Leaf => g[i] = Some(dy),
                Op::MatMul(a, b) => {
                    let da = dy.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&dy);
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::SpMM(adj, b) => acc(&mut g, *b, adj.mul_transpose(&dy)),
                Op::AddRow(a, row) => {
                    acc(&mut g, *row, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut g, *a, dy);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *b, dy.clone());
                    acc(&mut g, *a, dy);
                }
                Op::Scale(a, c) => acc(&mut g, *a, dy * *c),
                Op::Relu(a) => {
                    let mut d = dy;
                    Zip::from(&mut d)
                        .and(self.value(*a))
                        .for_each(|d, &x| if x <= 0.0 { *d = 0.0 });
                    acc(&mut g, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let mut d = &dy * y;
                    let s = d.sum_axis(Axis(1)).insert_axis(Axis(1));
                    d -= &(y * &s);
                    acc(&mut g, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = &dy * &y.mapv(|s| s * (1.0 - s));
                    acc(&mut g, *a, d);
                }
                Op::Hadamard(a, b) => {
                    let da = &dy * self.value(*b);
                    let db = &dy * self.value(*a);
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::GatherRows(a, idx) => {
                    let mut d = Array2::zeros(self.value(*a).raw_dim());
                    for (r, &src) in idx.iter().enumerate() {
                        let mut row = d.row_mut(src);
                        row += &dy.row(r);
                    }
                    acc(&mut g, *a, d);
                }
                Op::NegLogMean { p, positive } => {
                    let x = self.value(*p);
                    let n = x.len().max(1) as f64;
                    let up = dy[[0, 0]];
                    let d = x.mapv(|q| {
                        if q < PROB_EPS || q > 1.0 - PROB_EPS {
                            0.0
                        } else if *positive {
                            -up / (q * n)
                        } else {
                            up / ((1.0 - q) * n)
                        }
                    });
                    acc(&mut g, *p, d);
                }
                Op::SqDiff { a, b, denom } => {
                    let d = (self.value(*a) - self.value(*b)) * (2.0 * dy[[0, 0]] / denom);
                    acc(&mut g, *b, -&d);
                    acc(&mut g, *a, d);
                }
                Op::SoftmaxXent { logits, labels } => {
                    let mut d = softmax_rows(self.value(*logits));
                    for (i, &c) in labels.iter().enumerate() {
                        d[[i, c]] -= 1.0;
                    }
                    d *= dy[[0, 0]] / labels.len().max(1) as f64;
                    acc(&mut g, *logits, d);
                }
                Op::SumSq(a) => acc(&mut g, *a, self.value(*a) * (2.0 * dy[[0, 0]])),
            }
        }
        Grads(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    /// Central differences of `f` at `x`, one entry at a time.
    fn numeric(x: &Array2<f64>, f: &dyn Fn(&Array2<f64>) -> f64) -> Array2<f64> {
        let h = 1e-5;
        let mut out = Array2::zeros(x.raw_dim());
        for idx in 0..x.len() {
            let mut p = x.clone();
            let mut m = x.clone();
            p.as_slice_mut().unwrap()[idx] += h;
            m.as_slice_mut().unwrap()[idx] -= h;
            out.as_slice_mut().unwrap()[idx] = (f(&p) - f(&m)) / (2.0 * h);
        }
        out
    }

    fn close(a: &Array2<f64>, b: &Array2<f64>) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs().max(y.abs())), "{a}\nvs\n{b}");
        }
    }

    /// Checks d(build(x))/dx for a scalar-valued graph `build`.
    fn check(x: Array2<f64>, build: impl Fn(&mut Tape, Var) -> Var) {
        let f = |x: &Array2<f64>| {
            let mut t = Tape::new();
            let v = t.leaf(x.clone());
            let out = build(&mut t, v);
            t.scalar(out)
        };
        let mut t = Tape::new();
        let v = t.leaf(x.clone());
        let out = build(&mut t, v);
        let g = t.backward(out).wrt(&t, v);
        close(&g, &numeric(&x, &f));
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random(&mut rng, 4, 3);
        let row = random(&mut rng, 1, 3);
        let other = random(&mut rng, 5, 3);
        let adj = Rc::new(SparseAdj::from_dense(&array![
            [0.5, 0.2, 0.0, 0.0, 0.3],
            [0.2, 0.4, 0.1, 0.0, 0.0],
            [0.0, 0.1, 0.6, 0.3, 0.0],
            [0.0, 0.0, 0.3, 0.7, 0.0],
            [0.3, 0.0, 0.0, 0.0, 0.7],
        ]));
        let x = random(&mut rng, 5, 4);
        check(x.clone(), |t, v| {
            let w = t.leaf(w.clone());
            let y = t.matmul(v, w);
            t.sum_sq(y)
        });
        check(w.clone(), |t, v| {
            let x = t.leaf(x.clone());
            let y = t.matmul(x, v);
            let r = t.leaf(row.clone());
            let y = t.add_row(y, r);
            let y = t.spmm(adj.clone(), y);
            let y = t.relu(y);
            let o = t.leaf(other.clone());
            t.sq_diff(y, o, 15.0)
        });
        check(row.clone(), |t, v| {
            let o = t.leaf(other.clone());
            let y = t.add_row(o, v);
            let y = t.softmax_rows(y);
            let z = t.gather_rows(y, vec![0, 2, 2, 4]);
            let q = t.gather_rows(y, vec![1, 1, 3, 0]);
            let h = t.hadamard(z, q);
            let h = t.scale(h, 3.0);
            let s = t.sigmoid(h);
            let a = t.neg_log_mean(s, true);
            let b = t.neg_log_mean(s, false);
            t.add(a, b)
        });
        check(other.clone(), |t, v| t.softmax_xent(v, vec![0, 2, 1, 1, 0]));
    }

    #[test]
    fn empty_log_mean_is_zero() {
        let mut t = Tape::new();
        let p = t.leaf(Array2::zeros((0, 1)));
        let l = t.neg_log_mean(p, true);
        assert_eq!(t.scalar(l), 0.0);
    }

    #[test]
    fn half_everywhere_gives_two_ln2() {
        let mut t = Tape::new();
        let p = t.leaf(Array2::from_elem((3, 1), 0.5));
        let n = t.leaf(Array2::from_elem((2, 1), 0.5));
        let a = t.neg_log_mean(p, true);
        let b = t.neg_log_mean(n, false);
        let l = t.add(a, b);
        assert!((t.scalar(l) - 2.0 * 2f64.ln()).abs() < 1e-15);
    }
}
