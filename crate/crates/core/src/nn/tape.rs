//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a scalar node walks the record in reverse and
//! returns the gradient of that scalar with respect to every node.

use std::collections::HashMap;

use super::matrix::Matrix;
use super::params::{ParamGrads, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, inv_std: Vec<f64>, xhat: Matrix },
    Gelu(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    MulConst(Var, Matrix),
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Matrix },
    BceWithLogits { logits: Var, targets: Matrix },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients of one scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Constant input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Trainable parameter; repeated calls within one tape share a node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_t(self.value(b));
        self.push(value, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    /// Adds the `1 × c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let mut value = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!(b.shape(), (1, value.cols()), "bias shape");
        for i in 0..value.rows() {
            for (o, x) in value.row_mut(i).iter_mut().zip(b.data()) {
                *o += x;
            }
        }
        self.push(value, Op::AddRow(a, bias))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s))
    }

    /// Row-wise softmax. `-inf` entries receive exactly zero probability.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = if *v == f64::NEG_INFINITY { 0.0 } else { (*v - max).exp() };
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        self.push(value, Op::Softmax(a))
    }

    /// Row-wise layer normalization with `1 × c` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let r = xv.row(i);
            let mean = r.iter().sum::<f64>() / cols as f64;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for (o, v) in xhat.row_mut(i).iter_mut().zip(r) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let g = self.value(gamma);
        let b = self.value(beta);
        let value = Matrix::from_fn(rows, cols, |i, j| xhat.get(i, j) * g.get(0, j) + b.get(0, j));
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                inv_std,
                xhat,
            },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()));
        self.push(value, Op::Gelu(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols(), cols, "concat_rows width");
            data.extend_from_slice(m.data());
            rows += m.rows();
        }
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat_cols height");
            for i in 0..rows {
                value.row_mut(i)[offset..offset + m.cols()].copy_from_slice(m.row(i));
            }
            offset += m.cols();
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        let value = Matrix::from_fn(m.rows(), len, |i, j| m.get(i, start + j));
        self.push(value, Op::SliceCols(a, start, len))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        let c = m.cols();
        let value = Matrix::from_vec(len, c, m.data()[start * c..(start + len) * c].to_vec());
        self.push(value, Op::SliceRows(a, start, len))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, mask: Matrix) -> Var {
        let m = self.value(a);
        assert_eq!(m.shape(), mask.shape(), "mask shape");
        let value = Matrix::from_vec(
            m.rows(),
            m.cols(),
            m.data().iter().zip(mask.data()).map(|(x, k)| x * k).collect(),
        );
        self.push(value, Op::MulConst(a, mask))
    }

    /// Summed cross-entropy over rows; rows with `None` target contribute
    /// nothing and receive zero gradient.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows(), targets.len(), "one target per row");
        let mut probs = Matrix::zeros(x.rows(), x.cols());
        let mut loss = 0.0;
        for (i, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            let row = x.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + total.ln();
            loss += lse - row[t];
            for (p, v) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Summed binary cross-entropy with logits against 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Matrix) -> Var {
        let x = self.value(logits);
        assert_eq!(x.shape(), targets.shape(), "bce shape");
        let loss: f64 = x
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&v, &t)| v.max(0.0) - v * t + (-v.abs()).exp().ln_1p())
            .sum();
        self.push(Matrix::from_vec(1, 1, vec![loss]), Op::BceWithLogits { logits, targets })
    }

    /// Sum of all entries, as a `1 × 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Sum of several `1 × 1` nodes.
    pub fn add_scalars(&mut self, parts: &[Var]) -> Option<Var> {
        let mut iter = parts.iter();
        let mut acc = *iter.next()?;
        for &p in iter {
            acc = self.add(acc, p);
        }
        Some(acc)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar");
        m.get(0, 0)
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).shape(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.t_matmul(self.value(*a));
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g.clone());
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[bias.0], gb);
                }
                Op::Scale(a, s) => accumulate(&mut grads[a.0], g.scale(*s)),
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let dot: f64 = y.row(i).iter().zip(g.row(i)).map(|(p, d)| p * d).sum();
                        for ((o, p), d) in ga.row_mut(i).iter_mut().zip(y.row(i)).zip(g.row(i)) {
                            *o = p * (d - dot);
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    inv_std,
                    xhat,
                } => {
                    let gv = self.value(*gamma);
                    let (rows, cols) = xhat.shape();
                    let mut gx = Matrix::zeros(rows, cols);
                    let mut gg = Matrix::zeros(1, cols);
                    let mut gbeta = Matrix::zeros(1, cols);
                    let n = cols as f64;
                    for i in 0..rows {
                        let dy = g.row(i);
                        let xh = xhat.row(i);
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for j in 0..cols {
                            let d = dy[j] * gv.get(0, j);
                            sum_d += d;
                            sum_dx += d * xh[j];
                            gg.data_mut()[j] += dy[j] * xh[j];
                            gbeta.data_mut()[j] += dy[j];
                        }
                        let inv = inv_std[i];
                        for j in 0..cols {
                            let d = dy[j] * gv.get(0, j);
                            gx.set(i, j, inv / n * (n * d - sum_d - xh[j] * sum_dx));
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                    accumulate(&mut grads[gamma.0], gg);
                    accumulate(&mut grads[beta.0], gbeta);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let ga = Matrix::from_vec(
                        x.rows(),
                        x.cols(),
                        x.data()
                            .iter()
                            .zip(g.data())
                            .map(|(&v, &d)| {
                                let t = (GELU_C * (v + GELU_K * v * v * v)).tanh();
                                let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v);
                                d * (0.5 * (1.0 + t) + 0.5 * v * dt)
                            })
                            .collect(),
                    );
                    accumulate(&mut grads[a.0], ga);
                }
                Op::ConcatRows(parts) => {
                    let mut row = 0;
                    for p in parts {
                        let r = self.value(*p).rows();
                        let c = g.cols();
                        let part = Matrix::from_vec(r, c, g.data()[row * c..(row + r) * c].to_vec());
                        accumulate(&mut grads[p.0], part);
                        row += r;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let c = self.value(*p).cols();
                        let part = Matrix::from_fn(g.rows(), c, |i, j| g.get(i, offset + j));
                        accumulate(&mut grads[p.0], part);
                        offset += c;
                    }
                }
                Op::SliceCols(a, start, len) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for i in 0..g.rows() {
                        ga.row_mut(i)[*start..start + len].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::SliceRows(a, start, len) => {
                    let src = self.value(*a);
                    let c = src.cols();
                    let mut ga = Matrix::zeros(src.rows(), c);
                    ga.data_mut()[start * c..(start + len) * c].copy_from_slice(g.data());
                    accumulate(&mut grads[a.0], ga);
                }
                Op::MulConst(a, mask) => {
                    let ga = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(mask.data()).map(|(d, k)| d * k).collect(),
                    );
                    accumulate(&mut grads[a.0], ga);
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let scale = g.get(0, 0);
                    let mut ga = probs.scale(scale);
                    for (i, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            let v = ga.get(i, *t);
                            ga.set(i, *t, v - scale);
                        }
                    }
                    accumulate(&mut grads[logits.0], ga);
                }
                Op::BceWithLogits { logits, targets } => {
                    let scale = g.get(0, 0);
                    let x = self.value(*logits);
                    let ga = Matrix::from_vec(
                        x.rows(),
                        x.cols(),
                        x.data()
                            .iter()
                            .zip(targets.data())
                            .map(|(&v, &t)| scale * (1.0 / (1.0 + (-v).exp()) - t))
                            .collect(),
                    );
                    accumulate(&mut grads[logits.0], ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads[a.0], Matrix::from_vec(r, c, vec![g.get(0, 0); r * c]));
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    /// Adds the gradient of every parameter node into `out`.
    pub fn accumulate_param_grads(&self, grads: &Gradients, out: &mut ParamGrads) {
        for (&id, &v) in &self.params {
            if let Some(g) = grads.wrt(v) {
                out.add(id, g);
            }
        }
    }
}
