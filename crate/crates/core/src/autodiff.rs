//! Reverse-mode differentiation over a recorded sequence of matrix operations.
//!
//! A [`Tape`] owns every intermediate value. Operations append a node and
//! return a [`Var`] handle; [`Tape::backward`] walks the nodes in reverse
//! creation order, which is a valid topological order because a node can only
//! reference nodes recorded before it.

use std::collections::HashMap;

use crate::params::{ParamId, ParamStore};
use crate::tensor::{self, Tensor2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Gelu(Var),
    Relu(Var),
    Abs(Var),
    Log(Var),
    Powf(Var, f64),
    Min(Var, Var),
    Max(Var, Var),
    Sum(Var),
    LayerNorm(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
}

struct Node {
    value: Tensor2,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Per-node adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor2> {
        self.grads[v.0].as_ref()
    }

    /// Adjoints of every parameter that took part in the computation.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor2)> + '_ {
        self.params
            .iter()
            .filter_map(|(id, v)| self.grads[v.0].as_ref().map(|g| (*id, g)))
    }

    /// Adds parameter adjoints into the store's gradient buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (id, g) in self.params() {
            store.get_mut(id).grad.add_assign(g);
        }
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

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.shape(), (1, 1));
        t.get(0, 0)
    }

    fn push(&mut self, value: Tensor2, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a stored parameter. Repeated requests for the same
    /// parameter return the same node so adjoints accumulate in one place.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).value.clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y);
        self.push(v, Op::Div(a, b))
    }

    /// Adds a `1 × cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row).data().to_vec();
        let mut v = self.value(a).clone();
        debug_assert_eq!(r.len(), v.cols());
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 × cols` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row).data().to_vec();
        let mut v = self.value(a).clone();
        debug_assert_eq!(r.len(), v.cols());
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x *= b;
            }
        }
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).scale(k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x + k);
        self.push(v, Op::AddScalar(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = tensor::softmax_rows(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            tensor::log_softmax_in_place(v.row_mut(r));
        }
        self.push(v, Op::LogSoftmax(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(tensor::sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(tensor::log_sigmoid);
        self.push(v, Op::LogSigmoid(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(tensor::gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let v = self.value(a).map(|x| x.powf(p));
        self.push(v, Op::Powf(a, p))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), f64::min);
        self.push(v, Op::Min(a, b))
    }

    pub fn max(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), f64::max);
        self.push(v, Op::Max(a, b))
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor2::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn layer_norm(&mut self, a: Var) -> Var {
        let v = tensor::layer_norm_rows(self.value(a));
        self.push(v, Op::LayerNorm(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut v = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let src = self.value(*p);
                debug_assert_eq!(src.rows(), rows);
                v.row_mut(r)[off..off + src.cols()].copy_from_slice(src.row(r));
                off += src.cols();
            }
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let src = self.value(*p);
            debug_assert_eq!(src.cols(), cols);
            data.extend_from_slice(src.data());
            rows += src.rows();
        }
        let v = Tensor2::new(rows, cols, data).expect("concat_rows shape");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        let v = Tensor2::from_fn(src.rows(), len, |r, c| src.get(r, start + c));
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        let c = src.cols();
        let v = Tensor2::new(len, c, src.data()[start * c..(start + len) * c].to_vec())
            .expect("slice_rows shape");
        self.push(v, Op::SliceRows(a, start))
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let src = self.value(a);
        let v = Tensor2::from_fn(idx.len(), src.cols(), |r, c| src.get(idx[r], c));
        self.push(v, Op::Gather(a, idx.to_vec()))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        let n = output.0 + 1;
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        let (r, c) = self.value(output).shape();
        grads[output.0] = Some(Tensor2::filled(r, c, 1.0));

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let mut params: Vec<(ParamId, Var)> = self.params.iter().map(|(k, v)| (*k, *v)).collect();
        params.sort_by_key(|(id, _)| id.index());
        Gradients { grads, params }
    }

    fn propagate(&self, i: usize, g: &Tensor2, grads: &mut [Option<Tensor2>]) {
        let acc = |grads: &mut [Option<Tensor2>], v: Var, t: Tensor2| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                acc(grads, *a, g.matmul_t(self.value(*b)));
                acc(grads, *b, self.value(*a).t_matmul(g));
            }
            Op::MatMulT(a, b) => {
                acc(grads, *a, g.matmul(self.value(*b)));
                acc(grads, *b, g.t_matmul(self.value(*a)));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                acc(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                acc(grads, *a, g.zip_map(bv, |x, y| x / y));
                let t = Tensor2::from_fn(g.rows(), g.cols(), |r, c| {
                    -g.get(r, c) * out.get(r, c) / bv.get(r, c)
                });
                acc(grads, *b, t);
            }
            Op::AddRow(a, row) => {
                acc(grads, *a, g.clone());
                let mut rg = Tensor2::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (s, x) in rg.row_mut(0).iter_mut().zip(g.row(r)) {
                        *s += x;
                    }
                }
                acc(grads, *row, rg);
            }
            Op::MulRow(a, row) => {
                let rv = self.value(*row);
                let av = self.value(*a);
                let ga = Tensor2::from_fn(g.rows(), g.cols(), |r, c| g.get(r, c) * rv.get(0, c));
                let mut rg = Tensor2::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        rg.data_mut()[c] += g.get(r, c) * av.get(r, c);
                    }
                }
                acc(grads, *a, ga);
                acc(grads, *row, rg);
            }
            Op::Scale(a, k) => acc(grads, *a, g.scale(*k)),
            Op::AddScalar(a) => acc(grads, *a, g.clone()),
            Op::Softmax(a) => {
                let mut t = Tensor2::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, v) in t.row_mut(r).iter_mut().enumerate() {
                        *v = y[c] * (gr[c] - dot);
                    }
                }
                acc(grads, *a, t);
            }
            Op::LogSoftmax(a) => {
                let mut t = Tensor2::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let total: f64 = gr.iter().sum();
                    for (c, v) in t.row_mut(r).iter_mut().enumerate() {
                        *v = gr[c] - y[c].exp() * total;
                    }
                }
                acc(grads, *a, t);
            }
            Op::Sigmoid(a) => acc(grads, *a, g.zip_map(out, |d, s| d * s * (1.0 - s))),
            Op::LogSigmoid(a) => acc(
                grads,
                *a,
                g.zip_map(self.value(*a), |d, x| d * tensor::sigmoid(-x)),
            ),
            Op::Gelu(a) => acc(
                grads,
                *a,
                g.zip_map(self.value(*a), |d, x| d * tensor::gelu_grad(x)),
            ),
            Op::Relu(a) => acc(
                grads,
                *a,
                g.zip_map(self.value(*a), |d, x| if x > 0.0 { d } else { 0.0 }),
            ),
            Op::Abs(a) => acc(
                grads,
                *a,
                g.zip_map(self.value(*a), |d, x| {
                    if x > 0.0 {
                        d
                    } else if x < 0.0 {
                        -d
                    } else {
                        0.0
                    }
                }),
            ),
            Op::Log(a) => acc(grads, *a, g.zip_map(self.value(*a), |d, x| d / x)),
            Op::Powf(a, p) => {
                let p = *p;
                acc(
                    grads,
                    *a,
                    g.zip_map(self.value(*a), |d, x| {
                        if p == 0.0 {
                            0.0
                        } else {
                            d * p * x.powf(p - 1.0)
                        }
                    }),
                )
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = Tensor2::from_fn(g.rows(), g.cols(), |r, c| {
                    if av.get(r, c) <= bv.get(r, c) {
                        g.get(r, c)
                    } else {
                        0.0
                    }
                });
                let gb = g.zip_map(&ga, |x, y| x - y);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Max(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = Tensor2::from_fn(g.rows(), g.cols(), |r, c| {
                    if av.get(r, c) >= bv.get(r, c) {
                        g.get(r, c)
                    } else {
                        0.0
                    }
                });
                let gb = g.zip_map(&ga, |x, y| x - y);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                acc(grads, *a, Tensor2::filled(r, c, g.get(0, 0)));
            }
            Op::LayerNorm(a) => {
                let x = self.value(*a);
                let mut t = Tensor2::zeros(x.rows(), x.cols());
                let n = x.cols() as f64;
                for r in 0..x.rows() {
                    let xr = x.row(r);
                    let mean = xr.iter().sum::<f64>() / n;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let inv = 1.0 / (var + tensor::LAYER_NORM_EPS).sqrt();
                    let y = out.row(r);
                    let gr = g.row(r);
                    let gmean = gr.iter().sum::<f64>() / n;
                    let gy = gr.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
                    for (c, v) in t.row_mut(r).iter_mut().enumerate() {
                        *v = inv * (gr[c] - gmean - y[c] * gy);
                    }
                }
                acc(grads, *a, t);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    let t = Tensor2::from_fn(g.rows(), w, |r, c| g.get(r, off + c));
                    acc(grads, *p, t);
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let h = self.value(*p).rows();
                    let t = Tensor2::from_fn(h, g.cols(), |r, c| g.get(off + r, c));
                    acc(grads, *p, t);
                    off += h;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.value(*a).shape();
                let mut t = Tensor2::zeros(r, c);
                for i in 0..g.rows() {
                    t.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                acc(grads, *a, t);
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.value(*a).shape();
                let mut t = Tensor2::zeros(r, c);
                t.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                acc(grads, *a, t);
            }
            Op::Gather(a, idx) => {
                let (r, c) = self.value(*a).shape();
                let mut t = Tensor2::zeros(r, c);
                for (k, &src) in idx.iter().enumerate() {
                    for (d, s) in t.row_mut(src).iter_mut().zip(g.row(k)) {
                        *d += s;
                    }
                }
                acc(grads, *a, t);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences over every entry of every constant input.
    fn check(build: impl Fn(&mut Tape, &[Var]) -> Var, inputs: &[Tensor2], tol: f64) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = build(&mut tape, &vars);
        let grads = tape.backward(out);
        let h = 1e-5;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads
                .wrt(vars[k])
                .cloned()
                .unwrap_or_else(|| Tensor2::zeros(input.rows(), input.cols()));
            for e in 0..input.data().len() {
                let eval = |delta: f64| {
                    let mut ins = inputs.to_vec();
                    ins[k].data_mut()[e] += delta;
                    let mut t = Tape::new();
                    let vs: Vec<Var> = ins.iter().map(|x| t.constant(x.clone())).collect();
                    let o = build(&mut t, &vs);
                    t.scalar_value(o)
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.data()[e];
                let err = (a - numeric).abs() / numeric.abs().max(1.0);
                assert!(err < tol, "input {k} entry {e}: analytic {a} numeric {numeric}");
            }
        }
    }

    fn sample(rows: usize, cols: usize, seed: u64) -> Tensor2 {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Tensor2::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn matmul_family_gradients() {
        let a = sample(3, 4, 1);
        let b = sample(4, 2, 2);
        let bt = sample(5, 4, 3);
        check(
            |t, v| {
                let m = t.matmul(v[0], v[1]);
                let n = t.matmul_t(v[0], v[2]);
                let s1 = t.sum(m);
                let q = t.mul(n, n);
                let s2 = t.sum(q);
                t.add(s1, s2)
            },
            &[a, b, bt],
            1e-7,
        );
    }

    #[test]
    fn elementwise_gradients() {
        let a = sample(2, 3, 4);
        let b = sample(2, 3, 5).map(|x| x + 3.0);
        let row = sample(1, 3, 6);
        check(
            |t, v| {
                let x = t.div(v[0], v[1]);
                let y = t.add_row(x, v[2]);
                let z = t.mul_row(y, v[2]);
                let g = t.gelu(z);
                let s = t.sigmoid(g);
                let l = t.log_sigmoid(s);
                let p = t.powf(s, 2.0);
                let w = t.sub(l, p);
                let ab = t.abs(w);
                let sc = t.scale(ab, 0.7);
                let lg = t.ln(v[1]);
                let f = t.add(sc, lg);
                let f = t.add_scalar(f, 2.0);
                t.sum(f)
            },
            &[a, b, row],
            1e-7,
        );
    }

    #[test]
    fn softmax_and_norm_gradients() {
        let a = sample(3, 5, 7);
        let w = sample(3, 5, 8);
        check(
            |t, v| {
                let s = t.softmax_rows(v[0]);
                let ls = t.log_softmax_rows(v[0]);
                let ln = t.layer_norm(v[0]);
                let m1 = t.mul(s, v[1]);
                let m2 = t.mul(ls, v[1]);
                let m3 = t.mul(ln, v[1]);
                let c = t.concat_cols(&[m1, m2, m3]);
                t.sum(c)
            },
            &[a, w],
            1e-6,
        );
    }

    #[test]
    fn structural_gradients() {
        let a = sample(4, 3, 9);
        let b = sample(2, 3, 10);
        check(
            |t, v| {
                let r = t.concat_rows(&[v[0], v[1]]);
                let g = t.gather_rows(r, &[5, 0, 0, 3]);
                let s = t.slice_rows(r, 1, 3);
                let c = t.slice_cols(s, 1, 2);
                let gm = t.mul(g, g);
                let cm = t.mul(c, c);
                let shifted = b_shift(t, v[1]);
                let mn = t.min(v[1], shifted);
                let mx = t.max(v[1], shifted);
                let mm = t.mul(mn, mx);
                let s1 = t.sum(gm);
                let s2 = t.sum(cm);
                let s3 = t.sum(mm);
                let r = t.relu(v[0]);
                let s4 = t.sum(r);
                let u = t.add(s1, s2);
                let u = t.add(u, s3);
                t.add(u, s4)
            },
            &[a, b],
            1e-7,
        );

        fn b_shift(t: &mut Tape, v: Var) -> Var {
            let neg = t.scale(v, -0.5);
            t.add_scalar(neg, 0.1)
        }
    }

    #[test]
    fn param_leaves_are_shared() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor2::row_vector(&[1.0, 2.0])).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, id);
        let b = tape.param(&store, id);
        assert_eq!(a, b);
        let m = tape.mul(a, b);
        let s = tape.sum(m);
        let g = tape.backward(s);
        let collected: Vec<_> = g.params().collect();
        assert_eq!(collected.len(), 1);
        assert_eq!(collected[0].1.data(), &[2.0, 4.0]);
    }
}
