//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] borrows a [`ParamStore`] for the duration of one forward pass,
//! records every operation, and replays it backwards to produce [`Grads`].
//! The op set is exactly what the transformer stack needs: affine maps,
//! row broadcasts, layer norm, GELU/SiLU, fused multi-head softmax attention, row slicing,
//! element permutations and a mean-squared-error head.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{ensure, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{gemm, Mat, View, ViewMut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S> {
    names: Vec<String>,
    values: Vec<Mat<S>>,
    lookup: HashMap<String, usize>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Mat<S>) -> ParamId {
        let name = name.into();
        assert!(!self.lookup.contains_key(&name), "duplicate parameter `{name}`");
        let id = self.values.len();
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat<S> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat<S> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat<S>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    /// Maps a flat scalar index (in insertion order) to `(param, offset)`.
    pub fn locate(&self, mut flat: usize) -> Option<(ParamId, usize)> {
        for (i, v) in self.values.iter().enumerate() {
            if flat < v.len() {
                return Some((ParamId(i), flat));
            }
            flat -= v.len();
        }
        None
    }
}

/// Gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Grads<S> {
    values: Vec<Mat<S>>,
}

impl<S: Scalar> Grads<S> {
    pub fn zeros_like(store: &ParamStore<S>) -> Self {
        Self {
            values: store.values.iter().map(|m| Mat::zeros(m.rows(), m.cols())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Mat<S> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat<S> {
        &mut self.values[id.0]
    }

    pub fn accumulate(&mut self, other: &Grads<S>, k: S) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.axpy(k, b).expect("gradient shapes are aligned");
        }
    }

    pub fn global_norm(&self) -> S {
        self.values.iter().map(Mat::sum_sq).sum::<S>().sqrt()
    }

    pub fn scale(&mut self, k: S) {
        for m in &mut self.values {
            for x in m.data_mut() {
                *x *= k;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Mat::all_finite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Scale(Var, S),
    LayerNorm { x: Var, gamma: Var, beta: Var },
    Gelu(Var),
    Silu(Var),
    Attention { qkv: Var, heads: usize },
    SliceRows { x: Var, start: usize },
    Permute { x: Var, index: Rc<[usize]> },
    Mse { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node<S> {
    op: Op<S>,
    value: Option<Mat<S>>,
    param: Option<ParamId>,
    needs_grad: bool,
    aux: Vec<S>,
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub struct Tape<'p, S: Scalar> {
    store: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(store: &'p ParamStore<S>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Mat<S> {
        let node = &self.nodes[v.0];
        match node.param {
            Some(id) => self.store.get(id),
            None => node.value.as_ref().expect("non-parameter node carries a value"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<S>, value: Mat<S>, needs_grad: bool, aux: Vec<S>) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
            param: None,
            needs_grad,
            aux,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Mat<S>) -> Var {
        self.push(Op::Leaf, value, false, Vec::new())
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: None,
            param: Some(id),
            needs_grad: true,
            aux: Vec::new(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), out, ng, Vec::new()))
    }

    /// Adds a `1 × cols` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        ensure!(
            rv.rows() == 1 && rv.cols() == xv.cols(),
            Shape,
            "row broadcast of {:?} onto {:?}",
            rv.shape(),
            xv.shape()
        );
        let mut out = xv.clone();
        let r = rv.data().to_vec();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&r) {
                *o += b;
            }
        }
        let ng = self.needs(x) || self.needs(row);
        Ok(self.push(Op::AddRow(x, row), out, ng, Vec::new()))
    }

    /// Multiplies every row of `x` element-wise by a `1 × cols` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        ensure!(
            rv.rows() == 1 && rv.cols() == xv.cols(),
            Shape,
            "row broadcast of {:?} onto {:?}",
            rv.shape(),
            xv.shape()
        );
        let mut out = xv.clone();
        let r = rv.data().to_vec();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&r) {
                *o *= b;
            }
        }
        let ng = self.needs(x) || self.needs(row);
        Ok(self.push(Op::MulRow(x, row), out, ng, Vec::new()))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), out, ng, Vec::new()))
    }

    pub fn scale(&mut self, x: Var, k: S) -> Var {
        let out = self.value(x).scale(k);
        let ng = self.needs(x);
        self.push(Op::Scale(x, k), out, ng, Vec::new())
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = xv.shape();
        ensure!(
            self.value(gamma).shape() == (1, c) && self.value(beta).shape() == (1, c),
            Shape,
            "layer norm affine params must be 1x{c}"
        );
        let eps = S::lit(LN_EPS);
        let cf = S::lit(c as f64);
        // aux layout: xhat (n*c) then rstd (n)
        let mut aux = vec![S::zero(); n * c + n];
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<S>() / cf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / cf;
            let rstd = S::one() / (var + eps).sqrt();
            for (j, &v) in row.iter().enumerate() {
                aux[r * c + j] = (v - mean) * rstd;
            }
            aux[n * c + r] = rstd;
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let out = Mat::from_fn(n, c, |r, j| aux[r * c + j] * g[j] + b[j]);
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(Op::LayerNorm { x, gamma, beta }, out, ng, aux))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let c = S::lit(GELU_C);
        let k = S::lit(0.044_715);
        let half = S::lit(0.5);
        let out = self
            .value(x)
            .map(|v| half * v * (S::one() + (c * (v + k * v * v * v)).tanh()));
        let ng = self.needs(x);
        self.push(Op::Gelu(x), out, ng, Vec::new())
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v / (S::one() + (-v).exp()));
        let ng = self.needs(x);
        self.push(Op::Silu(x), out, ng, Vec::new())
    }

    /// Fused multi-head self-attention. `qkv` is `n × 3w` laid out as
    /// `[Q | K | V]`, each split into `heads` contiguous column groups.
    /// Returns the `n × w` concatenation of per-head outputs.
    pub fn attention(&mut self, qkv: Var, heads: usize) -> Result<Var> {
        let qv = self.value(qkv);
        let (n, c3) = qv.shape();
        ensure!(c3 % 3 == 0, Shape, "qkv width {c3} not divisible by 3");
        let w = c3 / 3;
        ensure!(heads > 0 && w % heads == 0, Shape, "width {w} not divisible by {heads} heads");
        let hd = w / heads;
        let scale = S::one() / S::lit(hd as f64).sqrt();
        let mut probs = vec![S::zero(); heads * n * n];
        let mut out = Mat::zeros(n, w);
        for h in 0..heads {
            let q = View::new(qv.data(), h * hd, n, hd, c3, 1);
            let kt = View::new(qv.data(), w + h * hd, n, hd, c3, 1).t();
            let v = View::new(qv.data(), 2 * w + h * hd, n, hd, c3, 1);
            let p = &mut probs[h * n * n..(h + 1) * n * n];
            gemm(scale, q, kt, S::zero(), ViewMut::new(p, 0, n, n, n, 1));
            for r in 0..n {
                softmax_in_place(&mut p[r * n..(r + 1) * n]);
            }
            let pv = View::new(p, 0, n, n, n, 1);
            gemm(S::one(), pv, v, S::zero(), out.col_block_mut(h * hd, hd));
        }
        let ng = self.needs(qkv);
        Ok(self.push(Op::Attention { qkv, heads }, out, ng, probs))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice_rows(start, len)?;
        let ng = self.needs(x);
        Ok(self.push(Op::SliceRows { x, start }, out, ng, Vec::new()))
    }

    /// Element permutation: `out.data[j] = x.data[index[j]]`, reshaped to
    /// `rows × cols`.
    pub fn permute(&mut self, x: Var, index: Rc<[usize]>, rows: usize, cols: usize) -> Result<Var> {
        let xv = self.value(x);
        ensure!(
            index.len() == rows * cols && index.len() == xv.len(),
            Shape,
            "permutation of {} elements into {rows}x{cols}",
            xv.len()
        );
        let src = xv.data();
        let data: Vec<S> = index.iter().map(|&i| src[i]).collect();
        let ng = self.needs(x);
        Ok(self.push(Op::Permute { x, index }, Mat::from_vec(rows, cols, data), ng, Vec::new()))
    }

    /// Mean over all elements of `(pred - target)^2`, as a `1 × 1` node.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        ensure!(
            p.shape() == t.shape(),
            Shape,
            "prediction {:?} vs target {:?}",
            p.shape(),
            t.shape()
        );
        let n = S::lit(p.len().max(1) as f64);
        let loss = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<S>()
            / n;
        let ng = self.needs(pred) || self.needs(target);
        Ok(self.push(Op::Mse { pred, target }, Mat::from_vec(1, 1, vec![loss]), ng, Vec::new()))
    }

    /// Back-propagates from a `1 × 1` node.
    pub fn backward(&self, root: Var) -> Result<Grads<S>> {
        ensure!(
            self.value(root).shape() == (1, 1),
            Shape,
            "backward root must be a scalar node"
        );
        let mut out = Grads::zeros_like(self.store);
        let mut grads: Vec<Option<Mat<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::from_vec(1, 1, vec![S::one()]));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(id) = node.param {
                out.get_mut(id).axpy(S::one(), &g)?;
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(out)
    }

    fn send(&self, grads: &mut [Option<Mat<S>>], to: Var, g: Mat<S>) -> Result<()> {
        if !self.needs(to) {
            return Ok(());
        }
        match &mut grads[to.0] {
            Some(acc) => acc.axpy(S::one(), &g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, node: &Node<S>, g: &Mat<S>, grads: &mut [Option<Mat<S>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let mut da = Mat::zeros(av.rows(), av.cols());
                    gemm(S::one(), g.view(), bv.view().t(), S::zero(), da.view_mut());
                    self.send(grads, *a, da)?;
                }
                if self.needs(*b) {
                    let mut db = Mat::zeros(bv.rows(), bv.cols());
                    gemm(S::one(), av.view().t(), g.view(), S::zero(), db.view_mut());
                    self.send(grads, *b, db)?;
                }
            }
            Op::AddRow(x, row) => {
                if self.needs(*row) {
                    let mut dr = Mat::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, &v) in dr.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    self.send(grads, *row, dr)?;
                }
                self.send(grads, *x, g.clone())?;
            }
            Op::MulRow(x, row) => {
                let (xv, rv) = (self.value(*x), self.value(*row));
                if self.needs(*row) {
                    let mut dr = Mat::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for ((d, &gv), &xx) in dr.data_mut().iter_mut().zip(g.row(r)).zip(xv.row(r)) {
                            *d += gv * xx;
                        }
                    }
                    self.send(grads, *row, dr)?;
                }
                if self.needs(*x) {
                    let mut dx = g.clone();
                    for r in 0..dx.rows() {
                        for (d, &b) in dx.row_mut(r).iter_mut().zip(rv.data()) {
                            *d *= b;
                        }
                    }
                    self.send(grads, *x, dx)?;
                }
            }
            Op::Add(a, b) => {
                self.send(grads, *a, g.clone())?;
                self.send(grads, *b, g.clone())?;
            }
            Op::Scale(x, k) => self.send(grads, *x, g.scale(*k))?,
            Op::LayerNorm { x, gamma, beta } => {
                let (n, c) = g.shape();
                let xhat = &node.aux[..n * c];
                let rstd = &node.aux[n * c..];
                let gam = self.value(*gamma).data();
                if self.needs(*gamma) || self.needs(*beta) {
                    let mut dg = Mat::zeros(1, c);
                    let mut db = Mat::zeros(1, c);
                    for r in 0..n {
                        for j in 0..c {
                            let gv = g.get(r, j);
                            dg.data_mut()[j] += gv * xhat[r * c + j];
                            db.data_mut()[j] += gv;
                        }
                    }
                    self.send(grads, *gamma, dg)?;
                    self.send(grads, *beta, db)?;
                }
                if self.needs(*x) {
                    let cf = S::lit(c as f64);
                    let mut dx = Mat::zeros(n, c);
                    let mut dxh = vec![S::zero(); c];
                    for r in 0..n {
                        let mut m1 = S::zero();
                        let mut m2 = S::zero();
                        for j in 0..c {
                            dxh[j] = g.get(r, j) * gam[j];
                            m1 += dxh[j];
                            m2 += dxh[j] * xhat[r * c + j];
                        }
                        m1 /= cf;
                        m2 /= cf;
                        for j in 0..c {
                            dx.set(r, j, rstd[r] * (dxh[j] - m1 - xhat[r * c + j] * m2));
                        }
                    }
                    self.send(grads, *x, dx)?;
                }
            }
            Op::Gelu(x) => {
                let c = S::lit(GELU_C);
                let k = S::lit(0.044_715);
                let half = S::lit(0.5);
                let three = S::lit(3.0);
                let dx = self.value(*x).zip_map(g, |v, gv| {
                    let th = (c * (v + k * v * v * v)).tanh();
                    let d = half * (S::one() + th) + half * v * (S::one() - th * th) * c * (S::one() + three * k * v * v);
                    gv * d
                })?;
                self.send(grads, *x, dx)?;
            }
            Op::Silu(x) => {
                let dx = self.value(*x).zip_map(g, |v, gv| {
                    let s = S::one() / (S::one() + (-v).exp());
                    gv * s * (S::one() + v * (S::one() - s))
                })?;
                self.send(grads, *x, dx)?;
            }
            Op::Attention { qkv, heads } => {
                if !self.needs(*qkv) {
                    return Ok(());
                }
                let qv = self.value(*qkv);
                let (n, c3) = qv.shape();
                let w = c3 / 3;
                let hd = w / heads;
                let scale = S::one() / S::lit(hd as f64).sqrt();
                let mut dqkv = Mat::zeros(n, c3);
                let mut dp = vec![S::zero(); n * n];
                for h in 0..*heads {
                    let p = &node.aux[h * n * n..(h + 1) * n * n];
                    let pv = View::new(p, 0, n, n, n, 1);
                    let go = View::new(g.data(), h * hd, n, hd, w, 1);
                    let q = View::new(qv.data(), h * hd, n, hd, c3, 1);
                    let k = View::new(qv.data(), w + h * hd, n, hd, c3, 1);
                    let v = View::new(qv.data(), 2 * w + h * hd, n, hd, c3, 1);
                    // dV = P^T dO
                    gemm(
                        S::one(),
                        pv.t(),
                        go,
                        S::zero(),
                        ViewMut::new(dqkv.data_mut(), 2 * w + h * hd, n, hd, c3, 1),
                    );
                    // dP = dO V^T
                    gemm(S::one(), go, v.t(), S::zero(), ViewMut::new(&mut dp, 0, n, n, n, 1));
                    // dS = P ⊙ (dP - rowdot(dP, P))
                    for r in 0..n {
                        let prow = &p[r * n..(r + 1) * n];
                        let drow = &mut dp[r * n..(r + 1) * n];
                        let dot: S = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum();
                        for (d, &pp) in drow.iter_mut().zip(prow) {
                            *d = pp * (*d - dot);
                        }
                    }
                    let ds = View::new(&dp, 0, n, n, n, 1);
                    gemm(
                        scale,
                        ds,
                        k,
                        S::zero(),
                        ViewMut::new(dqkv.data_mut(), h * hd, n, hd, c3, 1),
                    );
                    gemm(
                        scale,
                        ds.t(),
                        q,
                        S::zero(),
                        ViewMut::new(dqkv.data_mut(), w + h * hd, n, hd, c3, 1),
                    );
                }
                self.send(grads, *qkv, dqkv)?;
            }
            Op::SliceRows { x, start } => {
                if self.needs(*x) {
                    let xv = self.value(*x);
                    let mut dx = Mat::zeros(xv.rows(), xv.cols());
                    let c = xv.cols();
                    dx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    self.send(grads, *x, dx)?;
                }
            }
            Op::Permute { x, index } => {
                if self.needs(*x) {
                    let xv = self.value(*x);
                    let mut dx = Mat::zeros(xv.rows(), xv.cols());
                    let d = dx.data_mut();
                    for (j, &i) in index.iter().enumerate() {
                        d[i] += g.data()[j];
                    }
                    self.send(grads, *x, dx)?;
                }
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(*pred), self.value(*target));
                let k = S::lit(2.0) * g.get(0, 0) / S::lit(p.len().max(1) as f64);
                let dp = p.zip_map(t, |a, b| k * (a - b))?;
                if self.needs(*target) {
                    self.send(grads, *target, dp.scale(-S::one()))?;
                }
                self.send(grads, *pred, dp)?;
            }
        }
        Ok(())
    }
}

fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Scalar value of a `1 × 1` node.
pub fn scalar_of<S: Scalar>(m: &Mat<S>) -> Result<S> {
    if m.shape() != (1, 1) {
        return Err(Error::Shape(format!("expected 1x1, got {:?}", m.shape())));
    }
    Ok(m.get(0, 0))
}
