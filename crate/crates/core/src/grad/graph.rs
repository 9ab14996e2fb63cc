//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only tape. Every primitive application pushes one
//! [`Node`] whose inputs precede it, so reverse tape order is a valid
//! topological order for the backward sweep.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::error::{shape_err, Error, Result};

use super::scalar::{gelu, gelu_grad};
use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::{ParamSet, Scalar, Tensor};

/// Handle to a node of one graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

/// Gather/scatter pattern for a kernel of `kernel_size` taps:
/// `out[dst] += in[src] · W[k]` for every `(dst, src)` in `pairs[k]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetPairs {
    pub kernel_size: usize,
    pub out_rows: usize,
    pub pairs: Vec<Vec<(u32, u32)>>,
}

impl OffsetPairs {
    pub fn new(kernel_size: usize, out_rows: usize) -> Self {
        Self {
            kernel_size,
            out_rows,
            pairs: vec![Vec::new(); kernel_size],
        }
    }

    pub fn push(&mut self, k: usize, dst: usize, src: usize) {
        self.pairs[k].push((dst as u32, src as u32));
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }
}

/// Primitive tag. Broadcasting rules are documented per variant.
#[derive(Clone, Debug)]
pub enum Primitive {
    /// Input or parameter; no inputs.
    Leaf,
    /// `[n,k] · [k,m] → [n,m]`.
    MatMul,
    /// `[n,m] → [m,n]`.
    Transpose,
    /// `[n,m] + [m]` (bias of `m` values, any shape) broadcast over rows.
    AddBias,
    /// Elementwise, identical shapes.
    Add,
    /// Elementwise, identical shapes.
    Sub,
    /// Elementwise, identical shapes.
    Mul,
    /// Multiply by a constant.
    Scale(f64),
    /// Exact Gaussian-CDF GELU, elementwise.
    Gelu,
    /// `[n,2h] → [n,h]`: first half times GELU of second half.
    Geglu,
    /// `([n,c], gain[c]) → [n,c]`, row-wise root-mean-square normalization.
    RmsNorm { eps: f64 },
    /// Row softmax of `[n,m]`. With a band `b`, row `i` only covers columns
    /// `j` with `|i − j| ≤ b`; the others are exactly zero.
    SoftmaxRows { band: Option<usize> },
    /// `[n,c] → [len(index),c]`, `out[r] = in[index[r]]`. Indices may repeat.
    GatherRows(Arc<[usize]>),
    /// `[len(index),c] → [rows,c]`, `out[index[r]] += in[r]`.
    ScatterAddRows { index: Arc<[usize]>, rows: usize },
    /// Mean of all elements → `[1]`.
    Mean,
    /// Sum of all elements → `[1]`.
    Sum,
    /// Elementwise absolute value; subgradient 0 at 0.
    Abs,
    /// Column concatenation of matrices with equal row counts.
    ConcatCols,
    /// Column range `[start, end)` of a matrix.
    SliceCols { start: usize, end: usize },
    /// `(in[n_in,cin], W[K·cin,cout]) → [out_rows,cout]` via [`OffsetPairs`].
    OffsetMatMul(Arc<OffsetPairs>),
    /// `(logits[n,K]) → [1]`, mean softmax cross-entropy over rows whose label is ≥ 0.
    CrossEntropy(Arc<[i32]>),
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Leaf => "leaf",
            Primitive::MatMul => "matmul",
            Primitive::Transpose => "transpose",
            Primitive::AddBias => "add_bias",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale(_) => "scale",
            Primitive::Gelu => "gelu",
            Primitive::Geglu => "geglu",
            Primitive::RmsNorm { .. } => "rmsnorm",
            Primitive::SoftmaxRows { .. } => "softmax_rows",
            Primitive::GatherRows(_) => "gather_rows",
            Primitive::ScatterAddRows { .. } => "scatter_add_rows",
            Primitive::Mean => "mean",
            Primitive::Sum => "sum",
            Primitive::Abs => "abs",
            Primitive::ConcatCols => "concat_cols",
            Primitive::SliceCols { .. } => "slice_cols",
            Primitive::OffsetMatMul(_) => "offset_matmul",
            Primitive::CrossEntropy(_) => "cross_entropy",
        }
    }
}

#[derive(Debug)]
pub struct Node<T> {
    pub id: Var,
    pub op_kind: Primitive,
    pub inputs: Vec<Var>,
    pub value: Tensor<T>,
    pub requires_grad: bool,
    // per-row reciprocal RMS for RmsNorm, softmax probabilities for CrossEntropy
    saved: Vec<T>,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Var>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        let id = Var(self.nodes.len());
        self.nodes.push(Node {
            id,
            op_kind: Primitive::Leaf,
            inputs: Vec::new(),
            value,
            requires_grad,
            saved: Vec::new(),
        });
        id
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Registers (once) the named parameter as a leaf. Repeated requests return the same node,
    /// so every use accumulates into one gradient.
    pub fn param(&mut self, params: &ParamSet<T>, name: &str, trainable: bool) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter '{name}'")))?
            .clone();
        let v = self.leaf(value, trainable);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn param_vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Applies one primitive, recording it on the tape.
    pub fn apply_primitive(&mut self, kind: Primitive, inputs: &[Var]) -> Result<Var> {
        let (value, saved) = {
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            forward(&kind, &vals)?
        };
        if !value.all_finite() {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite value",
                kind.name()
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let id = Var(self.nodes.len());
        self.nodes.push(Node {
            id,
            op_kind: kind,
            inputs: inputs.to_vec(),
            value,
            requires_grad,
            saved,
        });
        Ok(id)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_primitive(Primitive::MatMul, &[a, b])
    }
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Transpose, &[a])
    }
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        self.apply_primitive(Primitive::AddBias, &[x, b])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Mul, &[a, b])
    }
    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.apply_primitive(Primitive::Scale(s), &[a])
    }
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Gelu, &[a])
    }
    pub fn geglu(&mut self, a: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Geglu, &[a])
    }
    pub fn rmsnorm(&mut self, x: Var, gain: Var, eps: f64) -> Result<Var> {
        self.apply_primitive(Primitive::RmsNorm { eps }, &[x, gain])
    }
    pub fn softmax_rows(&mut self, x: Var, band: Option<usize>) -> Result<Var> {
        self.apply_primitive(Primitive::SoftmaxRows { band }, &[x])
    }
    pub fn gather_rows(&mut self, x: Var, index: impl Into<Arc<[usize]>>) -> Result<Var> {
        self.apply_primitive(Primitive::GatherRows(index.into()), &[x])
    }
    pub fn scatter_add_rows(
        &mut self,
        x: Var,
        index: impl Into<Arc<[usize]>>,
        rows: usize,
    ) -> Result<Var> {
        self.apply_primitive(
            Primitive::ScatterAddRows {
                index: index.into(),
                rows,
            },
            &[x],
        )
    }
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Mean, &[x])
    }
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Sum, &[x])
    }
    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.apply_primitive(Primitive::Abs, &[x])
    }
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        self.apply_primitive(Primitive::ConcatCols, xs)
    }
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        self.apply_primitive(Primitive::SliceCols { start, end }, &[x])
    }
    pub fn offset_matmul(&mut self, x: Var, w: Var, pairs: Arc<OffsetPairs>) -> Result<Var> {
        self.apply_primitive(Primitive::OffsetMatMul(pairs), &[x, w])
    }
    pub fn cross_entropy(&mut self, logits: Var, labels: impl Into<Arc<[i32]>>) -> Result<Var> {
        self.apply_primitive(Primitive::CrossEntropy(labels.into()), &[logits])
    }

    /// Mean absolute difference, the L1 reconstruction distance.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let d = self.abs(d)?;
        self.mean(d)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || node.inputs.is_empty() {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let wants: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let input_grads = self.vjp(node, &upstream, &wants);
            for ((inp, g), want) in node.inputs.iter().zip(input_grads).zip(&wants) {
                let (Some(g), true) = (g, *want) else {
                    continue;
                };
                match &mut grads[inp.0] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(a, b)| *a = *a + *b),
                    slot => *slot = Some(g),
                }
            }
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    /// Gradient map over every registered parameter. Unreached parameters get zeros.
    pub fn param_grads(&self, grads: &Gradients<T>) -> BTreeMap<String, Tensor<T>> {
        self.params
            .iter()
            .filter(|(_, v)| self.nodes[v.0].requires_grad)
            .map(|(name, &v)| (name.clone(), grads.wrt_or_zero(self, v)))
            .collect()
    }

    fn vjp(&self, node: &Node<T>, dy: &Tensor<T>, wants: &[bool]) -> Vec<Option<Tensor<T>>> {
        let x = |i: usize| &self.nodes[node.inputs[i].0].value;
        let dyd = dy.data();
        match &node.op_kind {
            Primitive::Leaf => vec![],
            Primitive::MatMul => {
                let (a, b) = (x(0), x(1));
                let (n, k, m) = (a.rows(), a.cols(), b.cols());
                let da = wants[0].then(|| {
                    let mut da = Tensor::zeros(a.shape());
                    matmul_nt_acc(dyd, b.data(), da.data_mut(), n, k, m);
                    da
                });
                let db = wants[1].then(|| {
                    let mut db = Tensor::zeros(b.shape());
                    matmul_tn_acc(a.data(), dyd, db.data_mut(), n, k, m);
                    db
                });
                vec![da, db]
            }
            Primitive::Transpose => vec![Some(transpose(dy))],
            Primitive::AddBias => {
                let b = x(1);
                let db = wants[1].then(|| {
                    let m = b.numel();
                    let mut db = Tensor::zeros(b.shape());
                    for row in dyd.chunks(m) {
                        db.data_mut()
                            .iter_mut()
                            .zip(row)
                            .for_each(|(a, &g)| *a = *a + g);
                    }
                    db
                });
                vec![Some(dy.clone()), db]
            }
            Primitive::Add => vec![Some(dy.clone()), Some(dy.clone())],
            Primitive::Sub => vec![Some(dy.clone()), wants[1].then(|| dy.map(|g| -g))],
            Primitive::Mul => {
                let (a, b) = (x(0), x(1));
                let da = wants[0].then(|| zip_map(dy, b, |g, bv| g * bv));
                let db = wants[1].then(|| zip_map(dy, a, |g, av| g * av));
                vec![da, db]
            }
            Primitive::Scale(s) => {
                let s = T::lit(*s);
                vec![Some(dy.map(|g| g * s))]
            }
            Primitive::Gelu => vec![Some(zip_map(dy, x(0), |g, v| g * gelu_grad(v)))],
            Primitive::Geglu => {
                let xin = x(0);
                let h = xin.cols() / 2;
                let mut dx = Tensor::zeros(xin.shape());
                for r in 0..xin.rows() {
                    let xr = xin.row(r);
                    let gr = dy.row(r);
                    let dr = dx.row_mut(r);
                    for j in 0..h {
                        let (a, b) = (xr[j], xr[h + j]);
                        dr[j] = gr[j] * gelu(b);
                        dr[h + j] = gr[j] * a * gelu_grad(b);
                    }
                }
                vec![Some(dx)]
            }
            Primitive::RmsNorm { .. } => {
                let (xin, gain) = (x(0), x(1));
                let c = xin.cols();
                let cf = T::lit(c as f64);
                let g = gain.data();
                let mut dx = Tensor::zeros(xin.shape());
                let mut dg = Tensor::zeros(gain.shape());
                for r in 0..xin.rows() {
                    let inv = node.saved[r];
                    let xr = xin.row(r);
                    let gr = dy.row(r);
                    let mut dot = T::zero();
                    for j in 0..c {
                        dot = dot + gr[j] * g[j] * xr[j];
                    }
                    let coef = dot * inv * inv * inv / cf;
                    let dr = dx.row_mut(r);
                    for j in 0..c {
                        dr[j] = gr[j] * g[j] * inv - xr[j] * coef;
                    }
                    let dgd = dg.data_mut();
                    for j in 0..c {
                        dgd[j] = dgd[j] + gr[j] * xr[j] * inv;
                    }
                }
                vec![Some(dx), wants[1].then_some(dg)]
            }
            Primitive::SoftmaxRows { band } => {
                let y = &node.value;
                let m = y.cols();
                let mut dx = Tensor::zeros(y.shape());
                for r in 0..y.rows() {
                    let (lo, hi) = band_range(r, m, *band);
                    let yr = &y.row(r)[lo..hi];
                    let gr = &dy.row(r)[lo..hi];
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    let dr = &mut dx.row_mut(r)[lo..hi];
                    for j in 0..dr.len() {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                vec![Some(dx)]
            }
            Primitive::GatherRows(index) => {
                let xin = x(0);
                let mut dx = Tensor::zeros(xin.shape());
                for (r, &src) in index.iter().enumerate() {
                    let gr = dy.row(r);
                    dx.row_mut(src)
                        .iter_mut()
                        .zip(gr)
                        .for_each(|(a, &g)| *a = *a + g);
                }
                vec![Some(dx)]
            }
            Primitive::ScatterAddRows { index, .. } => {
                let xin = x(0);
                let mut dx = Tensor::zeros(xin.shape());
                for (r, &dst) in index.iter().enumerate() {
                    dx.row_mut(r).copy_from_slice(dy.row(dst));
                }
                vec![Some(dx)]
            }
            Primitive::Mean => {
                let xin = x(0);
                let g = dyd[0] / T::lit(xin.numel() as f64);
                vec![Some(Tensor::filled(xin.shape(), g))]
            }
            Primitive::Sum => vec![Some(Tensor::filled(x(0).shape(), dyd[0]))],
            Primitive::Abs => vec![Some(zip_map(dy, x(0), |g, v| {
                if v > T::zero() {
                    g
                } else if v < T::zero() {
                    -g
                } else {
                    T::zero()
                }
            }))],
            Primitive::ConcatCols => {
                let mut out = Vec::with_capacity(node.inputs.len());
                let mut off = 0;
                let total = dy.cols();
                for (i, want) in wants.iter().enumerate() {
                    let xi = x(i);
                    let c = xi.cols();
                    if *want {
                        let mut dx = Tensor::zeros(xi.shape());
                        for r in 0..xi.rows() {
                            dx.row_mut(r)
                                .copy_from_slice(&dyd[r * total + off..r * total + off + c]);
                        }
                        out.push(Some(dx));
                    } else {
                        out.push(None);
                    }
                    off += c;
                }
                out
            }
            Primitive::SliceCols { start, end } => {
                let xin = x(0);
                let mut dx = Tensor::zeros(xin.shape());
                for r in 0..xin.rows() {
                    dx.row_mut(r)[*start..*end].copy_from_slice(dy.row(r));
                }
                vec![Some(dx)]
            }
            Primitive::OffsetMatMul(p) => {
                let (xin, w) = (x(0), x(1));
                let cin = xin.cols();
                let cout = w.cols();
                let mut dx = wants[0].then(|| Tensor::zeros(xin.shape()));
                let mut dw = wants[1].then(|| Tensor::zeros(w.shape()));
                let mut wt = vec![T::zero(); cin * cout];
                for (k, pairs) in p.pairs.iter().enumerate() {
                    let wk = &w.data()[k * cin * cout..(k + 1) * cin * cout];
                    if dx.is_some() {
                        // W_kᵀ so the input gradient is a sum of scaled rows
                        for i in 0..cin {
                            for j in 0..cout {
                                wt[j * cin + i] = wk[i * cout + j];
                            }
                        }
                    }
                    for &(dst, src) in pairs {
                        let gr = dy.row(dst as usize);
                        if let Some(dx) = dx.as_mut() {
                            let dr = dx.row_mut(src as usize);
                            for (j, &gv) in gr.iter().enumerate() {
                                if gv == T::zero() {
                                    continue;
                                }
                                let wr = &wt[j * cin..(j + 1) * cin];
                                dr.iter_mut().zip(wr).for_each(|(d, &wv)| *d = *d + gv * wv);
                            }
                        }
                        if let Some(dw) = dw.as_mut() {
                            let xr = xin.row(src as usize);
                            let dwk = &mut dw.data_mut()[k * cin * cout..(k + 1) * cin * cout];
                            for i in 0..cin {
                                let xv = xr[i];
                                if xv == T::zero() {
                                    continue;
                                }
                                let dwr = &mut dwk[i * cout..(i + 1) * cout];
                                dwr.iter_mut().zip(gr).for_each(|(a, &g)| *a = *a + xv * g);
                            }
                        }
                    }
                }
                vec![dx, dw]
            }
            Primitive::CrossEntropy(labels) => {
                let logits = x(0);
                let k = logits.cols();
                let valid = labels.iter().filter(|&&l| l >= 0).count();
                let scale = dyd[0] / T::lit(valid as f64);
                let mut dx = Tensor::zeros(logits.shape());
                for (r, &l) in labels.iter().enumerate() {
                    if l < 0 {
                        continue;
                    }
                    let probs = &node.saved[r * k..(r + 1) * k];
                    let dr = dx.row_mut(r);
                    for j in 0..k {
                        dr[j] = probs[j] * scale;
                    }
                    dr[l as usize] = dr[l as usize] - scale;
                }
                vec![Some(dx)]
            }
        }
    }
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`, if any path reached it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn wrt_or_zero(&self, graph: &Graph<T>, v: Var) -> Tensor<T> {
        self.wrt(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.value(v).shape()))
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn transpose<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let (n, m) = (a.rows(), a.cols());
    let mut out = Tensor::zeros(&[m, n]);
    let od = out.data_mut();
    for i in 0..n {
        for (j, &v) in a.row(i).iter().enumerate() {
            od[j * n + i] = v;
        }
    }
    out
}

fn band_range(r: usize, m: usize, band: Option<usize>) -> (usize, usize) {
    match band {
        None => (0, m),
        Some(b) => (r.saturating_sub(b), (r + b + 1).min(m)),
    }
}

fn expect_arity(kind: &Primitive, inputs: &[&Tensor<impl Scalar>], n: usize) -> Result<()> {
    if inputs.len() != n {
        return shape_err(format!(
            "{} takes {n} inputs, got {}",
            kind.name(),
            inputs.len()
        ));
    }
    Ok(())
}

fn expect_matrix<T: Scalar>(kind: &Primitive, t: &Tensor<T>) -> Result<()> {
    if t.shape().len() != 2 {
        return shape_err(format!(
            "{} expects a matrix, got shape {:?}",
            kind.name(),
            t.shape()
        ));
    }
    Ok(())
}

fn same_shape<T: Scalar>(kind: &Primitive, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(format!(
            "{}: shapes {:?} and {:?} differ",
            kind.name(),
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}

fn forward<T: Scalar>(kind: &Primitive, x: &[&Tensor<T>]) -> Result<(Tensor<T>, Vec<T>)> {
    let plain = |t: Tensor<T>| Ok((t, Vec::new()));
    match kind {
        Primitive::Leaf => shape_err("leaf nodes are created with Graph::leaf"),
        Primitive::MatMul => {
            expect_arity(kind, x, 2)?;
            expect_matrix(kind, x[0])?;
            expect_matrix(kind, x[1])?;
            let (n, k) = (x[0].rows(), x[0].cols());
            if x[1].rows() != k {
                return shape_err(format!(
                    "matmul: {:?} · {:?}",
                    x[0].shape(),
                    x[1].shape()
                ));
            }
            let m = x[1].cols();
            let mut out = Tensor::zeros(&[n, m]);
            matmul_acc(x[0].data(), x[1].data(), out.data_mut(), n, k, m);
            plain(out)
        }
        Primitive::Transpose => {
            expect_arity(kind, x, 1)?;
            expect_matrix(kind, x[0])?;
            plain(transpose(x[0]))
        }
        Primitive::AddBias => {
            expect_arity(kind, x, 2)?;
            let m = x[1].numel();
            if x[0].cols() != m {
                return shape_err(format!(
                    "add_bias: {:?} + bias of {m}",
                    x[0].shape()
                ));
            }
            let mut out = x[0].clone();
            let b = x[1].data();
            for row in out.data_mut().chunks_mut(m) {
                row.iter_mut().zip(b).for_each(|(a, &bv)| *a = *a + bv);
            }
            plain(out)
        }
        Primitive::Add | Primitive::Sub | Primitive::Mul => {
            expect_arity(kind, x, 2)?;
            same_shape(kind, x[0], x[1])?;
            let out = match kind {
                Primitive::Add => zip_map(x[0], x[1], |a, b| a + b),
                Primitive::Sub => zip_map(x[0], x[1], |a, b| a - b),
                _ => zip_map(x[0], x[1], |a, b| a * b),
            };
            plain(out)
        }
        Primitive::Scale(s) => {
            expect_arity(kind, x, 1)?;
            let s = T::lit(*s);
            plain(x[0].map(|v| v * s))
        }
        Primitive::Gelu => {
            expect_arity(kind, x, 1)?;
            plain(x[0].map(gelu))
        }
        Primitive::Geglu => {
            expect_arity(kind, x, 1)?;
            expect_matrix(kind, x[0])?;
            let c = x[0].cols();
            if c % 2 != 0 {
                return shape_err(format!("geglu needs an even width, got {c}"));
            }
            let h = c / 2;
            let n = x[0].rows();
            let mut out = Tensor::zeros(&[n, h]);
            for r in 0..n {
                let xr = x[0].row(r);
                let or = out.row_mut(r);
                for j in 0..h {
                    or[j] = xr[j] * gelu(xr[h + j]);
                }
            }
            plain(out)
        }
        Primitive::RmsNorm { eps } => {
            expect_arity(kind, x, 2)?;
            expect_matrix(kind, x[0])?;
            let c = x[0].cols();
            if x[1].numel() != c {
                return shape_err(format!("rmsnorm gain has {} values for width {c}", x[1].numel()));
            }
            let g = x[1].data();
            let eps = T::lit(*eps);
            let cf = T::lit(c as f64);
            let mut out = x[0].clone();
            let mut inv = Vec::with_capacity(out.rows());
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                let ms: T = row.iter().map(|&v| v * v).sum::<T>() / cf;
                let s = T::one() / (ms + eps).sqrt();
                inv.push(s);
                row.iter_mut().zip(g).for_each(|(v, &gv)| *v = *v * s * gv);
            }
            Ok((out, inv))
        }
        Primitive::SoftmaxRows { band } => {
            expect_arity(kind, x, 1)?;
            expect_matrix(kind, x[0])?;
            let m = x[0].cols();
            let mut out = Tensor::zeros(x[0].shape());
            for r in 0..x[0].rows() {
                let (lo, hi) = band_range(r, m, *band);
                if lo >= hi {
                    return shape_err(format!("softmax row {r} has an empty band"));
                }
                let xr = &x[0].row(r)[lo..hi];
                let mx = xr.iter().copied().fold(T::neg_infinity(), T::max);
                let or = &mut out.row_mut(r)[lo..hi];
                let mut s = T::zero();
                for (o, &v) in or.iter_mut().zip(xr) {
                    *o = (v - mx).exp();
                    s = s + *o;
                }
                or.iter_mut().for_each(|o| *o = *o / s);
            }
            plain(out)
        }
        Primitive::GatherRows(index) => {
            expect_arity(kind, x, 1)?;
            let out = x[0].select_rows(index)?;
            let mut shape = x[0].shape().to_vec();
            shape[0] = index.len();
            plain(out.reshape(shape)?)
        }
        Primitive::ScatterAddRows { index, rows } => {
            expect_arity(kind, x, 1)?;
            if index.len() != x[0].rows() {
                return shape_err(format!(
                    "scatter index has {} entries for {} rows",
                    index.len(),
                    x[0].rows()
                ));
            }
            let c = x[0].cols();
            let mut shape = x[0].shape().to_vec();
            shape[0] = *rows;
            let mut out = Tensor::new(shape, vec![T::zero(); rows * c])?;
            for (r, &dst) in index.iter().enumerate() {
                if dst >= *rows {
                    return shape_err(format!("scatter target {dst} out of range {rows}"));
                }
                out.row_mut(dst)
                    .iter_mut()
                    .zip(x[0].row(r))
                    .for_each(|(a, &v)| *a = *a + v);
            }
            plain(out)
        }
        Primitive::Mean => {
            expect_arity(kind, x, 1)?;
            let s: T = x[0].data().iter().copied().sum();
            plain(Tensor::scalar(s / T::lit(x[0].numel() as f64)))
        }
        Primitive::Sum => {
            expect_arity(kind, x, 1)?;
            plain(Tensor::scalar(x[0].data().iter().copied().sum()))
        }
        Primitive::Abs => {
            expect_arity(kind, x, 1)?;
            plain(x[0].map(T::abs))
        }
        Primitive::ConcatCols => {
            if x.is_empty() {
                return shape_err("concat of nothing");
            }
            let n = x[0].rows();
            for t in x {
                expect_matrix(kind, t)?;
                if t.rows() != n {
                    return shape_err("concat_cols row counts differ");
                }
            }
            let total: usize = x.iter().map(|t| t.cols()).sum();
            let mut data = Vec::with_capacity(n * total);
            for r in 0..n {
                for t in x {
                    data.extend_from_slice(t.row(r));
                }
            }
            plain(Tensor::new(vec![n, total], data)?)
        }
        Primitive::SliceCols { start, end } => {
            expect_arity(kind, x, 1)?;
            expect_matrix(kind, x[0])?;
            if start >= end || *end > x[0].cols() {
                return shape_err(format!(
                    "slice [{start},{end}) of width {}",
                    x[0].cols()
                ));
            }
            let n = x[0].rows();
            let mut data = Vec::with_capacity(n * (end - start));
            for r in 0..n {
                data.extend_from_slice(&x[0].row(r)[*start..*end]);
            }
            plain(Tensor::new(vec![n, end - start], data)?)
        }
        Primitive::OffsetMatMul(p) => {
            expect_arity(kind, x, 2)?;
            let (xin, w) = (x[0], x[1]);
            expect_matrix(kind, xin)?;
            expect_matrix(kind, w)?;
            let cin = xin.cols();
            if w.rows() != p.kernel_size * cin || p.pairs.len() != p.kernel_size {
                return shape_err(format!(
                    "offset_matmul weight {:?} for {} taps × {cin} inputs",
                    w.shape(),
                    p.kernel_size
                ));
            }
            let cout = w.cols();
            let mut out = Tensor::zeros(&[p.out_rows, cout]);
            for (k, pairs) in p.pairs.iter().enumerate() {
                let wk = &w.data()[k * cin * cout..(k + 1) * cin * cout];
                for &(dst, src) in pairs {
                    let (dst, src) = (dst as usize, src as usize);
                    if dst >= p.out_rows || src >= xin.rows() {
                        return shape_err(format!("offset pair ({dst},{src}) out of range"));
                    }
                    let xr = xin.row(src);
                    let or = out.row_mut(dst);
                    for (i, &xv) in xr.iter().enumerate() {
                        if xv == T::zero() {
                            continue;
                        }
                        let wr = &wk[i * cout..(i + 1) * cout];
                        or.iter_mut().zip(wr).for_each(|(o, &wv)| *o = *o + xv * wv);
                    }
                }
            }
            plain(out)
        }
        Primitive::CrossEntropy(labels) => {
            expect_arity(kind, x, 1)?;
            expect_matrix(kind, x[0])?;
            let (n, k) = (x[0].rows(), x[0].cols());
            if labels.len() != n {
                return shape_err(format!("{} labels for {n} rows", labels.len()));
            }
            let mut probs = vec![T::zero(); n * k];
            let mut loss = T::zero();
            let mut valid = 0usize;
            for (r, &l) in labels.iter().enumerate() {
                if l < 0 {
                    continue;
                }
                if l as usize >= k {
                    return shape_err(format!("label {l} out of range for {k} classes"));
                }
                let xr = x[0].row(r);
                let mx = xr.iter().copied().fold(T::neg_infinity(), T::max);
                let pr = &mut probs[r * k..(r + 1) * k];
                let mut s = T::zero();
                for (p, &v) in pr.iter_mut().zip(xr) {
                    *p = (v - mx).exp();
                    s = s + *p;
                }
                pr.iter_mut().for_each(|p| *p = *p / s);
                loss = loss - (xr[l as usize] - mx - s.ln());
                valid += 1;
            }
            if valid == 0 {
                return Err(Error::Contract("cross_entropy with no labeled rows".into()));
            }
            Ok((Tensor::scalar(loss / T::lit(valid as f64)), probs))
        }
    }
}
