//! Parameter-explicit building blocks. Each takes graph variables for its weights so the
//! same code serves the model and standalone tests.

use std::sync::Arc;

use crate::error::Result;
use crate::grad::{Graph, OffsetPairs, Scalar, Var};

use super::plan::AttnOrder;

/// `out[v] = Σ W[o]·in[u] + bias` over the planned `(o, v, u)` neighbor triples.
/// `w` is `[27·cin, cout]`, tap-major.
pub fn sparse_conv<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    w: Var,
    bias: Option<Var>,
    pairs: &Arc<OffsetPairs>,
) -> Result<Var> {
    let y = g.offset_matmul(x, w, pairs.clone())?;
    match bias {
        Some(b) => g.add_bias(y, b),
        None => Ok(y),
    }
}

/// Strided 2×2×2 convolution: each parent sums `W[octant]·child` over its children.
pub fn downsample<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    w: Var,
    bias: Option<Var>,
    down: &Arc<OffsetPairs>,
) -> Result<Var> {
    sparse_conv(g, x, w, bias, down)
}

/// Transposed strided convolution: each child receives `W[its octant]·parent`.
pub fn upsample<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    w: Var,
    bias: Option<Var>,
    up: &Arc<OffsetPairs>,
) -> Result<Var> {
    sparse_conv(g, x, w, bias, up)
}

pub fn linear<T: Scalar>(g: &mut Graph<T>, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
    let y = g.matmul(x, w)?;
    match bias {
        Some(b) => g.add_bias(y, b),
        None => Ok(y),
    }
}

/// Projection weights of one multi-head attention layer.
#[derive(Clone, Copy, Debug)]
pub struct AttnWeights {
    /// `[c, 3c]`, columns ordered query | key | value.
    pub qkv_w: Var,
    pub qkv_b: Var,
    pub proj_w: Var,
    pub proj_b: Var,
}

/// Multi-head scaled dot-product attention over the serialized sequence, each position seeing
/// the positions within `±⌊window/2⌋` of it.
pub fn windowed_attention<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    weights: &AttnWeights,
    order: &AttnOrder,
    window: usize,
    heads: usize,
) -> Result<Var> {
    let c = g.shape(x)[1];
    let d = c / heads;
    let xs = g.gather_rows(x, order.forward.clone())?;
    let qkv = linear(g, xs, weights.qkv_w, Some(weights.qkv_b))?;
    let band = Some(window / 2);
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let q = g.slice_cols(qkv, h * d, (h + 1) * d)?;
        let k = g.slice_cols(qkv, c + h * d, c + (h + 1) * d)?;
        let v = g.slice_cols(qkv, 2 * c + h * d, 2 * c + (h + 1) * d)?;
        let kt = g.transpose(k)?;
        let s = g.matmul(q, kt)?;
        let s = g.scale(s, 1.0 / (d as f64).sqrt())?;
        let p = g.softmax_rows(s, band)?;
        outs.push(g.matmul(p, v)?);
    }
    let o = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    let o = linear(g, o, weights.proj_w, Some(weights.proj_b))?;
    g.gather_rows(o, order.backward.clone())
}
