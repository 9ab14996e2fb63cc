use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::Tensor;
use crate::jobs::par_map;
use crate::scene::PointCloud;

/// Groups points by `(cell of size `cell`, instance id)`, cells anchored at the scene's minimum
/// corner. Ids follow first appearance.
pub fn build_superpoints(cloud: &PointCloud, cell: f64) -> Result<Vec<usize>> {
    if !(cell > 0.0) {
        return Err(Error::Contract(format!("superpoint cell {cell} must be positive")));
    }
    let mut lo = [f64::INFINITY; 3];
    for p in &cloud.positions {
        (0..3).for_each(|a| lo[a] = lo[a].min(p[a]));
    }
    let mut ids: HashMap<([i64; 3], i32), usize> = HashMap::new();
    Ok(cloud
        .positions
        .iter()
        .zip(&cloud.instance_ids)
        .map(|(p, &inst)| {
            let key = ([0, 1, 2].map(|a| ((p[a] - lo[a]) / cell).floor() as i64), inst);
            let next = ids.len();
            *ids.entry(key).or_insert(next)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    L2,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Metric::L1),
            "l2" => Ok(Metric::L2),
            "cosine" | "cos" => Ok(Metric::Cosine),
            _ => Err(Error::Config(format!("unknown metric '{s}' (l1, l2, cosine)"))),
        }
    }
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::L1, Metric::L2, Metric::Cosine];

    pub fn name(self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
        }
    }

    /// L1 distance, squared L2 distance (same ordering as L2), or `1 − cos`.
    /// A zero vector has cosine similarity 0 with everything.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::L1 => lanes(a, b, |x, y| (x - y).abs()),
            Metric::L2 => lanes(a, b, |x, y| (x - y) * (x - y)),
            Metric::Cosine => {
                let na = lanes(a, a, |x, y| x * y).sqrt();
                let nb = lanes(b, b, |x, y| x * y).sqrt();
                cosine_distance(lanes(a, b, |x, y| x * y), na, nb)
            }
        }
    }
}

fn cosine_distance(dot: f64, na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        1.0
    } else {
        1.0 - dot / (na * nb)
    }
}

/// `Σ f(a_i, b_i)` with eight independent accumulators so the loop vectorizes.
#[inline]
fn lanes(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += f(x[k], y[k]);
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(&x, &y)| f(x, y)).sum();
    acc.iter().sum::<f64>() + tail
}

/// Mean feature per superpoint (`[count, d]`) and its majority label over labeled points
/// (smallest class on ties, −1 when none are labeled).
pub fn superpoint_means(x: &Tensor<f64>, sp: &[usize], labels: Option<&[i32]>) -> Result<(Tensor<f64>, Vec<i32>)> {
    if sp.len() != x.rows() {
        return Err(Error::Shape(format!("{} superpoint ids for {} rows", sp.len(), x.rows())));
    }
    let count = sp.iter().max().map_or(0, |m| m + 1);
    if count == 0 {
        return Err(Error::DegenerateInput("no superpoints".into()));
    }
    let d = x.cols();
    let mut sums = vec![0.0; count * d];
    let mut n = vec![0usize; count];
    let mut votes: Vec<HashMap<i32, usize>> = vec![HashMap::new(); count];
    for (r, &s) in sp.iter().enumerate() {
        n[s] += 1;
        sums[s * d..(s + 1) * d].iter_mut().zip(x.row(r)).for_each(|(a, &v)| *a += v);
        if let Some(l) = labels {
            if l[r] >= 0 {
                *votes[s].entry(l[r]).or_default() += 1;
            }
        }
    }
    for s in 0..count {
        let k = n[s].max(1) as f64;
        sums[s * d..(s + 1) * d].iter_mut().for_each(|v| *v /= k);
    }
    let maj = votes
        .iter()
        .map(|v| {
            v.iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map_or(-1, |(&c, _)| c)
        })
        .collect();
    Ok((Tensor::new(vec![count, d], sums)?, maj))
}

fn unit_rows(x: &Tensor<f64>) -> Tensor<f64> {
    let mut out = x.clone();
    let d = x.cols();
    for r in out.data_mut().chunks_mut(d) {
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            r.iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

/// Index of the nearest row of `bank` among `candidates` (lowest index on ties, up to a
/// `1e-12` relative tolerance).
pub fn nearest(bank: &Tensor<f64>, candidates: &[usize], q: &[f64], metric: Metric) -> usize {
    let norms = (metric == Metric::Cosine).then(|| row_norms(bank));
    nearest_with(bank, norms.as_deref(), candidates, q, metric)
}

fn row_norms(x: &Tensor<f64>) -> Vec<f64> {
    (0..x.rows()).map(|r| lanes(x.row(r), x.row(r), |a, b| a * b).sqrt()).collect()
}

fn nearest_with(bank: &Tensor<f64>, norms: Option<&[f64]>, candidates: &[usize], q: &[f64], metric: Metric) -> usize {
    let qt = Tensor::new(vec![1, q.len()], q.to_vec()).expect("row");
    nearest_block(bank, norms, candidates, &qt, 0..1, metric)[0]
}

/// Distances this close (relative, floor 1) count as ties so mathematically equal distances
/// that round differently still resolve to the lowest index.
const TIE_TOLERANCE: f64 = 1e-12;

/// Queries handled together so each bank row is reused while it is in cache.
const QUERY_BLOCK: usize = 48;

fn nearest_block(
    bank: &Tensor<f64>,
    norms: Option<&[f64]>,
    candidates: &[usize],
    queries: &Tensor<f64>,
    rows: std::ops::Range<usize>,
    metric: Metric,
) -> Vec<usize> {
    let qn: Vec<f64> = rows.clone().map(|q| lanes(queries.row(q), queries.row(q), |a, b| a * b).sqrt()).collect();
    let mut best = vec![(f64::INFINITY, usize::MAX); rows.len()];
    for &i in candidates {
        let b = bank.row(i);
        for (k, q) in rows.clone().enumerate() {
            let q = queries.row(q);
            let dist = match (metric, norms) {
                (Metric::Cosine, Some(n)) => cosine_distance(lanes(b, q, |x, y| x * y), n[i], qn[k]),
                _ => metric.distance(b, q),
            };
            let tol = TIE_TOLERANCE * best[k].0.abs().max(1.0);
            if dist < best[k].0 - tol || (dist <= best[k].0 + tol && i < best[k].1) {
                best[k] = (dist, i);
            }
        }
    }
    best.into_iter().map(|b| b.1).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NnOptions {
    pub metric: Metric,
    /// Scale superpoint features to unit length before the search.
    pub normalize: bool,
    pub jobs: usize,
}

impl Default for NnOptions {
    fn default() -> Self {
        Self {
            metric: Metric::L2,
            normalize: false,
            jobs: 1,
        }
    }
}

/// Label transfer by 1-NN between superpoint mean features. Returns a label per val point.
pub fn nn_probe(
    train_x: &Tensor<f64>,
    train_y: &[i32],
    train_sp: &[usize],
    val_x: &Tensor<f64>,
    val_sp: &[usize],
    opts: &NnOptions,
) -> Result<Vec<i32>> {
    if train_x.cols() != val_x.cols() {
        return Err(Error::Shape("train and val feature widths differ".into()));
    }
    if train_y.len() != train_x.rows() {
        return Err(Error::Shape("train labels do not match train features".into()));
    }
    let (mut bank, bank_labels) = superpoint_means(train_x, train_sp, Some(train_y))?;
    let (mut queries, _) = superpoint_means(val_x, val_sp, None)?;
    if opts.normalize {
        bank = unit_rows(&bank);
        queries = unit_rows(&queries);
    }
    let candidates: Vec<usize> = (0..bank.rows()).filter(|&i| bank_labels[i] >= 0).collect();
    if candidates.is_empty() {
        return Err(Error::DegenerateInput("no labeled training superpoint".into()));
    }
    let norms = (opts.metric == Metric::Cosine).then(|| row_norms(&bank));
    let blocks: Vec<usize> = (0..queries.rows()).step_by(QUERY_BLOCK).collect();
    let sp_label: Vec<i32> = par_map(opts.jobs, &blocks, |_, &start| {
        let end = (start + QUERY_BLOCK).min(queries.rows());
        nearest_block(&bank, norms.as_deref(), &candidates, &queries, start..end, opts.metric)
            .into_iter()
            .map(|i| bank_labels[i])
            .collect::<Vec<_>>()
    })
    .concat();
    Ok(val_sp.iter().map(|&s| sp_label[s]).collect())
}
