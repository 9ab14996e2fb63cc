use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{Graph, ParamSet, Tensor};
use crate::rng::rng_for;
use crate::train::{adamw_step, lr_schedule, AdamState, AdamWConfig};

use super::linear::{fit_linear, LinearHead, ProbeConfig, Standardizer};

/// Frozen features and annotations of one scene.
#[derive(Clone, Debug)]
pub struct InstanceScene {
    pub features: Tensor<f64>,
    pub positions: Vec<[f64; 3]>,
    pub labels: Vec<i32>,
    pub instance_ids: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceConfig {
    pub probe: ProbeConfig,
    pub hidden: usize,
    /// Linking radius of the shifted-point clustering.
    pub radius: f64,
    pub min_points: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            probe: ProbeConfig::default(),
            hidden: 64,
            radius: 0.15,
            min_points: 5,
        }
    }
}

/// A predicted instance: point rows of one scene, class and score.
#[derive(Clone, Debug, PartialEq)]
pub struct InstancePrediction {
    pub scene: usize,
    /// Ascending point rows; never empty.
    pub points: Vec<usize>,
    pub class: i32,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GtInstance {
    pub scene: usize,
    pub points: Vec<usize>,
    pub class: i32,
}

/// Ground-truth instances of the classes accepted by `keep`, class by majority label.
pub fn gt_instances(scene: usize, labels: &[i32], instance_ids: &[i32], keep: impl Fn(i32) -> bool) -> Vec<GtInstance> {
    let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (r, &id) in instance_ids.iter().enumerate() {
        if id >= 0 && labels[r] >= 0 {
            groups.entry(id).or_default().push(r);
        }
    }
    groups
        .into_values()
        .filter_map(|points| {
            let mut votes: BTreeMap<i32, usize> = BTreeMap::new();
            for &p in &points {
                *votes.entry(labels[p]).or_default() += 1;
            }
            let class = votes
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&c, _)| c)?;
            keep(class).then_some(GtInstance { scene, points, class })
        })
        .collect()
}

/// Intersection over union of two ascending row lists.
pub fn set_iou(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Average precision at IoU ≥ 0.5 for one class: predictions ranked by confidence, greedy
/// matching to unmatched ground truth of the same scene, all-point interpolated precision.
/// `None` when the class has no ground truth.
pub fn average_precision(preds: &[&InstancePrediction], gts: &[&GtInstance]) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let mut order: Vec<&InstancePrediction> = preds.to_vec();
    order.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.scene.cmp(&b.scene))
            .then(a.points.cmp(&b.points))
    });
    let mut matched = vec![false; gts.len()];
    let mut tp = Vec::with_capacity(order.len());
    for p in order {
        let mut best: Option<(f64, usize)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if matched[gi] || g.scene != p.scene {
                continue;
            }
            let iou = set_iou(&p.points, &g.points);
            if iou >= 0.5 && best.is_none_or(|b| iou > b.0) {
                best = Some((iou, gi));
            }
        }
        match best {
            Some((_, gi)) => {
                matched[gi] = true;
                tp.push(true);
            }
            None => tp.push(false),
        }
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += usize::from(t);
        precision.push(hits as f64 / (i + 1) as f64);
        recall.push(hits as f64 / gts.len() as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev) * p;
        prev = *r;
    }
    Some(ap)
}

/// Per-class AP@50 and their mean over classes with ground truth.
pub fn map50(preds: &[InstancePrediction], gts: &[GtInstance]) -> (BTreeMap<i32, f64>, f64) {
    let classes: std::collections::BTreeSet<i32> = gts.iter().map(|g| g.class).collect();
    let mut per_class = BTreeMap::new();
    for c in classes {
        let p: Vec<&InstancePrediction> = preds.iter().filter(|p| p.class == c).collect();
        let g: Vec<&GtInstance> = gts.iter().filter(|g| g.class == c).collect();
        if let Some(ap) = average_precision(&p, &g) {
            per_class.insert(c, ap);
        }
    }
    let mean = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    (per_class, mean)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage grouping of points of equal class within `radius`, via union-find over a
/// hashed grid. Only rows with `keep(class)` take part; groups below `min_points` are dropped.
/// Groups are returned in order of their smallest row.
pub fn radius_clusters(
    positions: &[[f64; 3]],
    classes: &[i32],
    radius: f64,
    min_points: usize,
    keep: impl Fn(i32) -> bool,
) -> Vec<Vec<usize>> {
    let rows: Vec<usize> = (0..positions.len()).filter(|&r| keep(classes[r])).collect();
    let cell = |p: &[f64; 3]| p.map(|v| (v / radius).floor() as i64);
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for &r in &rows {
        buckets.entry(cell(&positions[r])).or_default().push(r);
    }
    let mut parent: Vec<usize> = (0..positions.len()).collect();
    let r2 = radius * radius;
    for &r in &rows {
        let c = cell(&positions[r]);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(b) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &o in b {
                        if o <= r || classes[o] != classes[r] {
                            continue;
                        }
                        let d2: f64 = (0..3).map(|a| (positions[r][a] - positions[o][a]).powi(2)).sum();
                        if d2 <= r2 {
                            let (ra, rb) = (find(&mut parent, r), find(&mut parent, o));
                            if ra != rb {
                                parent[ra.max(rb)] = ra.min(rb);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &r in &rows {
        let root = find(&mut parent, r);
        groups.entry(root).or_default().push(r);
    }
    groups.into_values().filter(|g| g.len() >= min_points).collect()
}

/// Point-to-centroid offset regressor: linear, GELU, linear.
#[derive(Clone, Debug)]
pub struct OffsetHead {
    pub scaler: Standardizer,
    pub params: ParamSet<f64>,
}

impl OffsetHead {
    pub fn predict(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        let mut g = Graph::new();
        let xv = g.constant(self.scaler.apply(x));
        let out = offset_forward(&mut g, &self.params, xv, false)?;
        Ok(g.value(out).clone())
    }
}

fn offset_forward(g: &mut Graph<f64>, ps: &ParamSet<f64>, x: crate::grad::Var, train: bool) -> Result<crate::grad::Var> {
    let w1 = g.param(ps, "off.fc1.w", train)?;
    let b1 = g.param(ps, "off.fc1.b", train)?;
    let w2 = g.param(ps, "off.fc2.w", train)?;
    let b2 = g.param(ps, "off.fc2.b", train)?;
    let h = g.matmul(x, w1)?;
    let h = g.add_bias(h, b1)?;
    let h = g.gelu(h)?;
    let h = g.matmul(h, w2)?;
    g.add_bias(h, b2)
}

/// Trains the offset head with an L1 loss on rows listed in `rows`.
pub fn fit_offsets(x: &Tensor<f64>, targets: &Tensor<f64>, rows: &[usize], cfg: &InstanceConfig) -> Result<OffsetHead> {
    if rows.is_empty() {
        return Err(Error::DegenerateInput("no instance points to regress offsets on".into()));
    }
    let p = &cfg.probe;
    let scaler = Standardizer::fit(&x.select_rows(rows)?, p.standardize);
    let xs = scaler.apply(x);
    let d = x.cols();
    let mut rng = rng_for(p.seed, "offset-init", 0);
    let mut params = ParamSet::new();
    for (name, cin, cout) in [("fc1", d, cfg.hidden), ("fc2", cfg.hidden, 3)] {
        let bound = (6.0 / cin as f64).sqrt();
        params.insert(format!("off.{name}.w"), Tensor::from_fn(&[cin, cout], |_| rng.random_range(-bound..bound)));
        params.insert(format!("off.{name}.b"), Tensor::zeros(&[cout]));
    }
    let mut adam = AdamState::zeros_like(&params);
    let opt = AdamWConfig { weight_decay: p.weight_decay, ..AdamWConfig::default() };
    let total = (rows.len().div_ceil(p.batch_size) * p.epochs) as u64;
    let mut order = rows.to_vec();
    let mut step = 0u64;
    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(p.batch_size) {
            let mut g = Graph::new();
            let xb = g.constant(xs.select_rows(chunk)?);
            let tb = g.constant(targets.select_rows(chunk)?);
            let pred = offset_forward(&mut g, &params, xb, true)?;
            let loss = g.l1_mean(pred, tb)?;
            let grads = g.backward(loss)?;
            params.zero_grads();
            params.accumulate_grads(&g.param_grads(&grads), 1.0)?;
            let lr = lr_schedule(step, 0, total, p.lr);
            adamw_step(&mut params, &mut adam, lr, &opt, |n| n.ends_with(".w"))?;
            step += 1;
        }
    }
    Ok(OffsetHead { scaler, params })
}

fn stack(scenes: &[InstanceScene]) -> Result<Tensor<f64>> {
    let d = scenes.first().map(|s| s.features.cols()).unwrap_or(0);
    let mut data = Vec::new();
    let mut n = 0;
    for s in scenes {
        if s.features.cols() != d {
            return Err(Error::Shape("scenes carry different feature widths".into()));
        }
        data.extend_from_slice(s.features.data());
        n += s.features.rows();
    }
    Tensor::new(vec![n, d], data)
}

/// Class head and offset head trained on frozen features; validation instances come from
/// clustering offset-shifted points.
#[derive(Clone, Debug)]
pub struct InstanceProbe {
    pub class_head: LinearHead,
    pub offset_head: OffsetHead,
    pub predictions: Vec<InstancePrediction>,
    pub per_class_ap: BTreeMap<i32, f64>,
    pub map50: f64,
}

pub fn instance_probe(
    train: &[InstanceScene],
    val: &[InstanceScene],
    num_classes: usize,
    is_thing: impl Fn(i32) -> bool + Copy,
    cfg: &InstanceConfig,
) -> Result<InstanceProbe> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::DegenerateInput("instance probe needs train and val scenes".into()));
    }
    let x = stack(train)?;
    let labels: Vec<i32> = train.iter().flat_map(|s| s.labels.iter().copied()).collect();
    let (class_head, _, _) = fit_linear(&x, &labels, num_classes, &cfg.probe, |_| Ok(0.0))?;
    let mut targets = Vec::with_capacity(x.rows() * 3);
    let mut rows = Vec::new();
    let mut base = 0;
    for s in train {
        for g in gt_instances(0, &s.labels, &s.instance_ids, is_thing) {
            let mut c = [0.0; 3];
            for &p in &g.points {
                (0..3).for_each(|a| c[a] += s.positions[p][a]);
            }
            let c = c.map(|v| v / g.points.len() as f64);
            for &p in &g.points {
                rows.push((base + p, (0..3).map(|a| c[a] - s.positions[p][a]).collect::<Vec<_>>()));
            }
        }
        base += s.features.rows();
    }
    rows.sort_by_key(|r| r.0);
    let mut offset_targets = vec![0.0; x.rows() * 3];
    for (r, t) in &rows {
        offset_targets[r * 3..r * 3 + 3].copy_from_slice(t);
    }
    targets.extend(offset_targets);
    let targets = Tensor::new(vec![x.rows(), 3], targets)?;
    let fit_rows: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let offset_head = fit_offsets(&x, &targets, &fit_rows, cfg)?;

    let mut predictions = Vec::new();
    let mut gts = Vec::new();
    for (si, s) in val.iter().enumerate() {
        let (cls, conf) = class_head.predict(&s.features)?;
        let off = offset_head.predict(&s.features)?;
        let shifted: Vec<[f64; 3]> = s
            .positions
            .iter()
            .enumerate()
            .map(|(r, p)| [p[0] + off.row(r)[0], p[1] + off.row(r)[1], p[2] + off.row(r)[2]])
            .collect();
        for group in radius_clusters(&shifted, &cls, cfg.radius, cfg.min_points, is_thing) {
            let class = cls[group[0]];
            let confidence = group.iter().map(|&r| conf[r]).sum::<f64>() / group.len() as f64;
            predictions.push(InstancePrediction { scene: si, points: group, class, confidence });
        }
        gts.extend(gt_instances(si, &s.labels, &s.instance_ids, is_thing));
    }
    let (per_class_ap, map) = map50(&predictions, &gts);
    Ok(InstanceProbe {
        class_head,
        offset_head,
        predictions,
        per_class_ap,
        map50: map,
    })
}
