use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{Graph, ParamSet, Tensor};
use crate::rng::rng_for;
use crate::train::{adamw_step, lr_schedule, AdamState, AdamWConfig};

use super::metrics::ConfusionMatrix;

/// Optimization settings shared by the probes (`probe.*` config keys).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Standardize feature columns with training-set statistics before fitting.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            lr: 0.01,
            weight_decay: 0.01,
            batch_size: 4096,
            seed: 0,
            standardize: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config(
                "probe.epochs, probe.batch_size and probe.lr must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Column means and standard deviations (floored at 1e-8).
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Tensor<f64>, enabled: bool) -> Self {
        let (n, d) = (x.rows(), x.cols());
        if !enabled {
            return Self { mean: vec![0.0; d], std: vec![1.0; d] };
        }
        let mut mean = vec![0.0; d];
        for r in 0..n {
            mean.iter_mut().zip(x.row(r)).for_each(|(m, &v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for (j, &v) in x.row(r).iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
        let std = var.iter().map(|v| (v / n as f64).sqrt().max(1e-8)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &Tensor<f64>) -> Tensor<f64> {
        let mut out = x.clone();
        let d = x.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % d;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        out
    }
}

/// Affine classifier over frozen features.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    pub scaler: Standardizer,
    /// `[d, classes]`.
    pub weight: Tensor<f64>,
    pub bias: Tensor<f64>,
}

impl LinearHead {
    pub fn logits(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        let mut g = Graph::new();
        let xv = g.constant(self.scaler.apply(x));
        let w = g.constant(self.weight.clone());
        let b = g.constant(self.bias.clone());
        let y = g.matmul(xv, w)?;
        let y = g.add_bias(y, b)?;
        Ok(g.value(y).clone())
    }

    /// Arg-max class (lowest index on ties) and its softmax probability, per row.
    pub fn predict(&self, x: &Tensor<f64>) -> Result<(Vec<i32>, Vec<f64>)> {
        let logits = self.logits(x)?;
        let mut labels = Vec::with_capacity(logits.rows());
        let mut conf = Vec::with_capacity(logits.rows());
        for r in 0..logits.rows() {
            let row = logits.row(r);
            let (best, &mx) = row
                .iter()
                .enumerate()
                .fold((0, &row[0]), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            labels.push(best as i32);
            conf.push(1.0 / z);
        }
        Ok((labels, conf))
    }
}

/// Result of a linear probe run.
#[derive(Clone, Debug)]
pub struct LinearProbe {
    pub head: LinearHead,
    pub best_epoch: usize,
    pub val_miou: f64,
    pub val_iou: Vec<Option<f64>>,
}

fn labeled_rows(labels: &[i32]) -> Vec<usize> {
    labels.iter().enumerate().filter(|(_, &l)| l >= 0).map(|(i, _)| i).collect()
}

/// Softmax-regression training; `on_epoch` sees the head after every epoch and returns a
/// score, the best-scoring head (earliest on ties) is kept.
pub fn fit_linear(
    x: &Tensor<f64>,
    labels: &[i32],
    num_classes: usize,
    cfg: &ProbeConfig,
    mut on_epoch: impl FnMut(&LinearHead) -> Result<f64>,
) -> Result<(LinearHead, usize, f64)> {
    cfg.validate()?;
    if x.rows() != labels.len() {
        return Err(Error::Shape(format!("{} feature rows for {} labels", x.rows(), labels.len())));
    }
    let rows = labeled_rows(labels);
    if rows.is_empty() {
        return Err(Error::DegenerateInput("no labeled training points".into()));
    }
    let d = x.cols();
    let scaler = Standardizer::fit(&x.select_rows(&rows)?, cfg.standardize);
    let xs = scaler.apply(x);
    let mut params = ParamSet::new();
    params.insert("probe.w", Tensor::zeros(&[d, num_classes]));
    params.insert("probe.b", Tensor::zeros(&[num_classes]));
    let mut adam = AdamState::zeros_like(&params);
    let opt = AdamWConfig { weight_decay: cfg.weight_decay, ..AdamWConfig::default() };
    let steps_per_epoch = rows.len().div_ceil(cfg.batch_size);
    let total = (steps_per_epoch * cfg.epochs) as u64;
    let mut rng = rng_for(cfg.seed, "probe-order", 0);
    let mut order = rows.clone();
    let mut step = 0u64;
    let mut best: Option<(LinearHead, usize, f64)> = None;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let xb = g.constant(xs.select_rows(chunk)?);
            let w = g.param(&params, "probe.w", true)?;
            let b = g.param(&params, "probe.b", true)?;
            let y = g.matmul(xb, w)?;
            let y = g.add_bias(y, b)?;
            let yl: Vec<i32> = chunk.iter().map(|&r| labels[r]).collect();
            let loss = g.cross_entropy(y, yl)?;
            let grads = g.backward(loss)?;
            params.zero_grads();
            params.accumulate_grads(&g.param_grads(&grads), 1.0)?;
            let lr = lr_schedule(step, 0, total, cfg.lr);
            adamw_step(&mut params, &mut adam, lr, &opt, |n| n.ends_with(".w"))?;
            step += 1;
        }
        let head = LinearHead {
            scaler: scaler.clone(),
            weight: params.get("probe.w").expect("present").clone(),
            bias: params.get("probe.b").expect("present").clone(),
        };
        let score = on_epoch(&head)?;
        if best.as_ref().is_none_or(|b| score > b.2) {
            best = Some((head, epoch, score));
        }
    }
    Ok(best.expect("at least one epoch"))
}

/// Trains a linear classifier on frozen training features and reports the best-epoch
/// validation mIoU.
pub fn linear_probe(
    train_x: &Tensor<f64>,
    train_y: &[i32],
    val_x: &Tensor<f64>,
    val_y: &[i32],
    num_classes: usize,
    cfg: &ProbeConfig,
) -> Result<LinearProbe> {
    if train_x.cols() != val_x.cols() {
        return Err(Error::Shape(format!(
            "train width {} differs from val width {}",
            train_x.cols(),
            val_x.cols()
        )));
    }
    let score = |head: &LinearHead| -> Result<f64> {
        let (pred, _) = head.predict(val_x)?;
        let mut cm = ConfusionMatrix::new(num_classes);
        cm.add(&pred, val_y)?;
        Ok(cm.miou())
    };
    let (head, best_epoch, val_miou) = fit_linear(train_x, train_y, num_classes, cfg, score)?;
    let (pred, _) = head.predict(val_x)?;
    let mut cm = ConfusionMatrix::new(num_classes);
    cm.add(&pred, val_y)?;
    Ok(LinearProbe {
        head,
        best_epoch,
        val_miou,
        val_iou: cm.iou(),
    })
}
