use crate::error::{Error, Result};

/// `counts[gt][pred]` over points whose ground truth is not ignored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    /// Adds points; ground truth below 0 is skipped. A prediction outside `0..K` is an error.
    pub fn add(&mut self, pred: &[i32], gt: &[i32]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} labels",
                pred.len(),
                gt.len()
            )));
        }
        let k = self.num_classes as i32;
        for (&p, &g) in pred.iter().zip(gt) {
            if g < 0 {
                continue;
            }
            if g >= k || !(0..k).contains(&p) {
                return Err(Error::Range(format!("label pair ({g}, {p}) outside 0..{k}")));
            }
            self.counts[g as usize * self.num_classes + p as usize] += 1;
        }
        Ok(())
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// IoU per class; `None` for classes absent from both predictions and ground truth.
    pub fn iou(&self) -> Vec<Option<f64>> {
        let k = self.num_classes;
        (0..k)
            .map(|c| {
                let tp = self.get(c, c);
                let fn_: u64 = (0..k).filter(|&p| p != c).map(|p| self.get(c, p)).sum();
                let fp: u64 = (0..k).filter(|&g| g != c).map(|g| self.get(g, c)).sum();
                let denom = tp + fp + fn_;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    /// Mean IoU over present classes (0 when nothing was scored).
    pub fn miou(&self) -> f64 {
        let ious: Vec<f64> = self.iou().into_iter().flatten().collect();
        if ious.is_empty() {
            0.0
        } else {
            ious.iter().sum::<f64>() / ious.len() as f64
        }
    }
}

/// Per-class IoU and their mean over classes present in predictions or ground truth.
pub fn miou(pred: &[i32], gt: &[i32], num_classes: usize) -> Result<(Vec<Option<f64>>, f64)> {
    let mut cm = ConfusionMatrix::new(num_classes);
    cm.add(pred, gt)?;
    Ok((cm.iou(), cm.miou()))
}
