use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::grad::{ParamSet, Scalar, Tensor};

/// Linear warmup from 0 to `base_lr`, then cosine decay to 0 at `total_steps`.
pub fn lr_schedule(step: u64, warmup_steps: u64, total_steps: u64, base_lr: f64) -> f64 {
    if step < warmup_steps {
        return base_lr * step as f64 / warmup_steps as f64;
    }
    if total_steps <= warmup_steps {
        return base_lr;
    }
    let t = ((step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64).min(1.0);
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Cosine ramp of the teacher momentum from `m0` at step 0 to `m1` at `total_steps`.
pub fn momentum_schedule(step: u64, total_steps: u64, m0: f64, m1: f64) -> f64 {
    let t = if total_steps == 0 {
        1.0
    } else {
        (step as f64 / total_steps as f64).min(1.0)
    };
    m1 - (m1 - m0) * ((std::f64::consts::PI * t).cos() + 1.0) / 2.0
}

/// `teacher ← m·teacher + (1−m)·student` for every parameter.
pub fn ema_update<T: Scalar>(teacher: &mut ParamSet<T>, student: &ParamSet<T>, momentum: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::Contract(format!("momentum {momentum} outside [0, 1]")));
    }
    if !teacher.same_layout(student) {
        return shape_err("teacher and student parameter layouts differ");
    }
    let m = T::lit(momentum);
    let one_m = T::one() - m;
    for (name, s) in student.iter() {
        let t = teacher.get_mut(name).expect("same layout");
        t.data_mut()
            .iter_mut()
            .zip(s.data())
            .for_each(|(tv, &sv)| {
                // m·t + (1−m)·t can round away from t
                if *tv != sv {
                    *tv = m * *tv + one_m * sv;
                }
            });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.05,
        }
    }
}

/// First and second moment estimates, keyed like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros_like(params: &ParamSet<T>) -> Self {
        let mut m = ParamSet::new();
        for (name, p) in params.iter() {
            m.insert(name, Tensor::zeros(p.shape()));
        }
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One decoupled-weight-decay Adam update from the gradients stored in `params`.
/// Decay applies only where `decays(name)` holds.
pub fn adamw_step<T: Scalar>(
    params: &mut ParamSet<T>,
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamWConfig,
    decays: impl Fn(&str) -> bool,
) -> Result<()> {
    if !params.same_layout(&state.m) {
        return shape_err("optimizer moments do not match the parameters");
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let (lr_t, eps) = (T::lit(lr), T::lit(cfg.eps));
    let (bc1, bc2) = (T::lit(bc1), T::lit(bc2));
    for (name, p, g) in params.iter_with_grads_mut() {
        let m = state.m.get_mut(name).expect("same layout").data_mut();
        let v = state.v.get_mut(name).expect("same layout").data_mut();
        let wd = if decays(name) { T::lit(lr * cfg.weight_decay) } else { T::zero() };
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = b1 * *mv + one_b1 * gv;
            *vv = b2 * *vv + one_b2 * gv * gv;
            *pv = *pv - wd * *pv;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *pv = *pv - lr_t * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Population standard deviation across rows, averaged over channels.
pub fn collapse_metric<T: Scalar>(features: &Tensor<T>) -> f64 {
    let (n, c) = (features.rows(), features.cols());
    let mut total = 0.0;
    for j in 0..c {
        let mean = (0..n).map(|i| features.row(i)[j].as_f64()).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| (features.row(i)[j].as_f64() - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        total += var.sqrt();
    }
    total / c as f64
}
