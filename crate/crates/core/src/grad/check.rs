use crate::error::Result;

use super::{Graph, Scalar, Tensor, Var};

/// Per-leaf worst relative error between analytic and central-difference gradients.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_leaf: Vec<f64>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_leaf.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < self.tolerance
    }
}

/// Compares reverse-mode gradients of `build`'s scalar output against central differences
/// with step `h`, for every element of every leaf.
///
/// Relative error is `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn check_gradients<T, F>(
    leaves: &[Tensor<T>],
    h: f64,
    tolerance: f64,
    build: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<T>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).item().as_f64())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut per_leaf = Vec::with_capacity(leaves.len());
    let mut work: Vec<Tensor<T>> = leaves.to_vec();
    for (li, &v) in vars.iter().enumerate() {
        let analytic = grads.wrt_or_zero(&g, v);
        let mut worst = 0.0f64;
        for e in 0..leaves[li].numel() {
            let orig = work[li].data()[e];
            work[li].data_mut()[e] = orig + T::lit(h);
            let fp = eval(&work)?;
            work[li].data_mut()[e] = orig - T::lit(h);
            let fm = eval(&work)?;
            work[li].data_mut()[e] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.data()[e].as_f64();
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
        per_leaf.push(worst);
    }
    Ok(GradCheckReport {
        per_leaf,
        tolerance,
    })
}
