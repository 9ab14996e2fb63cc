use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grad::Tensor;
use crate::rng::rng_for;

/// Top principal directions of a feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit directions, strongest first; at most 3.
    pub components: Vec<Vec<f64>>,
    /// Variance along each direction (population normalization).
    pub variances: Vec<f64>,
}

const MAX_ITERS: usize = 20_000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Power iteration with deflation on the covariance matrix. Each iterate is kept orthogonal
/// to the directions already found.
pub fn fit_pca(x: &Tensor<f64>, k: usize) -> Result<Pca> {
    let (n, d) = (x.rows(), x.cols());
    if n < 3 {
        return Err(Error::DegenerateInput(format!("PCA needs at least 3 points, got {n}")));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        mean.iter_mut().zip(x.row(r)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    let mut c = vec![0.0; d];
    for r in 0..n {
        c.iter_mut().zip(x.row(r)).zip(&mean).for_each(|((c, v), m)| *c = v - m);
        for i in 0..d {
            let ci = c[i];
            if ci != 0.0 {
                cov[i * d..(i + 1) * d].iter_mut().zip(&c).for_each(|(a, cj)| *a += ci * cj);
            }
        }
    }
    cov.iter_mut().for_each(|v| *v /= n as f64);
    let mut rng = rng_for(0, "pca-start", 0);
    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut variances = Vec::new();
    for _ in 0..k.min(d) {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        orthogonalize(&mut v, &components);
        normalize(&mut v);
        let mut w = vec![0.0; d];
        for _ in 0..MAX_ITERS {
            for i in 0..d {
                w[i] = dot(&cov[i * d..(i + 1) * d], &v);
            }
            orthogonalize(&mut w, &components);
            if normalize(&mut w) == 0.0 {
                break;
            }
            let change: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            std::mem::swap(&mut v, &mut w);
            if change < 1e-13 {
                break;
            }
        }
        orthogonalize(&mut v, &components);
        normalize(&mut v);
        let cv: Vec<f64> = (0..d).map(|i| dot(&cov[i * d..(i + 1) * d], &v)).collect();
        variances.push(dot(&v, &cv).max(0.0));
        components.push(v);
    }
    Ok(Pca { mean, components, variances })
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
    }
}

impl Pca {
    /// Centered projections onto the components, `[n, components]`.
    pub fn project(&self, x: &Tensor<f64>) -> Tensor<f64> {
        let k = self.components.len();
        let mut out = Vec::with_capacity(x.rows() * k);
        let mut c = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            c.iter_mut().zip(x.row(r)).zip(&self.mean).for_each(|((c, v), m)| *c = v - m);
            out.extend(self.components.iter().map(|b| dot(&c, b)));
        }
        Tensor::from_fn(&[x.rows(), k], |i| out[i])
    }
}

/// Projects features onto their top-3 principal directions and min-max scales each to
/// [0, 1]. A direction whose range is negligible next to the first one maps to 0.5.
pub fn pca_colors(x: &Tensor<f64>) -> Result<Vec<[f64; 3]>> {
    let pca = fit_pca(x, 3)?;
    let proj = pca.project(x);
    let k = proj.cols();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for r in 0..proj.rows() {
        for j in 0..k {
            lo[j] = lo[j].min(proj.row(r)[j]);
            hi[j] = hi[j].max(proj.row(r)[j]);
        }
    }
    let reference = if k > 0 { (hi[0] - lo[0]).max(1.0) } else { 1.0 };
    let span: Vec<Option<f64>> = (0..3)
        .map(|j| (j < k && hi[j] - lo[j] > 1e-9 * reference).then(|| hi[j] - lo[j]))
        .collect();
    Ok((0..proj.rows())
        .map(|r| {
            let mut rgb = [0.5; 3];
            for j in 0..3 {
                if let Some(s) = span[j] {
                    rgb[j] = ((proj.row(r)[j] - lo[j]) / s).clamp(0.0, 1.0);
                }
            }
            rgb
        })
        .collect())
}
