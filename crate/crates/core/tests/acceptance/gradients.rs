use std::collections::BTreeMap;
use std::sync::Arc;

use msm::grad::{check_gradients, OffsetPairs, Var};
use msm::hunet::{HUNet, HUNetConfig};
use msm::rng::rng_for;
use msm::train::{init_predictors, msm_loss, predict, LossTerm};
use msm::views::make_mask;
use msm::voxel::{build_hierarchy, voxelize};
use msm::{Graph, ParamSet, Result, Tensor};
use rand::Rng as _;

use crate::common::{random_cloud, random_tensor};

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

/// Contracts an arbitrary output against fixed weights into a scalar.
fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let mut rng = rng_for(seed, "grad-weights", 0);
    let w = g.constant(random_tensor(&mut rng, &shape, 0.5, 1.5));
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn away_from_zero(rng: &mut msm::rng::Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.2..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Every primitive with random inputs for one seed: `(name, leaves, build)`.
fn primitive_cases(seed: u64) -> Vec<(&'static str, Vec<Tensor>, Build)> {
    let mut rng = rng_for(seed, "grad-inputs", 0);
    let mut r = |shape: &[usize]| random_tensor(&mut rng, shape, -1.0, 1.0);
    let a34 = r(&[3, 4]);
    let b34 = r(&[3, 4]);
    let mut cases: Vec<(&'static str, Vec<Tensor>, Build)> = vec![
        ("matmul", vec![r(&[3, 4]), r(&[4, 2])], Box::new(move |g, v| {
            let y = g.matmul(v[0], v[1])?;
            weighted_sum(g, y, seed)
        })),
        ("transpose", vec![a34.clone()], Box::new(move |g, v| {
            let y = g.transpose(v[0])?;
            weighted_sum(g, y, seed)
        })),
        ("add_bias", vec![r(&[4, 3]), r(&[3])], Box::new(move |g, v| {
            let y = g.add_bias(v[0], v[1])?;
            weighted_sum(g, y, seed)
        })),
        ("add", vec![a34.clone(), b34.clone()], Box::new(move |g, v| {
            let y = g.add(v[0], v[1])?;
            weighted_sum(g, y, seed)
        })),
        ("sub", vec![a34.clone(), b34.clone()], Box::new(move |g, v| {
            let y = g.sub(v[0], v[1])?;
            weighted_sum(g, y, seed)
        })),
        ("mul", vec![a34.clone(), b34.clone()], Box::new(move |g, v| {
            let y = g.mul(v[0], v[1])?;
            weighted_sum(g, y, seed)
        })),
        ("scale", vec![a34.clone()], Box::new(move |g, v| {
            let y = g.scale(v[0], -0.7)?;
            weighted_sum(g, y, seed)
        })),
        ("gelu", vec![r(&[4, 5])], Box::new(move |g, v| {
            let y = g.gelu(v[0])?;
            weighted_sum(g, y, seed)
        })),
        ("geglu", vec![r(&[3, 6])], Box::new(move |g, v| {
            let y = g.geglu(v[0])?;
            weighted_sum(g, y, seed)
        })),
        ("rmsnorm", vec![r(&[4, 5]), r(&[5])], Box::new(move |g, v| {
            let y = g.rmsnorm(v[0], v[1], 1e-6)?;
            weighted_sum(g, y, seed)
        })),
        ("softmax_rows", vec![r(&[4, 5])], Box::new(move |g, v| {
            let y = g.softmax_rows(v[0], None)?;
            weighted_sum(g, y, seed)
        })),
        ("softmax_rows_banded", vec![r(&[5, 5])], Box::new(move |g, v| {
            let y = g.softmax_rows(v[0], Some(1))?;
            weighted_sum(g, y, seed)
        })),
        ("gather_rows", vec![r(&[4, 3])], Box::new(move |g, v| {
            let y = g.gather_rows(v[0], vec![2, 0, 2, 3, 1])?;
            weighted_sum(g, y, seed)
        })),
        ("scatter_add_rows", vec![r(&[5, 3])], Box::new(move |g, v| {
            let y = g.scatter_add_rows(v[0], vec![0, 2, 2, 1, 0], 3)?;
            weighted_sum(g, y, seed)
        })),
        ("mean", vec![a34.clone()], Box::new(move |g, v| {
            let y = g.mul(v[0], v[0])?;
            g.mean(y)
        })),
        ("sum", vec![a34.clone()], Box::new(move |g, v| {
            let y = g.mul(v[0], v[0])?;
            g.sum(y)
        })),
        ("concat_cols", vec![r(&[3, 2]), r(&[3, 4])], Box::new(move |g, v| {
            let y = g.concat_cols(&[v[0], v[1]])?;
            weighted_sum(g, y, seed)
        })),
        ("slice_cols", vec![r(&[3, 5])], Box::new(move |g, v| {
            let y = g.slice_cols(v[0], 1, 4)?;
            weighted_sum(g, y, seed)
        })),
        ("cross_entropy", vec![r(&[5, 4])], Box::new(move |g, v| {
            g.cross_entropy(v[0], vec![0, 3, -1, 2, 1])
        })),
    ];
    let abs_in = away_from_zero(&mut rng, &[3, 4]);
    cases.push(("abs", vec![abs_in], Box::new(move |g, v| {
        let y = g.abs(v[0])?;
        weighted_sum(g, y, seed)
    })));
    let base = random_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    let gap = away_from_zero(&mut rng, &[3, 4]);
    let other = Tensor::from_fn(&[3, 4], |i| base.data()[i] + gap.data()[i]);
    cases.push(("l1_mean", vec![base, other], Box::new(|g, v| g.l1_mean(v[0], v[1]))));
    let mut pairs = OffsetPairs::new(3, 5);
    for k in 0..3 {
        for _ in 0..4 {
            pairs.push(k, rng.random_range(0..5), rng.random_range(0..6));
        }
    }
    let pairs = Arc::new(pairs);
    let x = random_tensor(&mut rng, &[6, 2], -1.0, 1.0);
    let w = random_tensor(&mut rng, &[6, 4], -1.0, 1.0);
    cases.push(("offset_matmul", vec![x, w], Box::new(move |g, v| {
        let y = g.offset_matmul(v[0], v[1], pairs.clone())?;
        weighted_sum(g, y, seed)
    })));
    cases
}

/// Worst relative error over all primitives and seeds.
pub fn primitive_suite(seeds: u64) -> Result<(f64, &'static str)> {
    let mut worst = (0.0, "");
    for seed in 0..seeds {
        for (name, leaves, build) in primitive_cases(seed) {
            let rep = check_gradients(&leaves, 1e-5, 1e-4, |g, v| build(g, v))?;
            if rep.max_error() > worst.0 {
                worst = (rep.max_error(), name);
            }
        }
    }
    Ok(worst)
}

/// Predictor outputs on the masked rows of every level.
fn tiny_preds(g: &mut Graph, model: &HUNet, ps: &ParamSet, case: &TinyCase) -> Result<Vec<Var>> {
    let x = g.constant(case.input.clone());
    let enc = model.encode(g, ps, true, &case.hier, x, &case.mask)?;
    let dec = model.decode(g, ps, true, &case.hier, &enc, &case.mask)?;
    (0..dec.len())
        .map(|l| {
            let h = g.gather_rows(dec[l], case.mask.masked[l].clone())?;
            predict(g, ps, l, h)
        })
        .collect()
}

fn tiny_loss(model: &HUNet, ps: &ParamSet, case: &TinyCase, grads: bool) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let mut g = Graph::new();
    let preds = tiny_preds(&mut g, model, ps, case)?;
    let terms: Vec<LossTerm> = preds
        .iter()
        .zip(&case.targets)
        .enumerate()
        .map(|(level, (&pred, t))| LossTerm { level, pred, target: g.constant(t.clone()) })
        .collect();
    let (loss, _) = msm_loss(&mut g, &terms, &[1.0, 0.5])?;
    let value = g.value(loss).item();
    if !grads {
        return Ok((value, BTreeMap::new()));
    }
    let back = g.backward(loss)?;
    Ok((value, g.param_grads(&back)))
}

struct TinyCase {
    hier: msm::voxel::GridHierarchy,
    input: Tensor,
    mask: msm::views::MaskSpec,
    targets: Vec<Tensor>,
}

/// A random two-level scene with a nonempty mask. Targets sit between 0.5 and 1.5 away from the
/// initial predictions so no L1 residual crosses its kink within a difference step.
fn tiny_case(seed: u64, model: &HUNet, ps: &ParamSet) -> Result<TinyCase> {
    for attempt in 0.. {
        let cloud = random_cloud(seed * 1000 + attempt, 60, 1.2);
        let mut rng = rng_for(seed, "tiny-input", attempt);
        let attrs = random_tensor(&mut rng, &[cloud.len(), 2], -1.0, 1.0);
        let grid = voxelize(&cloud.positions, &attrs, &cloud.labels, 0.25)?;
        let hier = build_hierarchy(&grid, 2)?;
        let mask = make_mask(&hier, 0.5, seed + attempt)?;
        if mask.unmasked[0].is_empty() || mask.masked[0].is_empty() {
            continue;
        }
        let mut case = TinyCase { hier, input: grid.features.clone(), mask, targets: Vec::new() };
        let mut g = Graph::new();
        let preds = tiny_preds(&mut g, model, ps, &case)?;
        case.targets = preds
            .iter()
            .map(|&p| {
                let v = g.value(p);
                Tensor::from_fn(v.shape(), |i| {
                    let off = rng.random_range(0.5..1.5);
                    if rng.random_bool(0.5) {
                        v.data()[i] + off
                    } else {
                        v.data()[i] - off
                    }
                })
            })
            .collect();
        return Ok(case);
    }
    unreachable!()
}

/// Smallest gradient magnitude central differences resolve through the whole network at
/// `h = 1e-5`: a few ulps of the loss over `2h`. Smaller gradients are compared absolutely.
const RESOLUTION: f64 = 1e-6;

/// Worst relative error of a tiny encode → decode → predictor → loss pass against central
/// differences, probing up to six entries of every parameter.
pub fn end_to_end_suite(seeds: u64) -> Result<f64> {
    // eight channels keep every RMSNorm row well away from zero scale
    let model = HUNet::new(HUNetConfig {
        enc_channels: vec![8, 10],
        dec_channels: vec![8, 10],
        ..HUNetConfig::tiny()
    })?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut ps: ParamSet = model.init_params(seed);
        init_predictors(&model, &mut ps, seed);
        // random tokens and norm gains so nothing sits at a symmetric point
        let mut rng = rng_for(seed, "tiny-params", 0);
        let names: Vec<String> = ps.names().map(str::to_string).collect();
        for n in &names {
            if n.starts_with("token") || n.contains("norm") {
                let t = ps.get(n).unwrap();
                let shape = t.shape().to_vec();
                ps.insert(n.clone(), random_tensor(&mut rng, &shape, 0.5, 1.5));
            }
        }
        let case = tiny_case(seed, &model, &ps)?;
        let (_, grads) = tiny_loss(&model, &ps, &case, true)?;
        for n in &names {
            let numel = ps.get(n).unwrap().numel();
            let picks: Vec<usize> = if numel <= 6 {
                (0..numel).collect()
            } else {
                (0..6).map(|_| rng.random_range(0..numel)).collect()
            };
            for e in picks {
                let analytic = grads.get(n).map_or(0.0, |t| t.data()[e]);
                let mut p = ps.clone();
                let orig = p.get(n).unwrap().data()[e];
                p.get_mut(n).unwrap().data_mut()[e] = orig + h;
                let fp = tiny_loss(&model, &p, &case, false)?.0;
                p.get_mut(n).unwrap().data_mut()[e] = orig - h;
                let fm = tiny_loss(&model, &p, &case, false)?.0;
                let numeric = (fp - fm) / (2.0 * h);
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RESOLUTION);
                worst = worst.max(err);
            }
        }
    }
    Ok(worst)
}
