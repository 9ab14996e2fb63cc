use std::collections::HashSet;
use std::sync::Arc;

use msm::hunet::layers::{sparse_conv, windowed_attention, AttnWeights};
use msm::hunet::plan::conv_pairs;
use msm::hunet::{AttnOrder, HUNet, HUNetConfig};
use msm::rng::rng_for;
use msm::views::make_mask;
use msm::voxel::{offset_id, trilinear_sample, voxelize, Curve};
use msm::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::common::{random_cloud, random_hierarchy, random_tensor};

/// Paired encoder runs whose inputs differ only on masked finest voxels. Returns the number of
/// cases (out of `cases`) whose unmasked outputs were bitwise identical at every level.
pub fn no_leakage(cases: u64) -> usize {
    let model = HUNet::new(HUNetConfig {
        in_channels: 3,
        enc_channels: vec![6, 8, 10],
        dec_channels: vec![6, 8, 10],
        res_blocks: vec![1, 1, 1],
        attn_blocks: vec![0, 1, 1],
        window: 8,
        heads: 2,
        ff_ratio: 2,
        ..HUNetConfig::default()
    })
    .unwrap();
    let mut identical = 0;
    for case in 0..cases {
        let ps = model.init_params::<f64>(case);
        let hier = random_hierarchy(case, 400, 2.5, 0.2, 3);
        let mask = make_mask(&hier, 0.4, case).unwrap();
        let clean = hier.levels[0].features.clone();
        let mut rng = rng_for(case, "leak-noise", 0);
        let mut dirty = clean.clone();
        for &r in &mask.masked[0] {
            for v in dirty.row_mut(r) {
                *v = rng.random_range(-50.0..50.0);
            }
        }
        let run = |input: &Tensor| {
            let mut g = Graph::new();
            let x = g.constant(input.clone());
            let enc = model.encode(&mut g, &ps, false, &hier, x, &mask).unwrap();
            enc.iter().map(|&v| g.value(v).data().to_vec()).collect::<Vec<_>>()
        };
        let a = run(&clean);
        let b = run(&dirty);
        // control: touching an unmasked row must show up
        let mut touched = clean.clone();
        touched.row_mut(mask.unmasked[0][0])[0] += 1.0;
        let sensitive = run(&touched)[0] != a[0];
        let bitwise = a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
            });
        if bitwise && sensitive && !mask.masked[0].is_empty() {
            identical += 1;
        }
    }
    identical
}

/// Masked-ness agrees with the coarsest ancestor found by integer key arithmetic, and the
/// coarsest level masks exactly `⌈2K/5⌉` voxels at ratio 0.4. Returns the passing count.
pub fn mask_consistency(cases: u64) -> usize {
    let mut ok = 0;
    for case in 0..cases {
        let mut rng = rng_for(case, "mask-case", 0);
        let levels = rng.random_range(2..=5);
        let n = rng.random_range(20..600);
        let extent = rng.random_range(0.5..4.0);
        let hier = random_hierarchy(case, n, extent, 0.1, levels);
        let mask = make_mask(&hier, 0.4, case).unwrap();
        let top = levels - 1;
        let k = hier.levels[top].len();
        let top_masked: HashSet<usize> = mask.masked[top].iter().copied().collect();
        let mut good = top_masked.len() == (2 * k).div_ceil(5);
        for l in 0..levels {
            let grid = &hier.levels[l];
            let masked: HashSet<usize> = mask.masked[l].iter().copied().collect();
            let unmasked: HashSet<usize> = mask.unmasked[l].iter().copied().collect();
            good &= masked.len() + unmasked.len() == grid.len() && masked.is_disjoint(&unmasked);
            let factor = 1i32 << (top - l);
            for (r, key) in grid.keys.iter().enumerate() {
                let up = key.ijk.map(|c| c.div_euclid(factor));
                let anc = hier.levels[top].key_index[&up];
                good &= masked.contains(&r) == top_masked.contains(&anc);
                good &= mask.is_masked(l, r) == masked.contains(&r);
            }
        }
        if good {
            ok += 1;
        }
    }
    ok
}

/// Worst deviation from a constant field over `queries` trilinear samples on random grids.
/// Queries mix jittered source points (partial-corner cells) and uniform box positions.
pub fn partition_of_unity(queries: usize) -> f64 {
    let per_grid = 500;
    let mut worst = 0.0f64;
    for case in 0..queries.div_ceil(per_grid) as u64 {
        let mut rng = rng_for(case, "pou", 0);
        let extent = rng.random_range(0.5..3.0);
        let cloud = random_cloud(case, rng.random_range(5..300), extent);
        let voxel = rng.random_range(0.05..0.6);
        let attrs = cloud.input_attributes().unwrap();
        let grid = voxelize(&cloud.positions, &attrs, &cloud.labels, voxel).unwrap();
        let consts: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
        let field = Tensor::from_fn(&[grid.len(), 3], |i| consts[i % 3]);
        let qs: Vec<[f64; 3]> = (0..per_grid)
            .map(|i| {
                if i % 2 == 0 {
                    let p = cloud.positions[rng.random_range(0..cloud.len())];
                    p.map(|c| c + rng.random_range(-voxel..voxel))
                } else {
                    [0; 3].map(|_| rng.random_range(-voxel..extent + voxel))
                }
            })
            .collect();
        let out = trilinear_sample(&grid, &field, &qs).unwrap();
        for (i, v) in out.data().iter().enumerate() {
            worst = worst.max((v - consts[i % 3]).abs());
        }
    }
    worst
}

/// Dense multi-head attention: every token attends to every token.
fn dense_attention(x: &Tensor, qkv_w: &Tensor, qkv_b: &Tensor, proj_w: &Tensor, proj_b: &Tensor, heads: usize) -> Vec<Vec<f64>> {
    let n = x.rows();
    let c = x.cols();
    let d = c / heads;
    let affine = |inp: &[f64], w: &Tensor, b: &Tensor| -> Vec<f64> {
        (0..w.cols())
            .map(|j| b.data()[j] + inp.iter().enumerate().map(|(i, v)| v * w.data()[i * w.cols() + j]).sum::<f64>())
            .collect()
    };
    let qkv: Vec<Vec<f64>> = (0..n).map(|i| affine(x.row(i), qkv_w, qkv_b)).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut cat = vec![0.0; c];
        for h in 0..heads {
            let q = &qkv[i][h * d..(h + 1) * d];
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    let k = &qkv[j][c + h * d..c + (h + 1) * d];
                    q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt()
                })
                .collect();
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for j in 0..n {
                for t in 0..d {
                    cat[h * d + t] += e[j] / z * qkv[j][2 * c + h * d + t];
                }
            }
        }
        out.push(affine(&cat, proj_w, proj_b));
    }
    out
}

/// Worst gap between windowed attention with `window ≥ 2N − 1` and the dense oracle.
pub fn attention_equivalence(cases: u64) -> f64 {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = rng_for(case, "attn-case", 0);
        let n = rng.random_range(1..24);
        let heads = rng.random_range(1..=3);
        let c = heads * rng.random_range(1..=4);
        let mut keys = HashSet::new();
        while keys.len() < n {
            keys.insert([0; 3].map(|_| rng.random_range(-6..6)));
        }
        let mut keys: Vec<[i32; 3]> = keys.into_iter().collect();
        keys.sort_unstable();
        let curve = Curve::CYCLE[case as usize % 4];
        let order = AttnOrder::new(&keys, curve).unwrap();
        let mut r = |shape: &[usize]| random_tensor(&mut rng, shape, -1.0, 1.0);
        let (x, qw, qb, pw, pb) = (r(&[n, c]), r(&[c, 3 * c]), r(&[3 * c]), r(&[c, c]), r(&[c]));
        let window = 2 * n - 1 + case as usize % 3;
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let weights = AttnWeights {
            qkv_w: g.constant(qw.clone()),
            qkv_b: g.constant(qb.clone()),
            proj_w: g.constant(pw.clone()),
            proj_b: g.constant(pb.clone()),
        };
        let y = windowed_attention(&mut g, xv, &weights, &order, window, heads).unwrap();
        let oracle = dense_attention(&x, &qw, &qb, &pw, &pb, heads);
        for (i, row) in oracle.iter().enumerate() {
            for (a, b) in g.value(y).row(i).iter().zip(row) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// Worst gap between the sparse convolution and a dense 3×3×3 convolution over a zero-padded
/// occupancy grid. Even cases fully occupy a block, odd cases occupy it at random.
pub fn conv_equivalence(cases: u64) -> f64 {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut rng = rng_for(case, "conv-case", 0);
        let side = rng.random_range(2..6) as i32;
        let mut keys: Vec<[i32; 3]> = Vec::new();
        for x in 0..side {
            for y in 0..side {
                for z in 0..side {
                    if case % 2 == 0 || rng.random_bool(0.5) {
                        keys.push([x, y, z]);
                    }
                }
            }
        }
        if keys.is_empty() {
            keys.push([0, 0, 0]);
        }
        keys.shuffle(&mut rng);
        let (cin, cout) = (rng.random_range(1..4), rng.random_range(1..4));
        let x = random_tensor(&mut rng, &[keys.len(), cin], -1.0, 1.0);
        let w = random_tensor(&mut rng, &[27 * cin, cout], -1.0, 1.0);
        let b = random_tensor(&mut rng, &[cout], -1.0, 1.0);
        let s = side as usize + 2;
        let mut dense = vec![0.0; s * s * s * cin];
        let at = |p: [i32; 3]| ((p[0] + 1) as usize * s + (p[1] + 1) as usize) * s + (p[2] + 1) as usize;
        for (r, k) in keys.iter().enumerate() {
            dense[at(*k) * cin..(at(*k) + 1) * cin].copy_from_slice(x.row(r));
        }
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let pairs = Arc::new(conv_pairs(&keys));
        let y = sparse_conv(&mut g, xv, wv, Some(bv), &pairs).unwrap();
        for (r, k) in keys.iter().enumerate() {
            for o in 0..cout {
                let mut acc = b.data()[o];
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            let tap = offset_id([dx, dy, dz]) as usize;
                            let p = at([k[0] + dx, k[1] + dy, k[2] + dz]);
                            for i in 0..cin {
                                acc += dense[p * cin + i] * w.data()[(tap * cin + i) * cout + o];
                            }
                        }
                    }
                }
                worst = worst.max((g.value(y).row(r)[o] - acc).abs());
            }
        }
    }
    worst
}
