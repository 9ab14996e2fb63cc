use std::collections::{BTreeMap, HashSet};

use msm::eval::{average_precision, map50, miou, nearest, nn_probe, GtInstance, InstancePrediction, Metric, NnOptions};
use msm::rng::{rng_for, Rng};
use msm::train::{msm_loss, LossTerm};
use msm::views::{correspondence, crop};
use msm::voxel::{build_hierarchy, hilbert3, morton3, voxelize, CODE_BITS};
use msm::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::common::{random_cloud, random_tensor};

/// Passing cases out of the cases run, per oracle.
pub type Tally = (usize, usize);

pub fn loss(cases: u64) -> Tally {
    let mut ok = 0;
    for case in 0..cases {
        let mut rng = rng_for(case, "loss-case", 0);
        let levels = rng.random_range(1..5);
        let weights: Vec<f64> = (0..levels).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut g = Graph::new();
        let mut terms = Vec::new();
        let mut expect = 0.0;
        let mut per_level = vec![0.0; levels];
        for _ in 0..rng.random_range(1..7) {
            let level = rng.random_range(0..levels);
            let shape = [rng.random_range(1..9), rng.random_range(1..6)];
            let p = random_tensor(&mut rng, &shape, -2.0, 2.0);
            let t = random_tensor(&mut rng, &shape, -2.0, 2.0);
            let mean = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.numel() as f64;
            expect += weights[level] * mean;
            per_level[level] += mean;
            let (pred, target) = (g.constant(p), g.constant(t));
            terms.push(LossTerm { level, pred, target });
        }
        let (v, levels_out) = msm_loss(&mut g, &terms, &weights).unwrap();
        let close = (g.value(v).item() - expect).abs() <= 1e-10
            && levels_out.iter().zip(&per_level).all(|(a, b)| (a - b).abs() <= 1e-10);
        ok += usize::from(close);
    }
    (ok, cases as usize)
}

fn brute_distance(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Metric::L2 => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        Metric::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - dot / (na * nb)
            }
        }
    }
}

/// Lowest index among the minimizers, treating distances within 1e-12 as ties.
fn brute_nearest(bank: &Tensor, candidates: &[usize], q: &[f64], metric: Metric) -> Vec<usize> {
    let d: Vec<(usize, f64)> = candidates.iter().map(|&i| (i, brute_distance(metric, bank.row(i), q))).collect();
    let best = d.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    d.iter().filter(|x| x.1 <= best + 1e-12).map(|x| x.0).collect()
}

/// Small integer features make exact ties common; continuous ones exercise the general case.
fn nn_features(rng: &mut Rng, rows: usize, cols: usize, integer: bool) -> Tensor {
    Tensor::from_fn(&[rows, cols], |_| {
        if integer {
            f64::from(rng.random_range(-2..=2))
        } else {
            rng.random_range(-1.0..1.0)
        }
    })
}

/// `nearest` and tiled `nn_probe` against a brute-force scan, for each metric. When several
/// bank rows tie (within 1e-12) the result must be the lowest index of the tied set.
pub fn nearest_neighbor(cases: u64, metric: Metric) -> Tally {
    let mut ok = 0;
    for case in 0..cases {
        let mut rng = rng_for(case, "nn-case", metric as u64);
        let integer = case % 2 == 0;
        let d = rng.random_range(1..10);
        let n = rng.random_range(1..40);
        let bank = nn_features(&mut rng, n, d, integer);
        let mut candidates: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.8)).collect();
        if candidates.is_empty() {
            candidates.push(n - 1);
        }
        let q = nn_features(&mut rng, 1, d, integer);
        let got = nearest(&bank, &candidates, q.row(0), metric);
        let want = brute_nearest(&bank, &candidates, q.row(0), metric);
        let mut good = got == want[0];

        // label transfer with one superpoint per point, crossing query tile boundaries
        let labels: Vec<i32> = (0..n).map(|i| if candidates.contains(&i) { rng.random_range(0..5) } else { -1 }).collect();
        let nq = rng.random_range(1..120);
        let queries = nn_features(&mut rng, nq, d, integer);
        let opts = NnOptions { metric, normalize: false, jobs: 1 + case as usize % 3 };
        let sp_train: Vec<usize> = (0..n).collect();
        let sp_val: Vec<usize> = (0..nq).collect();
        let out = nn_probe(&bank, &labels, &sp_train, &queries, &sp_val, &opts).unwrap();
        for (r, &label) in out.iter().enumerate() {
            good &= label == labels[brute_nearest(&bank, &candidates, queries.row(r), metric)[0]];
        }
        ok += usize::from(good);
    }
    (ok, cases as usize)
}

pub fn mean_iou(cases: u64) -> Tally {
    let mut ok = 0;
    for case in 0..cases {
        let mut rng = rng_for(case, "miou-case", 0);
        let k = rng.random_range(1..8);
        let n = rng.random_range(1..200);
        let gt: Vec<i32> = (0..n).map(|_| rng.random_range(-1..k as i32)).collect();
        let pred: Vec<i32> = gt
            .iter()
            .map(|&g| if g >= 0 && rng.random_bool(0.6) { g } else { rng.random_range(0..k as i32) })
            .collect();
        let mut ious = Vec::new();
        let mut expect_per = Vec::new();
        for c in 0..k as i32 {
            let scored = |i: &usize| gt[*i] >= 0;
            let tp = (0..n).filter(scored).filter(|&i| pred[i] == c && gt[i] == c).count();
            let fp = (0..n).filter(scored).filter(|&i| pred[i] == c && gt[i] != c).count();
            let fn_ = (0..n).filter(scored).filter(|&i| pred[i] != c && gt[i] == c).count();
            let u = tp + fp + fn_;
            let iou = (u > 0).then(|| tp as f64 / u as f64);
            expect_per.push(iou);
            ious.extend(iou);
        }
        let expect = if ious.is_empty() { 0.0 } else { ious.iter().sum::<f64>() / ious.len() as f64 };
        let (per, m) = miou(&pred, &gt, k).unwrap();
        let same = per.len() == expect_per.len()
            && per.iter().zip(&expect_per).all(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-10,
                (None, None) => true,
                _ => false,
            });
        ok += usize::from(same && (m - expect).abs() <= 1e-10);
    }
    (ok, cases as usize)
}

/// Random ground truth over a few scenes and predictions derived from it by dropping and adding
/// points, relabeling, and pure noise.
fn instance_case(rng: &mut Rng) -> (Vec<InstancePrediction>, Vec<GtInstance>) {
    let mut gts = Vec::new();
    let mut preds = Vec::new();
    for scene in 0..rng.random_range(1..4) {
        let n = rng.random_range(4..60);
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(rng);
        let mut at = 0;
        while at < n {
            let len = rng.random_range(1..=(n - at).min(12));
            let mut points = rows[at..at + len].to_vec();
            points.sort_unstable();
            at += len;
            if rng.random_bool(0.2) {
                continue;
            }
            gts.push(GtInstance { scene, points, class: rng.random_range(0..3) });
        }
        for g in gts.iter().filter(|g| g.scene == scene) {
            for _ in 0..rng.random_range(0..3) {
                let mut p: Vec<usize> = g.points.iter().copied().filter(|_| rng.random_bool(0.7)).collect();
                for _ in 0..rng.random_range(0..4) {
                    p.push(rng.random_range(0..n));
                }
                p.sort_unstable();
                p.dedup();
                if p.is_empty() {
                    continue;
                }
                let class = if rng.random_bool(0.8) { g.class } else { rng.random_range(0..3) };
                preds.push(InstancePrediction { scene, points: p, class, confidence: rng.random_range(0.0..1.0) });
            }
        }
        for _ in 0..rng.random_range(0..3) {
            let mut p: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.2)).collect();
            if p.is_empty() {
                p.push(0);
            }
            p.sort_unstable();
            preds.push(InstancePrediction { scene, points: p, class: rng.random_range(0..3), confidence: rng.random_range(0.0..1.0) });
        }
    }
    (preds, gts)
}

fn brute_iou(a: &[usize], b: &[usize]) -> f64 {
    let sa: HashSet<usize> = a.iter().copied().collect();
    let sb: HashSet<usize> = b.iter().copied().collect();
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// AP as the mean over ground-truth instances of the best precision reached at or after the
/// rank where each one is recalled (zero for never-recalled ones).
fn brute_ap(preds: &[&InstancePrediction], gts: &[&GtInstance]) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let mut order: Vec<&InstancePrediction> = preds.to_vec();
    order.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap().then(a.scene.cmp(&b.scene)).then(a.points.cmp(&b.points)));
    let mut taken: HashSet<usize> = HashSet::new();
    let mut hit_ranks = Vec::new();
    let mut precisions = Vec::new();
    let mut hits = 0;
    for (rank, p) in order.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if g.scene != p.scene || taken.contains(&gi) {
                continue;
            }
            let iou = brute_iou(&p.points, &g.points);
            if iou >= 0.5 && best.is_none_or(|(b, _)| iou > b) {
                best = Some((iou, gi));
            }
        }
        if let Some((_, gi)) = best {
            taken.insert(gi);
            hits += 1;
            hit_ranks.push(rank);
        }
        precisions.push(hits as f64 / (rank + 1) as f64);
    }
    let total: f64 = hit_ranks
        .iter()
        .map(|&r| precisions[r..].iter().copied().fold(0.0, f64::max))
        .sum();
    Some(total / gts.len() as f64)
}

pub fn ap50(cases: u64) -> Tally {
    let mut ok = 0;
    for case in 0..cases {
        let mut rng = rng_for(case, "ap-case", 0);
        let (preds, gts) = instance_case(&mut rng);
        let mut expect: BTreeMap<i32, f64> = BTreeMap::new();
        let mut good = true;
        for class in 0..3 {
            let p: Vec<&InstancePrediction> = preds.iter().filter(|p| p.class == class).collect();
            let g: Vec<&GtInstance> = gts.iter().filter(|g| g.class == class).collect();
            let want = brute_ap(&p, &g);
            let got = average_precision(&p, &g);
            good &= match (got, want) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-10,
                (None, None) => true,
                _ => false,
            };
            if let Some(w) = want {
                expect.insert(class, w);
            }
        }
        let (per, mean) = map50(&preds, &gts);
        let want_mean = if expect.is_empty() { 0.0 } else { expect.values().sum::<f64>() / expect.len() as f64 };
        good &= per.len() == expect.len()
            && per.iter().zip(&expect).all(|(a, b)| a.0 == b.0 && (a.1 - b.1).abs() <= 1e-10)
            && (mean - want_mean).abs() <= 1e-10;
        ok += usize::from(good);
    }
    (ok, cases as usize)
}

/// Magic-number bit spreading: every input bit moves to position `3·b`.
fn spread(v: u32) -> u64 {
    let mut x = u64::from(v) & 0x1f_ffff;
    x = (x | x << 32) & 0x1f00000000ffff;
    x = (x | x << 16) & 0x1f0000ff0000ff;
    x = (x | x << 8) & 0x100f00f00f00f00f;
    x = (x | x << 4) & 0x10c30c30c30c30c3;
    (x | x << 2) & 0x1249249249249249
}

pub fn morton(cases: u64) -> Tally {
    let mut ok = 0;
    for case in 0..cases {
        let mut rng = rng_for(case, "morton-case", 0);
        let bits = rng.random_range(1..=CODE_BITS);
        let c = [0; 3].map(|_| rng.random_range(0..1u32 << bits));
        let want = spread(c[0]) | spread(c[1]) << 1 | spread(c[2]) << 2;
        ok += usize::from(morton3(c, bits) == want);
    }
    (ok, cases as usize)
}

/// Inverse of the transposed-Hilbert encoding: index bits back to axes.
fn hilbert_decode(h: u64, bits: u32) -> [u32; 3] {
    let mut x = [0u32; 3];
    for b in 0..bits {
        for (a, v) in x.iter_mut().enumerate() {
            let shift = 3 * (bits - 1 - b) + (2 - a as u32);
            *v |= (((h >> shift) & 1) as u32) << (bits - 1 - b);
        }
    }
    let n = 2u32 << (bits - 1);
    let t = x[2] >> 1;
    for i in (1..3).rev() {
        x[i] ^= x[i - 1];
    }
    x[0] ^= t;
    let mut q = 2;
    while q != n {
        let p = q - 1;
        for i in (0..3).rev() {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q <<= 1;
    }
    x
}

/// Random-point roundtrips through an independent decoder, plus exhaustive bijection and
/// face-adjacency of consecutive codes on small cubes.
pub fn hilbert(cases: u64) -> Tally {
    let mut ok = 0;
    let mut total = 0;
    for case in 0..cases {
        let mut rng = rng_for(case, "hilbert-case", 0);
        let bits = rng.random_range(1..=CODE_BITS);
        let c = [0; 3].map(|_| rng.random_range(0..1u32 << bits));
        let h = hilbert3(c, bits);
        ok += usize::from(h < 1u64 << (3 * bits) && hilbert_decode(h, bits) == c);
        total += 1;
    }
    for bits in 1..=4u32 {
        let side = 1u32 << bits;
        let mut cells = vec![[0u32; 3]; (side * side * side) as usize];
        let mut seen = vec![false; cells.len()];
        let mut good = true;
        for x in 0..side {
            for y in 0..side {
                for z in 0..side {
                    let h = hilbert3([x, y, z], bits) as usize;
                    good &= h < cells.len() && !seen[h];
                    if h < cells.len() {
                        seen[h] = true;
                        cells[h] = [x, y, z];
                    }
                }
            }
        }
        good &= cells.windows(2).all(|w| (0..3).map(|a| w[0][a].abs_diff(w[1][a])).sum::<u32>() == 1);
        ok += usize::from(good);
        total += 1;
    }
    (ok, total)
}

/// Mutual plurality from a dense overlap-count matrix.
fn brute_correspondence(h1: &msm::voxel::GridHierarchy, h2: &msm::voxel::GridHierarchy) -> Vec<Vec<(usize, usize)>> {
    (0..h1.num_levels())
        .map(|l| {
            let (g1, g2) = (&h1.levels[l], &h2.levels[l]);
            let mut counts = vec![vec![0usize; g2.len()]; g1.len()];
            for (p, r1) in g1.point_map.iter().enumerate() {
                if let (Some(a), Some(Some(b))) = (r1, g2.point_map.get(p)) {
                    counts[*a][*b] += 1;
                }
            }
            let argmax = |vals: Vec<usize>| -> Option<usize> {
                let m = *vals.iter().max()?;
                (m > 0).then(|| vals.iter().position(|&v| v == m).unwrap())
            };
            let row_best: Vec<Option<usize>> = (0..g1.len()).map(|a| argmax(counts[a].clone())).collect();
            let col_best: Vec<Option<usize>> =
                (0..g2.len()).map(|b| argmax((0..g1.len()).map(|a| counts[a][b]).collect())).collect();
            (0..g1.len())
                .filter_map(|a| row_best[a].filter(|&b| col_best[b] == Some(a)).map(|b| (a, b)))
                .collect()
        })
        .collect()
}

pub fn pairing(cases: u64) -> Tally {
    let mut ok = 0;
    for case in 0..cases {
        let mut rng = rng_for(case, "pair-case", 0);
        let cloud = random_cloud(case, rng.random_range(10..250), 2.0);
        let attrs = cloud.input_attributes().unwrap();
        let shift = [0; 3].map(|_| rng.random_range(-0.3..0.3));
        let scale = rng.random_range(0.8..1.2);
        let moved: Vec<[f64; 3]> = cloud
            .positions
            .iter()
            .map(|p| [0, 1, 2].map(|a| p[a] * scale + shift[a]))
            .collect();
        let voxel = rng.random_range(0.1..0.4);
        let g1 = voxelize(&cloud.positions, &attrs, &cloud.labels, voxel).unwrap();
        let g2 = voxelize(&moved, &attrs, &cloud.labels, voxel).unwrap();
        let budget = rng.random_range(1..cloud.len() + 1);
        let g1 = crop(&g1, budget, case).unwrap();
        let g2 = crop(&g2, budget, case + 1).unwrap();
        let levels = rng.random_range(2..5);
        let h1 = build_hierarchy(&g1, levels).unwrap();
        let h2 = build_hierarchy(&g2, levels).unwrap();
        ok += usize::from(correspondence(&h1, &h2) == brute_correspondence(&h1, &h2));
    }
    (ok, cases as usize)
}
