use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use msm::eval::{BenchFeatures, Benchmark, FeatureExtractor, Metric, NnOptions, ProbeConfig};
use msm::hunet::HUNet;
use msm::scene::{generate_dataset, split_indices, PointCloud, NUM_CLASSES};
use msm::train::{pretrain, PretrainConfig, PretrainOptions, TrainState};
use msm::ParamSet;

use crate::common::announce;

/// Synthetic benchmark: 80 scenes, 64 for pretraining and probe training, 16 for validation.
pub struct Desk {
    pub bench: Benchmark,
}

pub fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let data = generate_dataset(80, 7, 1).unwrap();
        let split = split_indices(80, 7);
        let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<PointCloud>>();
        Desk {
            bench: Benchmark {
                train: pick(&split.train),
                val: pick(&split.val),
                num_classes: NUM_CLASSES,
                probe: ProbeConfig::default(),
                superpoint_cell: 0.25,
                jobs: 1,
            },
        }
    })
}

/// Pretraining variants compared by the benchmark criteria.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    Masked,
    NoMask,
    LastLevel,
}

pub struct Run {
    pub state: TrainState,
    pub elapsed: Duration,
}

/// Desk configuration with the given schedule, seed and ablation flags.
pub fn config(variant: Variant, seed: u64, epochs: usize) -> PretrainConfig {
    let mut cfg = PretrainConfig::default();
    cfg.train.epochs = epochs;
    cfg.train.warmup_epochs = cfg.train.warmup_epochs.min(epochs - 1);
    cfg.train.seed = seed;
    cfg.train.no_mask = variant == Variant::NoMask;
    cfg.train.supervise_last_only = variant == Variant::LastLevel;
    cfg
}

/// Pretrains once per `(variant, seed, epochs)` and keeps the result for later criteria.
pub fn run(variant: Variant, seed: u64, epochs: usize) -> &'static Run {
    static RUNS: OnceLock<Mutex<BTreeMap<(Variant, u64, usize), &'static Run>>> = OnceLock::new();
    let runs = RUNS.get_or_init(Default::default);
    if let Some(r) = runs.lock().unwrap().get(&(variant, seed, epochs)) {
        return r;
    }
    let start = Instant::now();
    let cfg = config(variant, seed, epochs);
    let state = pretrain(&desk().bench.train, &cfg, &PretrainOptions::default()).unwrap();
    let r: &'static Run = Box::leak(Box::new(Run { state, elapsed: start.elapsed() }));
    announce(&format!(
        "  pretrained {variant:?} seed {seed} for {epochs} epochs in {:.0}s",
        r.elapsed.as_secs_f64()
    ));
    runs.lock().unwrap().insert((variant, seed, epochs), r);
    r
}

pub fn features(params: &ParamSet) -> BenchFeatures {
    let cfg = PretrainConfig::default();
    let model = HUNet::new(cfg.model).unwrap();
    let ex = FeatureExtractor::new(model, params.clone(), cfg.views.voxel_size);
    desk().bench.extract(&ex).unwrap()
}

pub fn random_params(seed: u64) -> ParamSet {
    let model = HUNet::new(PretrainConfig::default().model).unwrap();
    TrainState::new(&model, seed).student
}

pub const ALL_LEVELS: [usize; 4] = [0, 1, 2, 3];

/// Linear-probe validation mIoU in points (0–100).
pub fn linear(f: &BenchFeatures, levels: &[usize]) -> f64 {
    100.0 * desk().bench.linear(f, levels).unwrap().val_miou
}

pub fn nn(f: &BenchFeatures, metric: Metric) -> f64 {
    let opts = NnOptions { metric, ..NnOptions::default() };
    100.0 * desk().bench.nn(f, &ALL_LEVELS, &opts).unwrap()
}
