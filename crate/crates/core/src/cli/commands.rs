use std::path::{Path, PathBuf};

use msm::eval::{
    instance_probe, limited_annotation_split, linear_probe, miou, nn_probe, pca_colors, BenchFeatures, Benchmark,
    FeatureExtractor, InstanceScene, LimitedMode, Metric, NnOptions, SemanticSet,
};
use msm::hunet::HUNet;
use msm::jobs::par_map;
use msm::scene::{
    generate_dataset, is_thing, split_indices, write_feature_dump, write_ply, FeatureDump, PointCloud, CLASS_NAMES,
    NUM_CLASSES,
};
use msm::train::{pretrain as run_pretrain, PretrainOptions};
use msm::{Error, ParamSet, Result, Tensor};

use super::config::RunConfig;
use super::data::{load_dataset, load_dumps, load_scenes, MANIFEST};
use super::report::Report;
use super::Ablation;
use super::Task;

pub fn gen_data(out: &Path, scenes: usize, seed: u64, jobs: usize) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let clouds = generate_dataset(scenes, seed, jobs)?;
    let split = split_indices(scenes, seed);
    par_map(jobs, &clouds, |_, c| write_ply(c, out.join(format!("{}.ply", c.scene_id))))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = String::new();
    for (i, c) in clouds.iter().enumerate() {
        let split = if split.val.binary_search(&i).is_ok() { "val" } else { "train" };
        manifest.push_str(&format!("{}.ply\t{split}\n", c.scene_id));
    }
    std::fs::write(out.join(MANIFEST), manifest)?;
    eprintln!("wrote {scenes} scenes to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn pretrain(
    cfg: &RunConfig,
    data: &Path,
    out: &Path,
    metrics: Option<PathBuf>,
    resume: bool,
    stop_after: Option<usize>,
    verbose: bool,
    jobs: usize,
) -> Result<()> {
    let (train, _) = load_dataset(data, jobs)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let opts = PretrainOptions {
        checkpoint: Some(out.to_path_buf()),
        metrics: Some(metrics.unwrap_or_else(|| out.with_extension("tsv"))),
        resume,
        stop_after,
        jobs,
        verbose,
    };
    let state = run_pretrain(&train, &cfg.pretrain_config(), &opts)?;
    if let Some(last) = state.log.last() {
        eprintln!("epoch {} loss {:.6}", last.epoch, last.loss);
    }
    Ok(())
}

fn parse_levels(spec: &str, num_levels: usize) -> Result<Vec<usize>> {
    if spec.trim() == "all" {
        return Ok((0..num_levels).collect());
    }
    let mut levels = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&l| l < num_levels)
                .ok_or_else(|| Error::Config(format!("bad level '{s}' (model has {num_levels})")))
        })
        .collect::<Result<Vec<_>>>()?;
    levels.sort_unstable();
    levels.dedup();
    Ok(levels)
}

fn extractor(cfg: &RunConfig, ckpt: &Path) -> Result<FeatureExtractor> {
    FeatureExtractor::from_checkpoint(ckpt, &cfg.probe.section, None)
}

pub fn features(cfg: &RunConfig, ckpt: &Path, data: &Path, levels: &str, out: &Path, jobs: usize) -> Result<()> {
    let ex = extractor(cfg, ckpt)?;
    let levels = parse_levels(levels, ex.model.num_levels())?;
    let (train, val) = load_dataset(data, jobs)?;
    for (split, clouds) in [("train", &train), ("val", &val)] {
        let dir = out.join(split);
        std::fs::create_dir_all(&dir)?;
        par_map(jobs, clouds, |_, c| -> Result<()> {
            let f = ex.extract(c, &levels)?;
            let dump = FeatureDump::new(
                f.widths.iter().map(|&w| w as u32).collect(),
                f.data.data().iter().map(|&v| v as f32).collect(),
                c.labels.clone(),
            )?;
            write_feature_dump(&dump, dir.join(format!("{}.msmf", c.scene_id)))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    }
    eprintln!("wrote {} + {} dumps to {}", train.len(), val.len(), out.display());
    Ok(())
}

struct DumpSet {
    names: Vec<String>,
    features: Vec<Tensor>,
    labels: Vec<Vec<i32>>,
}

fn read_dumps(dir: &Path, jobs: usize) -> Result<DumpSet> {
    let dumps = load_dumps(dir, jobs)?;
    let mut set = DumpSet { names: vec![], features: vec![], labels: vec![] };
    for (name, d) in dumps {
        let x = Tensor::new(
            vec![d.num_points as usize, d.width()],
            d.payload.iter().map(|&v| f64::from(v)).collect(),
        )?;
        set.names.push(name);
        set.features.push(x);
        set.labels.push(d.labels);
    }
    Ok(set)
}

fn scenes_for(dir: Option<&Path>, set: &DumpSet, task: &str, jobs: usize) -> Result<Vec<PointCloud>> {
    let dir = dir.ok_or_else(|| Error::Config(format!("--scenes is required for the {task} task")))?;
    let clouds = load_scenes(dir, &set.names, jobs)?;
    for (c, x) in clouds.iter().zip(&set.features) {
        if c.len() != x.rows() {
            return Err(Error::Format(format!("scene '{}' has {} points, its dump {}", c.scene_id, c.len(), x.rows())));
        }
    }
    Ok(clouds)
}

fn push_iou(report: &mut Report, task: &str, iou: &[Option<f64>]) {
    for (c, v) in iou.iter().enumerate() {
        if let Some(v) = v {
            report.push(task, "val", &format!("iou.{}", CLASS_NAMES.get(c).copied().unwrap_or("?")), *v);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn probe(
    cfg: &RunConfig,
    task: Task,
    train_dir: &Path,
    val_dir: &Path,
    scenes: Option<&Path>,
    limited: Option<LimitedMode>,
    out: Option<&Path>,
    jobs: usize,
) -> Result<()> {
    let train = read_dumps(train_dir, jobs)?;
    let val = read_dumps(val_dir, jobs)?;
    let train_labels = match limited {
        Some(mode) => limited_annotation_split(&train.labels, mode, cfg.train.seed)?,
        None => train.labels.clone(),
    };
    let mut report = Report::default();
    let name = match task {
        Task::Linear => "linear",
        Task::Nn => "nn",
        Task::Instance => "instance",
    };
    let labeled = train_labels.iter().flatten().filter(|&&l| l >= 0).count();
    let labeled_scenes = train_labels.iter().filter(|s| s.iter().any(|&l| l >= 0)).count();
    report.push(name, "train", "labeled_points", labeled as f64);
    report.push(name, "train", "labeled_scenes", labeled_scenes as f64);
    match task {
        Task::Linear => {
            let x = msm::eval::stack_rows(&train.features)?;
            let vx = msm::eval::stack_rows(&val.features)?;
            let y: Vec<i32> = train_labels.concat();
            let vy: Vec<i32> = val.labels.concat();
            let p = linear_probe(&x, &y, &vx, &vy, NUM_CLASSES, &cfg.probe_config())?;
            report.push(name, "val", "miou", p.val_miou);
            report.push(name, "val", "best_epoch", p.best_epoch as f64);
            push_iou(&mut report, name, &p.val_iou);
        }
        Task::Nn => {
            let tc = scenes_for(scenes, &train, name, jobs)?;
            let vc = scenes_for(scenes, &val, name, jobs)?;
            let cell = cfg.probe.superpoint_cell;
            let a = SemanticSet::build(&train.features, &tc, Some(&train_labels), cell)?;
            let b = SemanticSet::build(&val.features, &vc, None, cell)?;
            let pred = nn_probe(&a.x, &a.labels, &a.superpoints, &b.x, &b.superpoints, &cfg.nn_options(jobs))?;
            let (iou, m) = miou(&pred, &b.labels, NUM_CLASSES)?;
            report.push(name, "val", &format!("miou.{}", cfg.probe.metric.name()), m);
            push_iou(&mut report, name, &iou);
        }
        Task::Instance => {
            let tc = scenes_for(scenes, &train, name, jobs)?;
            let vc = scenes_for(scenes, &val, name, jobs)?;
            let pack = |set: &DumpSet, clouds: &[PointCloud], labels: &[Vec<i32>]| -> Vec<InstanceScene> {
                set.features
                    .iter()
                    .zip(clouds)
                    .zip(labels)
                    .map(|((x, c), l)| InstanceScene {
                        features: x.clone(),
                        positions: c.positions.clone(),
                        labels: l.clone(),
                        instance_ids: c.instance_ids.clone(),
                    })
                    .collect()
            };
            let p = instance_probe(
                &pack(&train, &tc, &train_labels),
                &pack(&val, &vc, &val.labels),
                NUM_CLASSES,
                is_thing,
                &cfg.instance_config(),
            )?;
            report.push(name, "val", "map50", p.map50);
            report.push(name, "val", "instances", p.predictions.len() as f64);
            for (c, ap) in &p.per_class_ap {
                report.push(name, "val", &format!("ap50.{}", CLASS_NAMES.get(*c as usize).copied().unwrap_or("?")), *ap);
            }
        }
    }
    report.emit(out)
}

pub fn viz_pca(cfg: &RunConfig, ckpt: &Path, scene: &Path, out: &Path, levels: &str) -> Result<()> {
    let ex = extractor(cfg, ckpt)?;
    let levels = parse_levels(levels, ex.model.num_levels())?;
    let mut cloud = msm::scene::read_ply(scene)?;
    let f = ex.extract(&cloud, &levels)?;
    cloud.colors = pca_colors(&f.data)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_ply(&cloud, out)?;
    eprintln!("wrote {} colored points to {}", cloud.len(), out.display());
    Ok(())
}

fn section_params(cfg: &RunConfig, student: ParamSet, teacher: ParamSet) -> ParamSet {
    if cfg.probe.section == "teacher" {
        teacher
    } else {
        student
    }
}

/// Pretrains with `cfg` in memory and returns the extractor for the configured section.
fn pretrained_extractor(cfg: &RunConfig, train: &[PointCloud], jobs: usize) -> Result<FeatureExtractor> {
    let pc = cfg.pretrain_config();
    let state = run_pretrain(train, &pc, &PretrainOptions { jobs, ..PretrainOptions::default() })?;
    let model = HUNet::new(pc.model.clone())?;
    Ok(FeatureExtractor::new(model, section_params(cfg, state.student, state.teacher), pc.views.voxel_size))
}

pub fn ablate(
    cfg: &RunConfig,
    which: Ablation,
    data: &Path,
    ckpt: Option<&Path>,
    out: Option<&Path>,
    jobs: usize,
) -> Result<()> {
    let (train, val) = load_dataset(data, jobs)?;
    let bench = Benchmark {
        train: train.clone(),
        val,
        num_classes: NUM_CLASSES,
        probe: cfg.probe_config(),
        superpoint_cell: cfg.probe.superpoint_cell,
        jobs,
    };
    let mut report = Report::default();
    let variants: Vec<(String, RunConfig)> = match which {
        Ablation::MaskRatio => (2..=7)
            .map(|i| {
                let mut c = cfg.clone();
                c.mask.ratio = i as f64 / 10.0;
                (format!("{:.1}", c.mask.ratio), c)
            })
            .collect(),
        Ablation::Masking => {
            let mut off = cfg.clone();
            off.train.no_mask = true;
            vec![("mask".into(), cfg.clone()), ("no-mask".into(), off)]
        }
        Ablation::Supervision => {
            let mut last = cfg.clone();
            last.train.supervise_last_only = true;
            vec![("all".into(), cfg.clone()), ("last".into(), last)]
        }
        Ablation::Strategy => {
            let mut td = cfg.clone();
            td.train.topdown_mask = true;
            vec![("bottom-up".into(), cfg.clone()), ("top-down".into(), td)]
        }
        Ablation::Layers | Ablation::NnMetric => vec![],
    };
    let tag = match which {
        Ablation::MaskRatio => "mask-ratio",
        Ablation::Masking => "masking",
        Ablation::Supervision => "supervision",
        Ablation::Strategy => "strategy",
        Ablation::Layers => "layers",
        Ablation::NnMetric => "nn-metric",
    };
    if !variants.is_empty() {
        for (name, c) in variants {
            let ex = pretrained_extractor(&c, &train, jobs)?;
            let f = bench.extract(&ex)?;
            let all: Vec<usize> = (0..ex.model.num_levels()).collect();
            report.push(tag, &name, "miou", bench.linear(&f, &all)?.val_miou);
        }
        return report.emit(out);
    }
    let ex = match ckpt {
        Some(p) => extractor(cfg, p)?,
        None => pretrained_extractor(cfg, &train, jobs)?,
    };
    let f: BenchFeatures = bench.extract(&ex)?;
    let n = ex.model.num_levels();
    let all: Vec<usize> = (0..n).collect();
    if which == Ablation::Layers {
        report.push(tag, "all", "miou", bench.linear(&f, &all)?.val_miou);
        for l in 0..n {
            report.push(tag, &format!("alone.{l}"), "miou", bench.linear(&f, &[l])?.val_miou);
        }
        for l in 0..n {
            let rest: Vec<usize> = all.iter().copied().filter(|&k| k != l).collect();
            report.push(tag, &format!("remove.{l}"), "miou", bench.linear(&f, &rest)?.val_miou);
        }
    } else {
        for m in Metric::ALL {
            let opts = NnOptions { metric: m, ..cfg.nn_options(jobs) };
            report.push(tag, m.name(), "miou", bench.nn(&f, &all, &opts)?);
        }
    }
    report.emit(out)
}
