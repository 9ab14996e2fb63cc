use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{Graph, ParamSet, Tensor, Var};
use crate::hunet::{load_checkpoint, save_checkpoint, Checkpoint, HUNet, HUNetConfig};
use crate::jobs::par_map;
use crate::rng::{derive_seed, rng_for};
use crate::scene::PointCloud;
use crate::views::{build_view_pair, MaskSpec, ViewConfig, ViewPair};

use super::optim::{
    adamw_step, collapse_metric, ema_update, lr_schedule, momentum_schedule, AdamState, AdamWConfig,
};

/// Self-supervised schedule and ablation switches (`train.*` config keys).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Scenes per optimizer step.
    pub batch_size: usize,
    pub momentum_start: f64,
    pub momentum_end: f64,
    pub seed: u64,
    /// Per-level loss weights, finest first; empty means uniform.
    pub level_weights: Vec<f64>,
    /// Mask tokens replace masked inputs before the encoder instead of entering the decoder.
    pub topdown_mask: bool,
    /// Supervise the finest decoder level only.
    pub supervise_last_only: bool,
    /// Students see unmasked crops; every matched voxel is supervised.
    pub no_mask: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            warmup_epochs: 2,
            base_lr: 0.0015,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.95,
            batch_size: 2,
            momentum_start: 0.996,
            momentum_end: 1.0,
            seed: 0,
            level_weights: Vec::new(),
            topdown_mask: false,
            supervise_last_only: false,
            no_mask: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_levels: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("train.epochs and train.batch_size must be >= 1".into()));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::Config("train.warmup_epochs must be below train.epochs".into()));
        }
        for m in [self.momentum_start, self.momentum_end] {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::Config(format!("teacher momentum {m} outside [0, 1]")));
            }
        }
        if !(self.base_lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("train.base_lr and train.weight_decay must be >= 0".into()));
        }
        if !self.level_weights.is_empty() && self.level_weights.len() != num_levels {
            return Err(Error::Config(format!(
                "train.level_weights has {} entries, model has {num_levels} levels",
                self.level_weights.len()
            )));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }

    fn weights(&self, num_levels: usize) -> Vec<f64> {
        if self.level_weights.is_empty() {
            vec![1.0; num_levels]
        } else {
            self.level_weights.clone()
        }
    }

    fn levels_used(&self, num_levels: usize) -> Vec<usize> {
        if self.supervise_last_only {
            vec![0]
        } else {
            (0..num_levels).collect()
        }
    }
}

/// Everything a pretraining run depends on.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub model: HUNetConfig,
    pub views: ViewConfig,
    pub train: TrainConfig,
}

/// Adds the per-level two-layer predictor heads (`pred.{l}.*`) to a parameter set.
pub fn init_predictors(model: &HUNet, params: &mut ParamSet<f64>, seed: u64) {
    let mut rng = rng_for(seed, "predictor-init", 0);
    for (l, &w) in model.config.dec_channels.iter().enumerate() {
        for (name, cin, cout) in [("fc1", w, 2 * w), ("fc2", 2 * w, w)] {
            let bound = (6.0 / cin as f64).sqrt();
            params.insert(
                format!("pred.{l}.{name}.w"),
                Tensor::from_fn(&[cin, cout], |_| rng.random_range(-bound..bound)),
            );
            params.insert(format!("pred.{l}.{name}.b"), Tensor::zeros(&[cout]));
        }
    }
}

/// Predictor head of level `l`: linear, GELU, linear.
pub fn predict(g: &mut Graph<f64>, params: &ParamSet<f64>, level: usize, x: Var) -> Result<Var> {
    let w1 = g.param(params, &format!("pred.{level}.fc1.w"), true)?;
    let b1 = g.param(params, &format!("pred.{level}.fc1.b"), true)?;
    let w2 = g.param(params, &format!("pred.{level}.fc2.w"), true)?;
    let b2 = g.param(params, &format!("pred.{level}.fc2.b"), true)?;
    let h = g.matmul(x, w1)?;
    let h = g.add_bias(h, b1)?;
    let h = g.gelu(h)?;
    let h = g.matmul(h, w2)?;
    g.add_bias(h, b2)
}

/// One reconstruction direction at one level: predictions against detached teacher targets.
#[derive(Clone, Copy, Debug)]
pub struct LossTerm {
    pub level: usize,
    pub pred: Var,
    pub target: Var,
}

/// `Σ_level weight · Σ_direction mean|pred − target|`. Also returns the unweighted per-level
/// sums. Fails when no term is present.
pub fn msm_loss(g: &mut Graph<f64>, terms: &[LossTerm], weights: &[f64]) -> Result<(Var, Vec<f64>)> {
    if terms.is_empty() {
        return Err(Error::DegenerateBatch("no masked voxel has a cross-view match".into()));
    }
    let mut per_level = vec![0.0; weights.len()];
    let mut total: Option<Var> = None;
    for t in terms {
        let d = g.l1_mean(t.pred, t.target)?;
        per_level[t.level] += g.value(d).item();
        let d = g.scale(d, weights[t.level])?;
        total = Some(match total {
            None => d,
            Some(acc) => g.add(acc, d)?,
        });
    }
    Ok((total.expect("nonempty"), per_level))
}

/// Student and teacher parameters, optimizer moments and progress.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub student: ParamSet<f64>,
    pub teacher: ParamSet<f64>,
    pub adam: AdamState<f64>,
    pub step: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub log: Vec<EpochMetrics>,
}

impl TrainState {
    /// Fresh student with predictors; the teacher starts as an exact copy.
    pub fn new(model: &HUNet, seed: u64) -> Self {
        let mut student = model.init_params::<f64>(derive_seed(seed, "model", 0));
        init_predictors(model, &mut student, seed);
        Self {
            teacher: student.clone(),
            adam: AdamState::zeros_like(&student),
            student,
            step: 0,
            epoch: 0,
            log: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub loss: f64,
    pub level_loss: Vec<f64>,
    pub lr: f64,
    pub momentum: f64,
    pub feature_std: Vec<f64>,
    pub scenes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub level_loss: Vec<f64>,
    pub lr: f64,
    pub momentum: f64,
    pub feature_std: Vec<f64>,
    pub steps: usize,
}

/// Step-count bookkeeping shared by the schedules.
#[derive(Clone, Copy, Debug)]
pub struct Schedule {
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl Schedule {
    pub fn new(cfg: &TrainConfig, scenes: usize) -> Self {
        let per_epoch = scenes.div_ceil(cfg.batch_size).max(1) as u64;
        Self {
            warmup_steps: per_epoch * cfg.warmup_epochs as u64,
            total_steps: per_epoch * cfg.epochs as u64,
        }
    }
}

struct SceneOut {
    loss: f64,
    level_loss: Vec<f64>,
    feature_std: Vec<f64>,
    grads: BTreeMap<String, Tensor<f64>>,
}

fn scene_pass(
    model: &HUNet,
    cfg: &TrainConfig,
    student: &ParamSet<f64>,
    teacher: &ParamSet<f64>,
    vp: &ViewPair,
) -> Result<SceneOut> {
    let n = model.num_levels();
    let targets = [model.infer(teacher, &vp.teachers[0])?, model.infer(teacher, &vp.teachers[1])?];
    let feature_std = (0..n)
        .map(|l| (collapse_metric(&targets[0][l]) + collapse_metric(&targets[1][l])) / 2.0)
        .collect();
    let mut g = Graph::new();
    let mut terms = Vec::new();
    for v in 0..2 {
        let s = &vp.students[v];
        let partners = vp.partner_maps(v);
        let x = model.input(&mut g, &s.hier)?;
        let empty;
        let mask = if cfg.no_mask {
            empty = MaskSpec::empty(&s.hier);
            &empty
        } else {
            &s.mask
        };
        let dec = if cfg.topdown_mask && !cfg.no_mask {
            model.forward_topdown(&mut g, student, true, &s.hier, x, mask)?
        } else {
            let enc = model.encode(&mut g, student, true, &s.hier, x, mask)?;
            model.decode(&mut g, student, true, &s.hier, &enc, mask)?
        };
        for l in cfg.levels_used(n) {
            let candidates: Vec<usize> = if cfg.no_mask {
                (0..s.hier.levels[l].len()).collect()
            } else {
                mask.masked[l].clone()
            };
            let (rows, other): (Vec<usize>, Vec<usize>) = candidates
                .into_iter()
                .filter_map(|r| partners[l][s.to_full[l][r]].map(|p| (r, p)))
                .unzip();
            if rows.is_empty() {
                continue;
            }
            let h = g.gather_rows(dec[l], rows)?;
            let pred = predict(&mut g, student, l, h)?;
            let target = g.constant(targets[1 - v][l].select_rows(&other)?);
            terms.push(LossTerm { level: l, pred, target });
        }
    }
    let (loss, level_loss) = msm_loss(&mut g, &terms, &cfg.weights(n))?;
    let grads = g.backward(loss)?;
    Ok(SceneOut {
        loss: g.value(loss).item(),
        level_loss,
        feature_std,
        grads: g.param_grads(&grads),
    })
}

/// One optimizer step over a batch of view pairs. Scenes without any supervised voxel are
/// skipped; the step fails with `DegenerateBatch` if none remain. On any error the state is
/// left untouched.
pub fn train_step(
    model: &HUNet,
    state: &mut TrainState,
    batch: &[ViewPair],
    cfg: &TrainConfig,
    schedule: Schedule,
    jobs: usize,
) -> Result<StepMetrics> {
    if batch.is_empty() {
        return Err(Error::DegenerateBatch("empty batch".into()));
    }
    let lr = lr_schedule(state.step, schedule.warmup_steps, schedule.total_steps, cfg.base_lr);
    let momentum = momentum_schedule(
        state.step,
        schedule.total_steps,
        cfg.momentum_start,
        cfg.momentum_end,
    );
    let results = par_map(jobs, batch, |_, vp| {
        scene_pass(model, cfg, &state.student, &state.teacher, vp)
    });
    let mut outs = Vec::new();
    for r in results {
        match r {
            Ok(o) => outs.push(o),
            Err(Error::DegenerateBatch(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if outs.is_empty() {
        return Err(Error::DegenerateBatch(
            "no scene in the batch has a supervised voxel".into(),
        ));
    }
    if outs.iter().any(|o| !o.loss.is_finite() || !o.grads.values().all(Tensor::all_finite)) {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    let k = outs.len() as f64;
    let mut student = state.student.clone();
    student.zero_grads();
    for o in &outs {
        student.accumulate_grads(&o.grads, 1.0 / k)?;
    }
    let mut adam = state.adam.clone();
    adamw_step(&mut student, &mut adam, lr, &cfg.adamw(), HUNet::is_weight_matrix)?;
    if !student.all_finite() {
        return Err(Error::Numeric("parameters became non-finite".into()));
    }
    ema_update(&mut state.teacher, &student, momentum)?;
    state.student = student;
    state.adam = adam;
    state.step += 1;
    let n = model.num_levels();
    let avg = |f: &dyn Fn(&SceneOut) -> &Vec<f64>| -> Vec<f64> {
        (0..n).map(|l| outs.iter().map(|o| f(o)[l]).sum::<f64>() / k).collect()
    };
    Ok(StepMetrics {
        loss: outs.iter().map(|o| o.loss).sum::<f64>() / k,
        level_loss: avg(&|o| &o.level_loss),
        lr,
        momentum,
        feature_std: avg(&|o| &o.feature_std),
        scenes: outs.len(),
    })
}

/// Files and runtime knobs of a pretraining run.
#[derive(Clone, Debug, Default)]
pub struct PretrainOptions {
    /// Written after every epoch; resumed from when `resume` is set and it exists.
    pub checkpoint: Option<PathBuf>,
    /// Tab-separated per-epoch metrics.
    pub metrics: Option<PathBuf>,
    pub resume: bool,
    /// Stop once this many epochs are complete.
    pub stop_after: Option<usize>,
    pub jobs: usize,
    pub verbose: bool,
}

const VIEW_RETRIES: u64 = 8;

/// View pair for one scene visit; degenerate crops are redrawn a few times.
pub fn scene_views(cloud: &PointCloud, views: &ViewConfig, seed: u64) -> Result<ViewPair> {
    let mut last = None;
    for attempt in 0..VIEW_RETRIES {
        match build_view_pair(cloud, views, derive_seed(seed, "attempt", attempt)) {
            Ok(vp) => return Ok(vp),
            Err(e @ Error::DegenerateView(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn meta(cfg: &PretrainConfig, state: &TrainState) -> Result<serde_json::Value> {
    Ok(serde_json::json!({
        "epoch": state.epoch,
        "step": state.step,
        "adam_t": state.adam.t,
        "views": cfg.views,
        "train": cfg.train,
        "log": state.log,
    }))
}

/// Checkpoint sections: `student`, `teacher`, `adam.m`, `adam.v`.
pub fn save_state(path: &Path, cfg: &PretrainConfig, state: &TrainState) -> Result<()> {
    let sections = BTreeMap::from([
        ("student".to_string(), state.student.clone()),
        ("teacher".to_string(), state.teacher.clone()),
        ("adam.m".to_string(), state.adam.m.clone()),
        ("adam.v".to_string(), state.adam.v.clone()),
    ]);
    save_checkpoint(
        path,
        &Checkpoint {
            config: cfg.model.clone(),
            meta: meta(cfg, state)?,
            sections,
        },
    )
}

pub fn load_state(path: &Path, cfg: &PretrainConfig) -> Result<TrainState> {
    let mut ck = load_checkpoint(path, Some(&cfg.model))?;
    let bad = |what: &str| Error::Checkpoint(format!("checkpoint {what} is missing or malformed"));
    let stored_train: TrainConfig =
        serde_json::from_value(ck.meta["train"].clone()).map_err(|_| bad("train config"))?;
    let stored_views: ViewConfig =
        serde_json::from_value(ck.meta["views"].clone()).map_err(|_| bad("view config"))?;
    if stored_train != cfg.train || stored_views != cfg.views {
        return Err(Error::Checkpoint(
            "checkpoint was written with a different training configuration".into(),
        ));
    }
    let mut take = |name: &str| ck.sections.remove(name).ok_or_else(|| bad(name));
    let (student, teacher, m, v) = (take("student")?, take("teacher")?, take("adam.m")?, take("adam.v")?);
    let num = |k: &str| ck.meta[k].as_u64().ok_or_else(|| bad(k));
    Ok(TrainState {
        student,
        teacher,
        adam: AdamState { m, v, t: num("adam_t")? },
        step: num("step")?,
        epoch: num("epoch")? as usize,
        log: serde_json::from_value(ck.meta["log"].clone()).map_err(|_| bad("metric log"))?,
    })
}

/// Tab-separated metrics: a comment line with the ablation switches, a column header, one
/// row per epoch.
pub fn metrics_tsv(cfg: &PretrainConfig, log: &[EpochMetrics]) -> String {
    let n = cfg.model.num_levels();
    let t = &cfg.train;
    let mut s = format!(
        "# no_mask={} supervise_last_only={} topdown_mask={} mask_ratio={} seed={}\n",
        t.no_mask, t.supervise_last_only, t.topdown_mask, cfg.views.mask_ratio, t.seed
    );
    s.push_str("epoch\tloss");
    for l in 0..n {
        let _ = write!(s, "\tloss_l{l}");
    }
    s.push_str("\tlr\tmomentum");
    for l in 0..n {
        let _ = write!(s, "\tstd_l{l}");
    }
    s.push('\n');
    for e in log {
        let _ = write!(s, "{}\t{}", e.epoch, e.loss);
        for v in &e.level_loss {
            let _ = write!(s, "\t{v}");
        }
        let _ = write!(s, "\t{}\t{}", e.lr, e.momentum);
        for v in &e.feature_std {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    s
}

/// Self-supervised pretraining over `dataset`. Each epoch visits every scene once in a seeded
/// order; all randomness derives from `train.seed`, so interrupted and resumed runs match
/// uninterrupted ones.
pub fn pretrain(dataset: &[PointCloud], cfg: &PretrainConfig, opts: &PretrainOptions) -> Result<TrainState> {
    let model = HUNet::new(cfg.model.clone())?;
    cfg.train.validate(model.num_levels())?;
    cfg.views.aug.validate()?;
    if cfg.views.num_levels != model.num_levels() {
        return Err(Error::Config(format!(
            "views use {} levels, model has {}",
            cfg.views.num_levels,
            model.num_levels()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyScene("pretraining dataset is empty".into()));
    }
    let t = &cfg.train;
    let schedule = Schedule::new(t, dataset.len());
    let mut state = match (&opts.checkpoint, opts.resume) {
        (Some(p), true) if p.exists() => load_state(p, cfg)?,
        _ => TrainState::new(&model, t.seed),
    };
    let jobs = opts.jobs.max(1);
    while state.epoch < t.epochs {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng_for(t.seed, "scene-order", epoch as u64));
        let mut steps: Vec<StepMetrics> = Vec::new();
        for chunk in order.chunks(t.batch_size) {
            let pairs = par_map(jobs, chunk, |_, &i| {
                let visit = (epoch * dataset.len() + i) as u64;
                scene_views(&dataset[i], &cfg.views, derive_seed(t.seed, "views", visit))
            });
            let mut batch = Vec::with_capacity(pairs.len());
            for p in pairs {
                match p {
                    Ok(vp) => batch.push(vp),
                    Err(Error::DegenerateView(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            if batch.is_empty() {
                continue;
            }
            match train_step(&model, &mut state, &batch, t, schedule, jobs) {
                Ok(m) => steps.push(m),
                Err(Error::DegenerateBatch(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if steps.is_empty() {
            return Err(Error::DegenerateBatch(format!("epoch {epoch} produced no update")));
        }
        let k = steps.len() as f64;
        let mean_vec = |f: &dyn Fn(&StepMetrics) -> &Vec<f64>| -> Vec<f64> {
            (0..model.num_levels())
                .map(|l| steps.iter().map(|s| f(s)[l]).sum::<f64>() / k)
                .collect()
        };
        let last = steps.last().expect("nonempty");
        let em = EpochMetrics {
            epoch,
            loss: steps.iter().map(|s| s.loss).sum::<f64>() / k,
            level_loss: mean_vec(&|s| &s.level_loss),
            lr: last.lr,
            momentum: last.momentum,
            feature_std: mean_vec(&|s| &s.feature_std),
            steps: steps.len(),
        };
        if opts.verbose {
            eprintln!(
                "epoch {epoch}: loss {:.5} std {:?}",
                em.loss,
                em.feature_std.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
            );
        }
        state.log.push(em);
        state.epoch += 1;
        if let Some(p) = &opts.checkpoint {
            save_state(p, cfg, &state)?;
        }
        if let Some(p) = &opts.metrics {
            std::fs::write(p, metrics_tsv(cfg, &state.log))?;
        }
        if opts.stop_after.is_some_and(|s| state.epoch >= s) {
            break;
        }
    }
    Ok(state)
}
