//! Masked scene modeling: student/teacher pretraining with cross-view feature reconstruction.

mod optim;
mod trainer;

pub use optim::{
    adamw_step, collapse_metric, ema_update, lr_schedule, momentum_schedule, AdamState, AdamWConfig,
};
pub use trainer::{
    init_predictors, load_state, metrics_tsv, msm_loss, predict, pretrain, save_state, scene_views,
    train_step, EpochMetrics, LossTerm, PretrainConfig, PretrainOptions, Schedule, StepMetrics,
    TrainConfig, TrainState,
};
