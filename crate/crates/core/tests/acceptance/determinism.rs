use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

/// Small enough that every command, ablations included, finishes in seconds.
pub const SMALL_CONFIG: &str = r#"
[crop]
max_points = 700

[model]
enc_channels = [6, 8, 10]
dec_channels = [6, 8, 10]
res_blocks = [1, 1, 1]
attn_blocks = [0, 0, 1]
window = 8
heads = 2
ff_ratio = 2

[train]
epochs = 2
warmup_epochs = 1
batch_size = 4

[probe]
epochs = 3
"#;

pub fn msm(dir: &Path, jobs: usize, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_msm"))
        .current_dir(dir)
        .args(["--jobs", &jobs.to_string(), "--seed", "11", "--config", "run.toml"])
        .args(args)
        .output()
        .expect("msm binary runs")
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// The full command set, in dependency order.
const PIPELINE: &[&[&str]] = &[
    &["gen-data", "--out", "data", "--scenes", "10"],
    &["pretrain", "--data", "data", "--out", "model.ckpt"],
    &["features", "--ckpt", "model.ckpt", "--data", "data", "--out", "feats"],
    &["probe", "--task", "linear", "--train", "feats/train", "--val", "feats/val", "--out", "linear.tsv"],
    &["probe", "--task", "linear", "--train", "feats/train", "--val", "feats/val", "--limited", "points:20", "--out", "limited.tsv"],
    &["probe", "--task", "nn", "--train", "feats/train", "--val", "feats/val", "--scenes", "data", "--out", "nn.tsv"],
    &["probe", "--task", "instance", "--train", "feats/train", "--val", "feats/val", "--scenes", "data", "--out", "instance.tsv"],
    &["viz-pca", "--ckpt", "model.ckpt", "--scene", "data/scene_0000.ply", "--out", "pca.ply"],
    &["ablate", "--which", "mask-ratio", "--data", "data", "--out", "abl_ratio.tsv"],
    &["ablate", "--which", "masking", "--data", "data", "--out", "abl_masking.tsv"],
    &["ablate", "--which", "supervision", "--data", "data", "--out", "abl_supervision.tsv"],
    &["ablate", "--which", "strategy", "--data", "data", "--out", "abl_strategy.tsv"],
    &["ablate", "--which", "layers", "--data", "data", "--ckpt", "model.ckpt", "--out", "abl_layers.tsv"],
    &["ablate", "--which", "nn-metric", "--data", "data", "--ckpt", "model.ckpt", "--out", "abl_nn.tsv"],
];

/// Runs every command with one and with three workers. Returns `(identical files, total files,
/// failures)` where failures name commands that exited nonzero or files that differ.
pub fn cli_determinism() -> (usize, usize, Vec<String>) {
    let roots = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut failures = Vec::new();
    for (root, jobs) in roots.iter().zip([1, 3]) {
        std::fs::write(root.path().join("run.toml"), SMALL_CONFIG).unwrap();
        for args in PIPELINE {
            let out = msm(root.path(), jobs, args);
            if !out.status.success() {
                failures.push(format!(
                    "jobs {jobs} `{}` exited {:?}: {}",
                    args.join(" "),
                    out.status.code(),
                    String::from_utf8_lossy(&out.stderr).trim()
                ));
            }
        }
    }
    let a = files_under(roots[0].path());
    let b = files_under(roots[1].path());
    let mut same = 0;
    for (path, bytes) in &a {
        if b.get(path) == Some(bytes) {
            same += 1;
        } else {
            failures.push(format!("{} differs", path.display()));
        }
    }
    for path in b.keys().filter(|p| !a.contains_key(*p)) {
        failures.push(format!("{} only written with 3 jobs", path.display()));
    }
    (same, a.len(), failures)
}
