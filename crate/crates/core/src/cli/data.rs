use std::path::{Path, PathBuf};

use msm::jobs::par_map;
use msm::scene::{read_feature_dump, read_ply, FeatureDump, PointCloud};
use msm::{Error, Result};

pub const MANIFEST: &str = "manifest.tsv";

/// Train and val scenes listed in `DIR/manifest.tsv` (`file<TAB>split` per line).
pub fn load_dataset(dir: &Path, jobs: usize) -> Result<(Vec<PointCloud>, Vec<PointCloud>)> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (file, split) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("{}:{}: expected FILE<TAB>SPLIT", path.display(), i + 1)))?;
        let train = match split.trim() {
            "train" => true,
            "val" => false,
            other => return Err(Error::Format(format!("{}:{}: unknown split '{other}'", path.display(), i + 1))),
        };
        entries.push((dir.join(file), train));
    }
    let clouds = par_map(jobs, &entries, |_, (p, _)| read_ply(p)).into_iter().collect::<Result<Vec<_>>>()?;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (c, (_, is_train)) in clouds.into_iter().zip(&entries) {
        if *is_train {
            train.push(c);
        } else {
            val.push(c);
        }
    }
    Ok((train, val))
}

/// Files with the given extension, sorted by name.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

/// All feature dumps of a directory with their scene names (file stems).
pub fn load_dumps(dir: &Path, jobs: usize) -> Result<Vec<(String, FeatureDump)>> {
    let files = list_files(dir, "msmf")?;
    if files.is_empty() {
        return Err(Error::Format(format!("no feature dumps in {}", dir.display())));
    }
    par_map(jobs, &files, |_, p| {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        read_feature_dump(p).map(|d| (stem, d))
    })
    .into_iter()
    .collect()
}

/// Scene clouds `DIR/<name>.ply` for the given scene names.
pub fn load_scenes(dir: &Path, names: &[String], jobs: usize) -> Result<Vec<PointCloud>> {
    par_map(jobs, names, |_, n| read_ply(dir.join(format!("{n}.ply")))).into_iter().collect()
}
