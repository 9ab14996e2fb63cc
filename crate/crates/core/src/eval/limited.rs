use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::rng_for;

/// How training annotations are thinned out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LimitedMode {
    /// Keep labels on `⌈f·S⌉` randomly chosen scenes.
    SceneFraction(f64),
    /// Keep this many randomly chosen labeled points in every scene.
    PointsPerScene(usize),
}

impl FromStr for LimitedMode {
    type Err = Error;

    /// `scenes:0.1` or `points:20`.
    fn from_str(s: &str) -> Result<Self> {
        let (mode, amount) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("limited annotation '{s}' is not MODE:AMOUNT")))?;
        let bad = || Error::Config(format!("bad amount in limited annotation '{s}'"));
        match mode {
            "scenes" | "scene-fraction" => {
                let f: f64 = amount.parse().map_err(|_| bad())?;
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Config(format!("scene fraction {f} outside (0, 1]")));
                }
                Ok(LimitedMode::SceneFraction(f))
            }
            "points" | "points-per-scene" => Ok(LimitedMode::PointsPerScene(amount.parse().map_err(|_| bad())?)),
            _ => Err(Error::Config(format!("unknown limited annotation mode '{mode}' (scenes, points)"))),
        }
    }
}

impl fmt::Display for LimitedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LimitedMode::SceneFraction(v) => write!(f, "scenes:{v}"),
            LimitedMode::PointsPerScene(n) => write!(f, "points:{n}"),
        }
    }
}

/// Number of scenes kept at fraction `f` of `scenes`.
pub fn kept_scene_count(f: f64, scenes: usize) -> usize {
    ((f * scenes as f64 - 1e-9).ceil().max(0.0) as usize).min(scenes)
}

/// Per-scene label vectors with unsampled labels replaced by −1. Deterministic in `seed`.
pub fn limited_annotation_split(labels: &[Vec<i32>], mode: LimitedMode, seed: u64) -> Result<Vec<Vec<i32>>> {
    match mode {
        LimitedMode::SceneFraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Range(format!("scene fraction {f} outside (0, 1]")));
            }
            let keep = kept_scene_count(f, labels.len());
            let mut kept = vec![false; labels.len()];
            let mut rng = rng_for(seed, "limited-scenes", 0);
            for i in sample(&mut rng, labels.len(), keep) {
                kept[i] = true;
            }
            Ok(labels
                .iter()
                .zip(kept)
                .map(|(l, k)| if k { l.clone() } else { vec![-1; l.len()] })
                .collect())
        }
        LimitedMode::PointsPerScene(n) => Ok(labels
            .iter()
            .enumerate()
            .map(|(si, l)| {
                let labeled: Vec<usize> = (0..l.len()).filter(|&r| l[r] >= 0).collect();
                let mut out = vec![-1; l.len()];
                let mut rng = rng_for(seed, "limited-points", si as u64);
                for i in sample(&mut rng, labeled.len(), n.min(labeled.len())) {
                    out[labeled[i]] = l[labeled[i]];
                }
                out
            })
            .collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_modes() {
        assert_eq!("points:20".parse::<LimitedMode>().unwrap(), LimitedMode::PointsPerScene(20));
        assert_eq!("scenes:0.1".parse::<LimitedMode>().unwrap(), LimitedMode::SceneFraction(0.1));
        assert!("scenes:0".parse::<LimitedMode>().is_err());
        assert!("voxels:3".parse::<LimitedMode>().is_err());
    }

    #[test]
    fn full_fraction_is_identity() {
        let l = vec![vec![0, 1, -1], vec![2, 2]];
        assert_eq!(limited_annotation_split(&l, LimitedMode::SceneFraction(1.0), 3).unwrap(), l);
    }

    #[test]
    fn tenth_of_64_scenes_keeps_seven() {
        assert_eq!(kept_scene_count(0.1, 64), 7);
        assert_eq!(kept_scene_count(0.5, 64), 32);
        let l = vec![vec![1; 4]; 64];
        let out = limited_annotation_split(&l, LimitedMode::SceneFraction(0.1), 0).unwrap();
        assert_eq!(out.iter().filter(|s| s[0] >= 0).count(), 7);
    }
}
