//! Corpus manifests: synthetic phantom generation and loading from disk.
//!
//! A corpus directory holds `corpus.json` plus the files it references:
//!
//! ```json
//! {"videos": [{"id": "v000", "video": "videos/v000.tensor",
//!              "trajectory": "trajectories/v000.csv", "skill": "expert",
//!              "cf_score": 5, "rf_score": 4, "frames": 300, "fps": 30.0,
//!              "duration_s": 10.0}]}
//! ```
//!
//! `video` is either a flat tensor file or a directory of PNG/PNM frames.
//! `trajectory` is optional; keypoint methods need it.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use surgskill_core::eval::VideoInfo;
use surgskill_core::media::{self, PhantomScript, Skill, Trajectory, VideoClip};

use crate::config::Task;
use crate::error::{RunError, RunResult, Stage};

pub const MANIFEST_FILE: &str = "corpus.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    pub video: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    pub skill: Skill,
    /// Item scores on the 2..=5 scale.
    pub cf_score: u8,
    pub rf_score: u8,
    pub frames: usize,
    pub fps: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub videos: Vec<CorpusEntry>,
}

/// A manifest together with the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
}

/// Three-way class of an item score: {2, 3} → 0, 4 → 1, 5 → 2.
pub fn score_class(score: u8) -> usize {
    match score {
        0..=3 => 0,
        4 => 1,
        _ => 2,
    }
}

impl CorpusEntry {
    /// Class label under `task`; expert is the positive binary class.
    pub fn label(&self, task: Task) -> usize {
        match task {
            Task::Binary => usize::from(self.skill == Skill::Expert),
            Task::Cf3Class => score_class(self.cf_score),
            Task::Rf3Class => score_class(self.rf_score),
        }
    }
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.manifest.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.videos.is_empty()
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.manifest.videos
    }

    pub fn labels(&self, task: Task) -> Vec<usize> {
        self.entries().iter().map(|e| e.label(task)).collect()
    }

    /// Fold-balancing inputs; folds always balance the binary label so every task
    /// shares one split.
    pub fn video_infos(&self) -> Vec<VideoInfo> {
        self.entries()
            .iter()
            .map(|e| VideoInfo {
                id: e.id.clone(),
                duration_s: e.duration_s,
                label: e.label(Task::Binary),
            })
            .collect()
    }

    pub fn video_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.manifest.videos[i].video)
    }

    pub fn load_video(&self, i: usize) -> RunResult<VideoClip> {
        let entry = &self.manifest.videos[i];
        let path = self.video_path(i);
        let clip = if path.is_dir() {
            media::load_image_sequence(&path, entry.fps)
        } else {
            VideoClip::load_tensor(&path, entry.id.clone())
        }
        .map_err(|e| RunError::from_core(Stage::Corpus, e))?;
        if clip.len() != entry.frames {
            return Err(RunError::data(
                Stage::Corpus,
                format!("{}: manifest lists {} frames, file has {}", entry.id, entry.frames, clip.len()),
            ));
        }
        Ok(clip)
    }

    pub fn load_trajectory(&self, i: usize) -> RunResult<Trajectory> {
        let entry = &self.manifest.videos[i];
        let rel = entry
            .trajectory
            .as_ref()
            .ok_or_else(|| RunError::data(Stage::Corpus, format!("{} has no trajectory", entry.id)))?;
        media::load_trajectory(self.root.join(rel)).map_err(|e| RunError::from_core(Stage::Corpus, e))
    }
}

pub fn load_corpus(dir: &Path) -> RunResult<Corpus> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| RunError::io(Stage::Corpus, &path, e))?;
    let manifest: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| RunError::data(Stage::Corpus, format!("{}: {e}", path.display())))?;
    if manifest.videos.is_empty() {
        return Err(RunError::data(Stage::Corpus, "corpus lists no videos"));
    }
    for e in &manifest.videos {
        if !(2..=5).contains(&e.cf_score) || !(2..=5).contains(&e.rf_score) {
            return Err(RunError::data(Stage::Corpus, format!("{}: item scores must lie in 2..=5", e.id)));
        }
        if !(e.fps > 0.0) {
            return Err(RunError::data(Stage::Corpus, format!("{}: fps must be positive", e.id)));
        }
    }
    Ok(Corpus {
        root: dir.to_path_buf(),
        manifest,
    })
}

/// Per-video seed, decorrelated from the corpus seed.
fn video_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Renders `count` phantom videos, the first `round(count · expert_fraction)` of them
/// expert. Item scores are drawn per video: experts 4 or 5, novices 2 or 3.
pub fn synth_corpus(count: usize, expert_fraction: f64, seed: u64, out: &Path) -> RunResult<Corpus> {
    if count < 5 {
        return Err(RunError::Config(format!("synthetic corpus needs at least 5 videos, got {count}")));
    }
    if !(0.0..=1.0).contains(&expert_fraction) {
        return Err(RunError::Config("expert_fraction must lie in [0, 1]".into()));
    }
    let experts = (count as f64 * expert_fraction).round() as usize;
    for sub in ["videos", "trajectories"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| RunError::io(Stage::Corpus, &d, e))?;
    }
    let mut videos = Vec::with_capacity(count);
    for i in 0..count {
        let vs = video_seed(seed, i);
        let script = if i < experts {
            PhantomScript::expert(vs)
        } else {
            PhantomScript::novice(vs)
        };
        let (clip, traj, skill) = media::synth_phantom(&script).map_err(|e| RunError::from_core(Stage::Corpus, e))?;
        let id = format!("v{i:03}");
        let video = PathBuf::from("videos").join(format!("{id}.tensor"));
        let trajectory = PathBuf::from("trajectories").join(format!("{id}.csv"));
        clip.save_tensor(out.join(&video))
            .map_err(|e| RunError::from_core(Stage::Corpus, e))?;
        traj.save(out.join(&trajectory))
            .map_err(|e| RunError::from_core(Stage::Corpus, e))?;
        let mut rng = ChaCha8Rng::seed_from_u64(vs ^ 0x5c0e);
        let base = if skill == Skill::Expert { 4 } else { 2 };
        videos.push(CorpusEntry {
            id,
            video,
            trajectory: Some(trajectory),
            skill,
            cf_score: base + rng.gen_range(0..2u8),
            rf_score: base + rng.gen_range(0..2u8),
            frames: clip.len(),
            fps: clip.fps(),
            duration_s: clip.duration_s(),
        });
    }
    let manifest = CorpusManifest { videos };
    let path = out.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| RunError::io(Stage::Corpus, &path, e))?;
    Ok(Corpus {
        root: out.to_path_buf(),
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_classes() {
        assert_eq!([2, 3, 4, 5].map(score_class), [0, 0, 1, 2]);
    }

    #[test]
    fn video_seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (0..100).map(|i| video_seed(7, i)).collect();
        assert_eq!(s.len(), 100);
    }
}
