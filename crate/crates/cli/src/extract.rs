//! Per-video interest points and descriptors, cached by video content.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use surgskill_core::descript::{describe_points, DESCRIPTOR_LEN};
use surgskill_core::stip::{detect_stips, InterestPoint, StipConfig};

use crate::cache::{hash_path, Cache, Matrix};
use crate::corpus::Corpus;
use crate::error::{RunError, RunResult, Stage};

/// Leading columns of a cached row before the descriptor: `t, x, y, response`.
const POINT_COLS: usize = 4;

/// Interest points of one video sorted by `(t, y, x)`, with their descriptors.
#[derive(Debug, Clone)]
pub struct Extracted {
    /// Digest of the video content and detector settings these points came from.
    pub source: String,
    pub points: Vec<InterestPoint>,
    /// `points.len() × DESCRIPTOR_LEN`.
    pub descriptors: Array2<f64>,
    pub frames: usize,
    pub fps: f64,
}

#[derive(Serialize)]
struct ExtractKey<'a> {
    video: &'a str,
    stip: &'a StipConfig,
    descriptor_len: usize,
}

fn to_matrix(mut points: Vec<InterestPoint>, clip: &surgskill_core::media::VideoClip) -> Matrix {
    points.sort_by(|a, b| (a.t, a.y, a.x).cmp(&(b.t, b.y, b.x)));
    let descs = describe_points(clip, &points);
    let cols = POINT_COLS + DESCRIPTOR_LEN;
    let mut data = Vec::with_capacity(points.len() * cols);
    for (p, d) in points.iter().zip(&descs) {
        data.extend_from_slice(&[p.t as f64, p.x as f64, p.y as f64, p.response]);
        data.extend_from_slice(d.full());
    }
    Matrix::new(points.len(), cols, data)
}

fn from_matrix(m: &Matrix, source: String, frames: usize, fps: f64) -> RunResult<Extracted> {
    if m.cols != POINT_COLS + DESCRIPTOR_LEN {
        return Err(RunError::data(Stage::Extract, format!("cached rows have {} columns", m.cols)));
    }
    let mut points = Vec::with_capacity(m.rows);
    let mut descriptors = Array2::zeros((m.rows, DESCRIPTOR_LEN));
    for r in 0..m.rows {
        let row = m.row(r);
        points.push(InterestPoint {
            t: row[0] as usize,
            x: row[1] as usize,
            y: row[2] as usize,
            response: row[3],
        });
        descriptors.row_mut(r).assign(&ndarray::ArrayView1::from(&row[POINT_COLS..]));
    }
    Ok(Extracted {
        source,
        points,
        descriptors,
        frames,
        fps,
    })
}

/// Detects and describes interest points of one corpus video.
pub fn extract_video(corpus: &Corpus, i: usize, stip: &StipConfig, cache: &Cache) -> RunResult<Extracted> {
    let entry = &corpus.entries()[i];
    let hash = hash_path(&corpus.video_path(i))?;
    let key = ExtractKey {
        video: &hash,
        stip,
        descriptor_len: DESCRIPTOR_LEN,
    };
    let m = cache.get_or_compute(Stage::Extract, &key, || {
        let clip = corpus.load_video(i)?;
        let windows = detect_stips(&clip, stip).map_err(|e| RunError::from_core(Stage::Extract, e))?;
        Ok(to_matrix(windows.into_iter().flatten().collect(), &clip))
    })?;
    from_matrix(&m, crate::config::digest(&key), entry.frames, entry.fps)
}

pub fn extract_corpus(corpus: &Corpus, stip: &StipConfig, cache: &Cache) -> RunResult<Vec<Extracted>> {
    (0..corpus.len())
        .into_par_iter()
        .map(|i| extract_video(corpus, i, stip, cache))
        .collect()
}
