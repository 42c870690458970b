//! Fixed-stride clip windows over a video's frame indices.

use rand::Rng;

use crate::{NeuralError, Result};

pub const CLIP_FRAMES: usize = 64;
pub const CLIP_STRIDE: usize = 4;
pub const CLIP_OVERLAP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipConfig {
    pub frames: usize,
    pub stride: usize,
    /// Sampled frames shared by consecutive inference windows.
    pub overlap: usize,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            frames: CLIP_FRAMES,
            stride: CLIP_STRIDE,
            overlap: CLIP_OVERLAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipPlan {
    pub windows: Vec<Vec<usize>>,
    /// Set when the video was shorter than one span and its last frame was repeated.
    pub padded: bool,
}

impl ClipConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.stride == 0 || self.overlap >= self.frames {
            return Err(NeuralError::Config(format!(
                "clip of {} frames, stride {}, overlap {}",
                self.frames, self.stride, self.overlap
            )));
        }
        Ok(())
    }

    /// Frames covered by one window: `(frames - 1) * stride + 1`.
    pub fn span(&self) -> usize {
        (self.frames - 1) * self.stride + 1
    }

    /// Distance in raw frames between consecutive inference starts.
    pub fn step(&self) -> usize {
        (self.frames - self.overlap) * self.stride
    }

    fn window(&self, start: usize, n: usize) -> Vec<usize> {
        (0..self.frames).map(|i| (start + i * self.stride).min(n - 1)).collect()
    }

    /// Windows for a video of `n` frames. Training draws one random start;
    /// inference tiles starts `step()` apart while a full span fits.
    pub fn sample(&self, n: usize, train: bool, rng: &mut impl Rng) -> Result<ClipPlan> {
        self.validate()?;
        if n < 4 {
            return Err(NeuralError::Config(format!("video of {n} frames is too short to clip")));
        }
        let span = self.span();
        if n < span {
            return Ok(ClipPlan {
                windows: vec![self.window(0, n)],
                padded: true,
            });
        }
        let windows = if train {
            vec![self.window(rng.gen_range(0..=n - span), n)]
        } else {
            (0..=(n - span) / self.step()).map(|k| self.window(k * self.step(), n)).collect()
        };
        Ok(ClipPlan {
            windows,
            padded: false,
        })
    }
}

pub fn sample_clips(n: usize, train: bool, rng: &mut impl Rng) -> Result<ClipPlan> {
    ClipConfig::default().sample(n, train, rng)
}

/// Mean of per-clip class probabilities, accumulated in double precision in clip order.
pub fn mean_probabilities(per_clip: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = per_clip.first() else {
        return Vec::new();
    };
    let mut out = vec![0.0; first.len()];
    for p in per_clip {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    let k = per_clip.len() as f64;
    out.iter_mut().for_each(|v| *v /= k);
    out
}
