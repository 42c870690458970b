//! Video data model, ingestion and the seeded phantom-surgery generator.
//!
//! Frames are grayscale intensity grids in `[0, 1]`. Colour input is reduced
//! to luma with the fixed weights `0.299 R + 0.587 G + 0.114 B`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::volume::Volume;
use crate::{Error, Result};

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// A single grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if data.len() != height * width {
            return Err(Error::mismatch(height * width, data.len()));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds a frame by evaluating `f(y, x)`; values are clamped into `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let v = f(y, x);
                data.push(if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Box-filter downsampling by an integer factor (trailing partial blocks dropped).
    pub fn downsample(&self, factor: usize) -> Frame {
        if factor <= 1 {
            return self.clone();
        }
        let h = (self.height / factor).max(1);
        let w = (self.width / factor).max(1);
        let norm = 1.0 / (factor * factor) as f32;
        Frame::from_fn(h, w, |y, x| {
            let mut s = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    let yy = (y * factor + dy).min(self.height - 1);
                    let xx = (x * factor + dx).min(self.width - 1);
                    s += self.get(yy, xx);
                }
            }
            s * norm
        })
    }
}

/// An ordered, uniformly shaped sequence of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    id: String,
    fps: f64,
    frames: Vec<Frame>,
}

impl VideoClip {
    pub fn new(id: impl Into<String>, fps: f64, frames: Vec<Frame>) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        if frames.len() < 2 {
            return Err(Error::invalid(format!(
                "a clip needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let (h, w) = (frames[0].height, frames[0].width);
        for (i, f) in frames.iter().enumerate() {
            if f.height != h || f.width != w {
                return Err(Error::mismatch(
                    format!("{h}x{w}"),
                    format!("{}x{} at frame {i}", f.height, f.width),
                ));
            }
        }
        Ok(Self {
            id: id.into(),
            fps,
            frames,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    /// Intensities as a `t × y × x` double-precision volume.
    pub fn to_volume(&self) -> Volume {
        self.volume_range(0, self.len())
    }

    /// Frames `start..end` as a volume.
    pub fn volume_range(&self, start: usize, end: usize) -> Volume {
        let (h, w) = (self.height(), self.width());
        let mut data = Vec::with_capacity((end - start) * h * w);
        for f in &self.frames[start..end] {
            data.extend(f.data.iter().map(|&v| v as f64));
        }
        Volume::from_vec(end - start, h, w, data)
    }

    pub fn downsample(&self, factor: usize) -> VideoClip {
        VideoClip {
            id: self.id.clone(),
            fps: self.fps,
            frames: self.frames.iter().map(|f| f.downsample(factor)).collect(),
        }
    }

    /// Writes the flat tensor format: header `H W N fps`, then N·H·W little-endian f32.
    pub fn save_tensor(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(
            out,
            "{} {} {} {}",
            self.height(),
            self.width(),
            self.len(),
            self.fps
        )
        .map_err(io)?;
        for f in &self.frames {
            for v in &f.data {
                out.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }

    /// Reads the flat tensor format written by [`VideoClip::save_tensor`].
    pub fn load_tensor(path: impl AsRef<Path>, id: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(1, "missing tensor header"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| parse_err(1, "non-utf8 header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(1, "header must be `H W N fps`"));
        }
        let dim = |s: &str| s.parse::<usize>().map_err(|e| parse_err(1, e.to_string()));
        let (h, w, n) = (dim(fields[0])?, dim(fields[1])?, dim(fields[2])?);
        let fps: f64 = fields[3].parse().map_err(|_| parse_err(1, "bad fps"))?;
        let body = &bytes[nl + 1..];
        if body.len() != n * h * w * 4 {
            return Err(Error::mismatch(n * h * w * 4, format!("{} payload bytes", body.len())));
        }
        let mut frames = Vec::with_capacity(n);
        for chunk in body.chunks_exact(h * w * 4) {
            let data = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            frames.push(Frame::new(h, w, data)?);
        }
        VideoClip::new(id, fps, frames)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "pnm", "pbm"];

/// Loads every PNG/PNM image in `directory`, in lexicographic file-name order.
pub fn load_image_sequence(directory: impl AsRef<Path>, fps: f64) -> Result<VideoClip> {
    let dir = directory.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    let frames = paths
        .iter()
        .map(|p| load_luma(p))
        .collect::<Result<Vec<_>>>()?;
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    VideoClip::new(id, fps, frames)
}

fn load_luma(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb32f();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .pixels()
        .map(|p| (LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]).clamp(0.0, 1.0))
        .collect();
    Frame::new(h as usize, w as usize, data)
}

/// Per-frame pixel locations of `K` keypoints; `None` marks a missing detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    fps: f64,
    keypoints: usize,
    points: Vec<Vec<Option<[f64; 2]>>>,
}

impl Trajectory {
    pub fn new(fps: f64, points: Vec<Vec<Option<[f64; 2]>>>) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid("trajectory fps must be positive"));
        }
        let keypoints = points.first().map(Vec::len).unwrap_or(0);
        if keypoints == 0 {
            return Err(Error::invalid("trajectory needs at least one keypoint"));
        }
        if let Some(i) = points.iter().position(|p| p.len() != keypoints) {
            return Err(Error::mismatch(
                format!("{keypoints} keypoints"),
                format!("{} at frame {i}", points[i].len()),
            ));
        }
        Ok(Self {
            fps,
            keypoints,
            points,
        })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn keypoints(&self) -> usize {
        self.keypoints
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<Option<[f64; 2]>>] {
        &self.points
    }

    /// Flattened `[x0, y0, x1, y1, ...]` per frame with missing entries carried
    /// forward from the last observation (backward-filled before the first).
    pub fn filled(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; 2 * self.keypoints]; self.points.len()];
        for k in 0..self.keypoints {
            let first = self.points.iter().find_map(|p| p[k]).unwrap_or([0.0, 0.0]);
            let mut last = first;
            for (row, frame) in out.iter_mut().zip(&self.points) {
                if let Some(p) = frame[k] {
                    last = p;
                }
                row[2 * k] = last[0];
                row[2 * k + 1] = last[1];
            }
        }
        out
    }

    /// CSV rendering: optional `# fps=` line, header `frame,k0_x,k0_y,...`, empty cell = missing.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# fps={}", self.fps);
        s.push_str("frame");
        for k in 0..self.keypoints {
            let _ = write!(s, ",k{k}_x,k{k}_y");
        }
        s.push('\n');
        for (i, frame) in self.points.iter().enumerate() {
            let _ = write!(s, "{i}");
            for p in frame {
                match p {
                    Some([x, y]) => {
                        let _ = write!(s, ",{x},{y}");
                    }
                    None => s.push_str(",,"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses the trajectory CSV schema. Without an `# fps=` line the frame is the time unit.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut fps = 1.0;
        let mut header: Option<usize> = None;
        let mut points = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("fps=") {
                    fps = v
                        .trim()
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad fps `{v}`")))?;
                }
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            let Some(ncols) = header else {
                if cells.first().map(|c| c.trim()) != Some("frame") || cells.len() < 3 || cells.len() % 2 == 0 {
                    return Err(parse_err(line_no, "header must be `frame,k0_x,k0_y[,...]`"));
                }
                for (k, pair) in cells[1..].chunks(2).enumerate() {
                    if pair[0].trim() != format!("k{k}_x") || pair[1].trim() != format!("k{k}_y") {
                        return Err(parse_err(line_no, format!("unexpected header columns {pair:?}")));
                    }
                }
                header = Some(cells.len());
                continue;
            };
            if cells.len() != ncols {
                return Err(parse_err(
                    line_no,
                    format!("expected {ncols} cells, found {}", cells.len()),
                ));
            }
            let frame: usize = cells[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, "bad frame index"))?;
            if frame != points.len() {
                return Err(parse_err(
                    line_no,
                    format!("frame {frame} out of sequence (expected {})", points.len()),
                ));
            }
            let mut row = Vec::with_capacity((ncols - 1) / 2);
            for pair in cells[1..].chunks(2) {
                let (x, y) = (pair[0].trim(), pair[1].trim());
                match (x.is_empty(), y.is_empty()) {
                    (true, true) => row.push(None),
                    (false, false) => {
                        let px: f64 = x.parse().map_err(|_| parse_err(line_no, format!("bad x `{x}`")))?;
                        let py: f64 = y.parse().map_err(|_| parse_err(line_no, format!("bad y `{y}`")))?;
                        if !(px.is_finite() && py.is_finite()) {
                            return Err(parse_err(line_no, "non-finite coordinate"));
                        }
                        row.push(Some([px, py]));
                    }
                    _ => return Err(parse_err(line_no, "half-missing keypoint")),
                }
            }
            points.push(row);
        }
        if header.is_none() {
            return Err(parse_err(1, "missing header"));
        }
        if points.is_empty() {
            return Err(parse_err(1, "no trajectory rows"));
        }
        Trajectory::new(fps, points)
    }
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Trajectory::parse_csv(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Skill {
    Expert,
    Novice,
}

/// Expert scripts must stay strictly below this jitter amplitude; novices at or above.
pub const JITTER_SPLIT_PX: f64 = 1.0;

/// Recipe for one phantom video: a Gaussian "tool tip" blob travelling along a
/// circular arc over a speckled disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomScript {
    pub duration_s: f64,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub skill: Skill,
    pub arc_radius: f64,
    /// Tangential speed along the arc, px/s.
    pub angular_speed: f64,
    /// Per-axis uniform jitter amplitude, px.
    pub jitter: f64,
    /// Probability that any one-second block is a pause.
    pub pause_prob: f64,
    pub blob_sigma: f64,
    pub seed: u64,
}

impl PhantomScript {
    pub fn expert(seed: u64) -> Self {
        Self {
            duration_s: 10.0,
            fps: 30.0,
            width: 64,
            height: 64,
            skill: Skill::Expert,
            arc_radius: 18.0,
            angular_speed: 12.0,
            jitter: 0.0,
            pause_prob: 0.0,
            blob_sigma: 2.5,
            seed,
        }
    }

    pub fn novice(seed: u64) -> Self {
        Self {
            skill: Skill::Novice,
            angular_speed: 9.0,
            jitter: 2.0,
            pause_prob: 0.3,
            ..Self::expert(seed)
        }
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid("phantom fps must be positive"));
        }
        if self.frame_count() < 2 {
            return Err(Error::invalid(format!(
                "duration {}s at {} fps yields fewer than 2 frames",
                self.duration_s, self.fps
            )));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::invalid("phantom frames must be at least 8x8"));
        }
        if !(0.0..=1.0).contains(&self.pause_prob) {
            return Err(Error::invalid("pause probability must lie in [0, 1]"));
        }
        if self.jitter < 0.0 || self.arc_radius <= 0.0 || self.blob_sigma <= 0.0 {
            return Err(Error::invalid("jitter must be >= 0; radius and blob sigma > 0"));
        }
        match self.skill {
            Skill::Expert if self.pause_prob != 0.0 => {
                return Err(Error::invalid("expert scripts never pause"))
            }
            Skill::Expert if self.jitter >= JITTER_SPLIT_PX => {
                return Err(Error::invalid("expert jitter must stay below the novice range"))
            }
            Skill::Novice if self.jitter < JITTER_SPLIT_PX => {
                return Err(Error::invalid("novice jitter must exceed the expert range"))
            }
            _ => {}
        }
        let half = (self.width.min(self.height) as f64 - 1.0) / 2.0;
        if self.arc_radius + self.jitter > half - 1.0 {
            return Err(Error::invalid("arc plus jitter leaves the frame"));
        }
        Ok(())
    }

    pub fn center(&self) -> [f64; 2] {
        [
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        ]
    }

    /// Start angle of the arc, derived from the seed.
    pub fn start_angle(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_a9c1e);
        rng.gen_range(0.0..std::f64::consts::TAU)
    }

    /// Ideal (jitter-free) arc location after `moving_frames` frames of motion.
    pub fn arc_point(&self, moving_frames: usize) -> [f64; 2] {
        let [cx, cy] = self.center();
        let omega = self.angular_speed / self.arc_radius / self.fps;
        let theta = self.start_angle() + omega * moving_frames as f64;
        [
            cx + self.arc_radius * theta.cos(),
            cy + self.arc_radius * theta.sin(),
        ]
    }
}

/// Renders a phantom video and its exact tool-tip trajectory. Pure in `script`.
pub fn synth_phantom(script: &PhantomScript) -> Result<(VideoClip, Trajectory, Skill)> {
    script.validate()?;
    let n = script.frame_count();
    let (h, w) = (script.height, script.width);
    let background = phantom_background(script);

    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let block = script.fps.ceil().max(1.0) as usize;
    let mut moving = 0usize;
    let mut last: Option<[f64; 2]> = None;
    let mut paused = false;
    let mut track = Vec::with_capacity(n);
    for i in 0..n {
        if i % block == 0 {
            paused = script.pause_prob > 0.0 && rng.gen_bool(script.pause_prob);
        }
        let p = match (paused, last) {
            (true, Some(p)) => p,
            _ => {
                let [x, y] = script.arc_point(moving);
                let (jx, jy) = if script.jitter > 0.0 {
                    (
                        rng.gen_range(-script.jitter..=script.jitter),
                        rng.gen_range(-script.jitter..=script.jitter),
                    )
                } else {
                    (0.0, 0.0)
                };
                if !paused {
                    moving += 1;
                }
                [x + jx, y + jy]
            }
        };
        last = Some(p);
        track.push(p);
    }

    let inv2s2 = 1.0 / (2.0 * script.blob_sigma * script.blob_sigma);
    let frames = track
        .iter()
        .map(|&[px, py]| {
            Frame::from_fn(h, w, |y, x| {
                let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                (background[y * w + x] + 0.6 * (-d2 * inv2s2).exp()) as f32
            })
        })
        .collect();
    let clip = VideoClip::new(format!("phantom-{}", script.seed), script.fps, frames)?;
    let traj = Trajectory::new(
        script.fps,
        track.into_iter().map(|p| vec![Some(p)]).collect(),
    )?;
    Ok((clip, traj, script.skill))
}

/// Static speckled disk on a dark field; smoothed so that gradients are well defined.
fn phantom_background(script: &PhantomScript) -> Vec<f64> {
    let (h, w) = (script.height, script.width);
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xb6);
    let noise: Vec<f64> = (0..h * w).map(|_| rng.gen::<f64>()).collect();
    let [cx, cy] = script.center();
    let disk = 0.48 * h.min(w) as f64;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            let mut c = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let yy = y as i64 + dy;
                    let xx = x as i64 + dx;
                    if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                        s += noise[yy as usize * w + xx as usize];
                        c += 1.0;
                    }
                }
            }
            let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            out[y * w + x] = if r <= disk { 0.2 + 0.25 * s / c } else { 0.05 };
        }
    }
    out
}
