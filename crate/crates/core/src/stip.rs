//! Space-time interest points: a Harris-style corner response over the
//! spatiotemporal second-moment matrix, evaluated over sliding windows.
//!
//! Each window owns a core of `window - 2 * overlap` seconds; the overlap on
//! either side only provides filter support, so every frame belongs to exactly
//! one core and no detection is reported twice.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::media::VideoClip;
use crate::volume::{gaussian_kernel, Axis, Volume};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StipConfig {
    /// Radius of the smoothing / integration kernel (1 gives a 3×3×3 kernel).
    pub kernel_radius: usize,
    pub spatial_variance: f64,
    pub temporal_variance: f64,
    pub response_variance: f64,
    pub top_k: usize,
    pub window_s: f64,
    pub overlap_s: f64,
    pub harris_k: f64,
    /// Local maxima at or below this response are discarded.
    pub min_response: f64,
}

impl Default for StipConfig {
    fn default() -> Self {
        Self {
            kernel_radius: 1,
            spatial_variance: 4.0,
            temporal_variance: 8.0,
            response_variance: 1.0,
            top_k: 1000,
            window_s: 6.0,
            overlap_s: 2.0,
            harris_k: 0.005,
            min_response: 0.0,
        }
    }
}

impl StipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spatial_variance > 0.0 && self.temporal_variance > 0.0 && self.response_variance > 0.0) {
            return Err(Error::invalid("STIP variances must be positive"));
        }
        if self.top_k == 0 {
            return Err(Error::invalid("top_k must be at least 1"));
        }
        if !(self.overlap_s >= 0.0 && self.window_s > 2.0 * self.overlap_s) {
            return Err(Error::invalid("window must exceed twice the overlap"));
        }
        if self.kernel_radius == 0 {
            return Err(Error::invalid("kernel radius must be at least 1"));
        }
        Ok(())
    }

    /// Voxels closer than this to a clip border lack full derivative support.
    pub fn border_margin(&self) -> usize {
        2 * self.kernel_radius + 1
    }

    fn response_radius(&self) -> usize {
        (3.0 * self.response_variance.sqrt()).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterestPoint {
    pub x: usize,
    pub y: usize,
    pub t: usize,
    pub response: f64,
}

/// Gaussian-averaged outer products of the space-time gradient, per voxel.
#[derive(Debug, Clone)]
pub struct MomentField {
    pub xx: Volume,
    pub xy: Volume,
    pub xt: Volume,
    pub yy: Volume,
    pub yt: Volume,
    pub tt: Volume,
}

impl MomentField {
    pub fn zeros(t: usize, h: usize, w: usize) -> Self {
        let z = Volume::zeros(t, h, w);
        Self {
            xx: z.clone(),
            xy: z.clone(),
            xt: z.clone(),
            yy: z.clone(),
            yt: z.clone(),
            tt: z,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.xx.shape()
    }

    /// The symmetric 3×3 matrix at a voxel, ordered (x, y, t).
    pub fn matrix(&self, t: usize, y: usize, x: usize) -> [[f64; 3]; 3] {
        let i = self.xx.index(t, y, x);
        let (a, b, c) = (self.xx.data()[i], self.xy.data()[i], self.xt.data()[i]);
        let (d, e, f) = (self.yy.data()[i], self.yt.data()[i], self.tt.data()[i]);
        [[a, b, c], [b, d, e], [c, e, f]]
    }

    pub fn set_matrix(&mut self, t: usize, y: usize, x: usize, m: [[f64; 3]; 3]) {
        self.xx.set(t, y, x, m[0][0]);
        self.xy.set(t, y, x, m[0][1]);
        self.xt.set(t, y, x, m[0][2]);
        self.yy.set(t, y, x, m[1][1]);
        self.yt.set(t, y, x, m[1][2]);
        self.tt.set(t, y, x, m[2][2]);
    }
}

fn smooth3(v: &Volume, cfg: &StipConfig) -> Volume {
    let ks = gaussian_kernel(cfg.spatial_variance, cfg.kernel_radius);
    let kt = gaussian_kernel(cfg.temporal_variance, cfg.kernel_radius);
    v.convolve_axis(Axis::X, &ks)
        .convolve_axis(Axis::Y, &ks)
        .convolve_axis(Axis::T, &kt)
}

fn product(a: &Volume, b: &Volume) -> Volume {
    let (t, h, w) = a.shape();
    Volume::from_vec(
        t,
        h,
        w,
        a.data().iter().zip(b.data()).map(|(p, q)| p * q).collect(),
    )
}

/// Second-moment field of an intensity volume.
pub fn moment_field(volume: &Volume, cfg: &StipConfig) -> MomentField {
    let smoothed = smooth3(volume, cfg);
    let gx = smoothed.derivative(Axis::X);
    let gy = smoothed.derivative(Axis::Y);
    let gt = smoothed.derivative(Axis::T);
    MomentField {
        xx: smooth3(&product(&gx, &gx), cfg),
        xy: smooth3(&product(&gx, &gy), cfg),
        xt: smooth3(&product(&gx, &gt), cfg),
        yy: smooth3(&product(&gy, &gy), cfg),
        yt: smooth3(&product(&gy, &gt), cfg),
        tt: smooth3(&product(&gt, &gt), cfg),
    }
}

pub fn second_moment_volume(clip: &VideoClip, cfg: &StipConfig) -> Result<MomentField> {
    cfg.validate()?;
    let support = 2 * cfg.kernel_radius + 1;
    if clip.len() < support || clip.height() < support || clip.width() < support {
        return Err(Error::invalid(format!(
            "clip {}x{}x{} is shorter than the {support}-voxel kernel support",
            clip.len(),
            clip.height(),
            clip.width()
        )));
    }
    Ok(moment_field(&clip.to_volume(), cfg))
}

/// `det(mu) - k * trace(mu)^3` per voxel, before smoothing.
pub fn harris_raw(field: &MomentField, harris_k: f64) -> Volume {
    let (t, h, w) = field.shape();
    let n = t * h * w;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let a = field.xx.data()[i];
        let b = field.xy.data()[i];
        let c = field.xt.data()[i];
        let d = field.yy.data()[i];
        let e = field.yt.data()[i];
        let f = field.tt.data()[i];
        let det = a * (d * f - e * e) - b * (b * f - e * c) + c * (b * e - d * c);
        let tr = a + d + f;
        out.push(det - harris_k * tr * tr * tr);
    }
    Volume::from_vec(t, h, w, out)
}

/// Smoothing applied to the raw response; normalized, zero outside the volume.
pub fn smooth_response(raw: &Volume, variance: f64, radius: usize) -> Volume {
    let k = gaussian_kernel(variance, radius);
    raw.convolve_axis_zero(Axis::X, &k)
        .convolve_axis_zero(Axis::Y, &k)
        .convolve_axis_zero(Axis::T, &k)
}

pub fn harris_response(field: &MomentField, cfg: &StipConfig) -> Volume {
    smooth_response(
        &harris_raw(field, cfg.harris_k),
        cfg.response_variance,
        cfg.response_radius(),
    )
}

/// Frame range `[start, end)` of one window's core and of its padded support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpan {
    pub core: (usize, usize),
    pub support: (usize, usize),
}

pub fn window_spans(frames: usize, fps: f64, cfg: &StipConfig) -> Vec<WindowSpan> {
    let step = (((cfg.window_s - 2.0 * cfg.overlap_s) * fps).round() as usize).max(1);
    let overlap = (cfg.overlap_s * fps).round() as usize;
    (0..frames.div_ceil(step))
        .map(|w| {
            let core = (w * step, ((w + 1) * step).min(frames));
            let support = (core.0.saturating_sub(overlap), (core.1 + overlap).min(frames));
            WindowSpan { core, support }
        })
        .collect()
}

fn rank(a: &InterestPoint, b: &InterestPoint) -> std::cmp::Ordering {
    b.response
        .total_cmp(&a.response)
        .then(a.t.cmp(&b.t))
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
}

/// Strict 26-neighbourhood maxima of `response` inside the core frames.
fn local_maxima(
    response: &Volume,
    offset: usize,
    span: WindowSpan,
    clip_len: usize,
    cfg: &StipConfig,
) -> Vec<InterestPoint> {
    let (nt, h, w) = response.shape();
    let m = cfg.border_margin();
    if h <= 2 * m || w <= 2 * m {
        return Vec::new();
    }
    let t_lo = span.core.0.max(m);
    let t_hi = span.core.1.min(clip_len.saturating_sub(m));
    let mut out = Vec::new();
    for gt in t_lo..t_hi {
        let t = gt - offset;
        for y in m..h - m {
            for x in m..w - m {
                let r = response.get(t, y, x);
                if !(r > cfg.min_response) {
                    continue;
                }
                let mut is_max = true;
                'nb: for dt in -1i64..=1 {
                    let tt = t as i64 + dt;
                    if tt < 0 || tt as usize >= nt {
                        continue;
                    }
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            if dt == 0 && dy == 0 && dx == 0 {
                                continue;
                            }
                            let v = response.get(tt as usize, (y as i64 + dy) as usize, (x as i64 + dx) as usize);
                            if v >= r {
                                is_max = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if is_max {
                    out.push(InterestPoint {
                        x,
                        y,
                        t: gt,
                        response: r,
                    });
                }
            }
        }
    }
    out.sort_by(rank);
    out.truncate(cfg.top_k);
    out
}

/// Interest points per temporal window, each list sorted by descending response.
pub fn detect_stips(clip: &VideoClip, cfg: &StipConfig) -> Result<Vec<Vec<InterestPoint>>> {
    cfg.validate()?;
    let spans = window_spans(clip.len(), clip.fps(), cfg);
    Ok(spans
        .par_iter()
        .map(|&span| {
            let vol = clip.volume_range(span.support.0, span.support.1);
            let field = moment_field(&vol, cfg);
            let response = harris_response(&field, cfg);
            local_maxima(&response, span.support.0, span, clip.len(), cfg)
        })
        .collect())
}

/// CSV export `window,t,x,y,response`.
pub fn points_to_csv(windows: &[Vec<InterestPoint>]) -> String {
    let mut s = String::from("window,t,x,y,response\n");
    for (w, pts) in windows.iter().enumerate() {
        for p in pts {
            let _ = writeln!(s, "{w},{},{},{},{}", p.t, p.x, p.y, p.response);
        }
    }
    s
}

/// Parses [`points_to_csv`] output; `windows` fixes the number of window lists.
pub fn points_from_csv(text: &str, windows: usize) -> Result<Vec<Vec<InterestPoint>>> {
    let mut out = vec![Vec::new(); windows];
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad("expected 5 columns"));
        }
        let w: usize = f[0].parse().map_err(|_| bad("window"))?;
        let p = InterestPoint {
            t: f[1].parse().map_err(|_| bad("t"))?,
            x: f[2].parse().map_err(|_| bad("x"))?,
            y: f[3].parse().map_err(|_| bad("y"))?,
            response: f[4].parse().map_err(|_| bad("response"))?,
        };
        out.get_mut(w).ok_or_else(|| bad("window out of range"))?.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{synth_phantom, Frame, PhantomScript};

    fn clip_from(vol_fn: impl Fn(usize, usize, usize) -> f32, t: usize, h: usize, w: usize) -> VideoClip {
        let frames = (0..t)
            .map(|tt| Frame::from_fn(h, w, |y, x| vol_fn(tt, y, x)))
            .collect();
        VideoClip::new("test", 10.0, frames).unwrap()
    }

    #[test]
    fn constant_clip_has_zero_moments_and_no_points() {
        let clip = clip_from(|_, _, _| 0.4, 12, 16, 16);
        let cfg = StipConfig::default();
        let f = second_moment_volume(&clip, &cfg).unwrap();
        for v in [&f.xx, &f.xy, &f.xt, &f.yy, &f.yt, &f.tt] {
            assert!(v.data().iter().all(|&x| x.abs() < 1e-15));
        }
        let pts = detect_stips(&clip, &cfg).unwrap();
        assert!(pts.iter().all(Vec::is_empty));
    }

    #[test]
    fn ramp_along_x_only_fills_xx() {
        let clip = clip_from(|_, _, x| x as f32 / 20.0, 8, 10, 16);
        let f = second_moment_volume(&clip, &StipConfig::default()).unwrap();
        let (t, h, w) = f.shape();
        for tt in 0..t {
            for y in 0..h {
                for x in 0..w {
                    let m = f.matrix(tt, y, x);
                    let scale = m[0][0].abs().max(1e-300);
                    for (i, row) in m.iter().enumerate() {
                        for (j, v) in row.iter().enumerate() {
                            if (i, j) != (0, 0) {
                                assert!(v.abs() <= 1e-6 * scale);
                            }
                        }
                    }
                }
            }
        }
        assert!(f.xx.get(4, 5, 8) > 0.0);
    }

    #[test]
    fn too_short_clip_errors() {
        let clip = clip_from(|_, _, _| 0.0, 2, 8, 8);
        assert!(second_moment_volume(&clip, &StipConfig::default()).is_err());
    }

    #[test]
    fn identity_moment_gives_closed_form_raw_response() {
        let mut f = MomentField::zeros(5, 5, 5);
        f.set_matrix(2, 2, 2, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let k = 0.005;
        let raw = harris_raw(&f, k);
        assert!((raw.get(2, 2, 2) - (1.0 - 27.0 * k)).abs() < 1e-15);
        let zero = harris_response(&MomentField::zeros(4, 4, 4), &StipConfig::default());
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn response_smoothing_preserves_mass() {
        let mut delta = Volume::zeros(15, 15, 15);
        delta.set(7, 7, 7, 2.5);
        let s = smooth_response(&delta, 1.0, 3);
        assert!((s.sum() - 2.5).abs() < 1e-4);
    }

    #[test]
    fn windows_partition_the_clip() {
        let spans = window_spans(300, 30.0, &StipConfig::default());
        assert_eq!(spans.len(), 5);
        let mut next = 0;
        for s in &spans {
            assert_eq!(s.core.0, next);
            next = s.core.1;
            assert!(s.support.0 <= s.core.0 && s.support.1 >= s.core.1);
        }
        assert_eq!(next, 300);
        assert_eq!(spans[1].support, (0, 180));
    }

    #[test]
    fn phantom_detections_are_bounded_and_sorted() {
        let (clip, _, _) = synth_phantom(&PhantomScript {
            duration_s: 3.0,
            ..PhantomScript::novice(11)
        })
        .unwrap();
        let cfg = StipConfig {
            top_k: 40,
            ..Default::default()
        };
        let wins = detect_stips(&clip, &cfg).unwrap();
        assert!(wins.iter().any(|w| !w.is_empty()));
        for w in &wins {
            assert!(w.len() <= 40);
            assert!(w.windows(2).all(|p| p[0].response >= p[1].response));
        }
        let more = detect_stips(&clip, &StipConfig { top_k: 80, ..cfg }).unwrap();
        for (a, b) in wins.iter().zip(&more) {
            assert_eq!(&b[..a.len()], &a[..]);
        }
        let csv = points_to_csv(&wins);
        assert_eq!(points_from_csv(&csv, wins.len()).unwrap(), wins);
    }
}
