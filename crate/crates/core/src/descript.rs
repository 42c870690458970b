//! Dense optical flow and the HoG / HoF / MBH local descriptors.
//!
//! Descriptor layout per interest point (513 values):
//!
//! | block | patch        | grid          | bins                  | size |
//! |-------|--------------|---------------|-----------------------|------|
//! | HoG   | 9×9×9        | 3×3 × depth   | 8 unsigned            | 72   |
//! | HoF   | 17×17×17     | 3×3 × depth   | 8 signed + no-motion  | 81   |
//! | MBH   | 17×17 (1 px) | 5×5           | 8 unsigned, u then v  | 400  |
//!
//! Cells are stored row-major (`cell_y * grid + cell_x`), bins innermost.
//! Samples falling outside the clip contribute nothing.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::media::{Frame, VideoClip};
use crate::stip::InterestPoint;
use crate::{Error, Result};

pub const HOG_LEN: usize = 72;
pub const HOF_LEN: usize = 81;
pub const MBH_LEN: usize = 400;
pub const DESCRIPTOR_LEN: usize = HOG_LEN + HOF_LEN + MBH_LEN;

/// Flow magnitude (px/frame) below which a HoF sample counts as "no motion".
pub const NO_MOTION_THRESHOLD: f64 = 0.05;

const LK_WINDOW_RADIUS: i64 = 2;
const LK_LEVELS: usize = 3;
const LK_ITERATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            u: vec![0.0; height * width],
            v: vec![0.0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(height, width);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(y, x);
                out.u[y * width + x] = u;
                out.v[y * width + x] = v;
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }
}

#[derive(Debug, Clone)]
struct Image {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Image {
    fn from_frame(f: &Frame) -> Self {
        Self {
            h: f.height(),
            w: f.width(),
            data: f.data().iter().map(|&v| v as f64).collect(),
        }
    }

    #[inline]
    fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.w + x]
    }

    /// Bilinear sample with edge clamping.
    fn sample(&self, y: f64, x: f64) -> f64 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(y0, x0) * (1.0 - fx) + self.at(y0, x1) * fx;
        let bot = self.at(y1, x0) * (1.0 - fx) + self.at(y1, x1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    fn gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let mut gx = vec![0.0; self.data.len()];
        let mut gy = vec![0.0; self.data.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                let (gxv, gyv) = central_gradient(self.h, self.w, y, x, |yy, xx| self.at(yy, xx));
                gx[y * self.w + x] = gxv;
                gy[y * self.w + x] = gyv;
            }
        }
        (gx, gy)
    }

    /// 5-tap binomial blur then 2× decimation.
    fn pyr_down(&self) -> Image {
        const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let clampi = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
        let mut tmp = vec![0.0; self.data.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                tmp[y * self.w + x] = (0..5)
                    .map(|k| K[k] * self.at(y, clampi(x as i64 + k as i64 - 2, self.w)))
                    .sum();
            }
        }
        let h2 = self.h.div_ceil(2);
        let w2 = self.w.div_ceil(2);
        let mut data = Vec::with_capacity(h2 * w2);
        for y in 0..h2 {
            for x in 0..w2 {
                let sy = 2 * y;
                let sx = 2 * x;
                data.push(
                    (0..5)
                        .map(|k| K[k] * tmp[clampi(sy as i64 + k as i64 - 2, self.h) * self.w + sx])
                        .sum(),
                );
            }
        }
        Image { h: h2, w: w2, data }
    }
}

/// Central differences, one-sided at the image border.
#[inline]
fn central_gradient(h: usize, w: usize, y: usize, x: usize, f: impl Fn(usize, usize) -> f64) -> (f64, f64) {
    let gx = if w < 2 {
        0.0
    } else if x == 0 {
        f(y, 1) - f(y, 0)
    } else if x == w - 1 {
        f(y, w - 1) - f(y, w - 2)
    } else {
        (f(y, x + 1) - f(y, x - 1)) / 2.0
    };
    let gy = if h < 2 {
        0.0
    } else if y == 0 {
        f(1, x) - f(0, x)
    } else if y == h - 1 {
        f(h - 1, x) - f(h - 2, x)
    } else {
        (f(y + 1, x) - f(y - 1, x)) / 2.0
    };
    (gx, gy)
}

/// Pyramidal iterative Lucas–Kanade flow (5×5 windows, 3 levels, 3 iterations per level).
///
/// The flow `(u, v)` at `p` satisfies `b(p + (u, v)) ≈ a(p)`.
pub fn optical_flow(a: &Frame, b: &Frame) -> Result<FlowField> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::mismatch(
            format!("{}x{}", a.height(), a.width()),
            format!("{}x{}", b.height(), b.width()),
        ));
    }
    let mut pa = vec![Image::from_frame(a)];
    let mut pb = vec![Image::from_frame(b)];
    while pa.len() < LK_LEVELS && pa.last().unwrap().h >= 8 && pa.last().unwrap().w >= 8 {
        let na = pa.last().unwrap().pyr_down();
        let nb = pb.last().unwrap().pyr_down();
        pa.push(na);
        pb.push(nb);
    }

    let mut flow: Option<FlowField> = None;
    for level in (0..pa.len()).rev() {
        let (ia, ib) = (&pa[level], &pb[level]);
        let mut cur = match flow {
            None => FlowField::zeros(ia.h, ia.w),
            Some(prev) => FlowField::from_fn(ia.h, ia.w, |y, x| {
                let (u, v) = prev.at((y / 2).min(prev.height - 1), (x / 2).min(prev.width - 1));
                (2.0 * u, 2.0 * v)
            }),
        };
        lk_refine(ia, ib, &mut cur);
        flow = Some(cur);
    }
    Ok(flow.expect("at least one pyramid level"))
}

fn lk_refine(a: &Image, b: &Image, flow: &mut FlowField) {
    let (gx, gy) = a.gradients();
    let (h, w) = (a.h as i64, a.w as i64);
    for y in 0..a.h {
        for x in 0..a.w {
            let mut window = Vec::with_capacity(25);
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for dy in -LK_WINDOW_RADIUS..=LK_WINDOW_RADIUS {
                for dx in -LK_WINDOW_RADIUS..=LK_WINDOW_RADIUS {
                    let (qy, qx) = (y as i64 + dy, x as i64 + dx);
                    if qy < 0 || qx < 0 || qy >= h || qx >= w {
                        continue;
                    }
                    let i = (qy * w + qx) as usize;
                    sxx += gx[i] * gx[i];
                    sxy += gx[i] * gy[i];
                    syy += gy[i] * gy[i];
                    window.push((qy as f64, qx as f64, i));
                }
            }
            let det = sxx * syy - sxy * sxy;
            let trace = sxx + syy;
            if !(det > 1e-12 && det > 1e-6 * trace * trace) {
                continue;
            }
            let idx = y * a.w + x;
            let (mut u, mut v) = (flow.u[idx], flow.v[idx]);
            for _ in 0..LK_ITERATIONS {
                let (mut bx, mut by) = (0.0, 0.0);
                for &(qy, qx, i) in &window {
                    let it = b.sample(qy + v, qx + u) - a.data[i];
                    bx -= gx[i] * it;
                    by -= gy[i] * it;
                }
                let du = (syy * bx - sxy * by) / det;
                let dv = (sxx * by - sxy * bx) / det;
                u += du;
                v += dv;
                if du.abs() < 1e-4 && dv.abs() < 1e-4 {
                    break;
                }
            }
            flow.u[idx] = u;
            flow.v[idx] = v;
        }
    }
}

/// One 513-d descriptor; blocks are views into the concatenated vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    full: Vec<f64>,
}

impl DescriptorVector {
    pub fn from_blocks(hog: &[f64], hof: &[f64], mbh: &[f64]) -> Result<Self> {
        if hog.len() != HOG_LEN || hof.len() != HOF_LEN || mbh.len() != MBH_LEN {
            return Err(Error::mismatch(
                "72/81/400",
                format!("{}/{}/{}", hog.len(), hof.len(), mbh.len()),
            ));
        }
        let mut full = Vec::with_capacity(DESCRIPTOR_LEN);
        full.extend_from_slice(hog);
        full.extend_from_slice(hof);
        full.extend_from_slice(mbh);
        Ok(Self { full })
    }

    pub fn full(&self) -> &[f64] {
        &self.full
    }

    pub fn hog(&self) -> &[f64] {
        &self.full[..HOG_LEN]
    }

    pub fn hof(&self) -> &[f64] {
        &self.full[HOG_LEN..HOG_LEN + HOF_LEN]
    }

    pub fn mbh(&self) -> &[f64] {
        &self.full[HOG_LEN + HOF_LEN..]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.full
    }
}

fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Adds `mass` at orientation `theta` with linear interpolation between the two nearest bins.
/// Unsigned histograms centre bin `b` at `(b + 0.5) * π/8`; signed ones at `b * π/4`.
#[inline]
fn vote(hist: &mut [f64], theta: f64, mass: f64, signed: bool) {
    let (period, offset) = if signed { (2.0 * PI, 0.0) } else { (PI, 0.5) };
    let pos = theta.rem_euclid(period) / (period / 8.0) - offset;
    let b0 = pos.floor();
    let frac = pos - b0;
    let b0 = (b0 as i64).rem_euclid(8) as usize;
    hist[b0] += mass * (1.0 - frac);
    hist[(b0 + 1) % 8] += mass * frac;
}

#[inline]
fn cell_of(offset: i64, radius: i64, grid: usize) -> usize {
    ((offset + radius) as usize * grid) / (2 * radius as usize + 1)
}

/// Per-clip descriptor state; flow fields are computed on first use.
pub struct Describer<'a> {
    clip: &'a VideoClip,
    flows: Vec<OnceLock<FlowField>>,
}

impl<'a> Describer<'a> {
    pub fn new(clip: &'a VideoClip) -> Self {
        Self {
            clip,
            flows: (0..clip.len() - 1).map(|_| OnceLock::new()).collect(),
        }
    }

    /// Uses caller-supplied flow fields (`flows[i]` maps frame `i` to `i + 1`).
    pub fn with_flows(clip: &'a VideoClip, flows: Vec<FlowField>) -> Result<Self> {
        if flows.len() != clip.len() - 1 {
            return Err(Error::mismatch(clip.len() - 1, flows.len()));
        }
        Ok(Self {
            clip,
            flows: flows
                .into_iter()
                .map(|f| {
                    let cell = OnceLock::new();
                    let _ = cell.set(f);
                    cell
                })
                .collect(),
        })
    }

    pub fn flow(&self, i: usize) -> &FlowField {
        self.flows[i].get_or_init(|| {
            let frames = self.clip.frames();
            optical_flow(&frames[i], &frames[i + 1]).expect("clip frames share dimensions")
        })
    }

    pub fn hog(&self, p: &InterestPoint) -> Vec<f64> {
        const R: i64 = 4;
        let (h, w) = (self.clip.height(), self.clip.width());
        let mut out = vec![0.0; HOG_LEN];
        for dt in -R..=R {
            let t = p.t as i64 + dt;
            if t < 0 || t as usize >= self.clip.len() {
                continue;
            }
            let frame = &self.clip.frames()[t as usize];
            for dy in -R..=R {
                let y = p.y as i64 + dy;
                if y < 0 || y as usize >= h {
                    continue;
                }
                for dx in -R..=R {
                    let x = p.x as i64 + dx;
                    if x < 0 || x as usize >= w {
                        continue;
                    }
                    let (gx, gy) = central_gradient(h, w, y as usize, x as usize, |yy, xx| frame.get(yy, xx) as f64);
                    let mag = gx.hypot(gy);
                    if mag == 0.0 {
                        continue;
                    }
                    let cell = cell_of(dy, R, 3) * 3 + cell_of(dx, R, 3);
                    vote(&mut out[cell * 8..cell * 8 + 8], gy.atan2(gx), mag, false);
                }
            }
        }
        l2_normalize(&mut out);
        out
    }

    pub fn hof(&self, p: &InterestPoint) -> Vec<f64> {
        const R: i64 = 8;
        let (h, w) = (self.clip.height(), self.clip.width());
        let mut out = vec![0.0; HOF_LEN];
        for dt in -R..=R {
            let f = p.t as i64 + dt;
            if f < 0 || f as usize >= self.flows.len() {
                continue;
            }
            let flow = self.flow(f as usize);
            for dy in -R..=R {
                let y = p.y as i64 + dy;
                if y < 0 || y as usize >= h {
                    continue;
                }
                for dx in -R..=R {
                    let x = p.x as i64 + dx;
                    if x < 0 || x as usize >= w {
                        continue;
                    }
                    let (u, v) = flow.at(y as usize, x as usize);
                    let cell = cell_of(dy, R, 3) * 3 + cell_of(dx, R, 3);
                    let hist = &mut out[cell * 9..cell * 9 + 9];
                    let mag = u.hypot(v);
                    if mag < NO_MOTION_THRESHOLD {
                        hist[8] += 1.0;
                    } else {
                        vote(&mut hist[..8], v.atan2(u), mag, true);
                    }
                }
            }
        }
        l2_normalize(&mut out);
        out
    }

    pub fn mbh(&self, p: &InterestPoint) -> Vec<f64> {
        const R: i64 = 8;
        let (h, w) = (self.clip.height(), self.clip.width());
        let flow = self.flow(p.t.min(self.flows.len() - 1));
        let (mut hu, mut hv) = (vec![0.0; MBH_LEN / 2], vec![0.0; MBH_LEN / 2]);
        for dy in -R..=R {
            let y = p.y as i64 + dy;
            if y < 0 || y as usize >= h {
                continue;
            }
            for dx in -R..=R {
                let x = p.x as i64 + dx;
                if x < 0 || x as usize >= w {
                    continue;
                }
                let (y, x) = (y as usize, x as usize);
                let cell = cell_of(dy, R, 5) * 5 + cell_of(dx, R, 5);
                let (ux, uy) = central_gradient(h, w, y, x, |yy, xx| flow.at(yy, xx).0);
                let (vx, vy) = central_gradient(h, w, y, x, |yy, xx| flow.at(yy, xx).1);
                let mu = ux.hypot(uy);
                if mu > 0.0 {
                    vote(&mut hu[cell * 8..cell * 8 + 8], uy.atan2(ux), mu, false);
                }
                let mv = vx.hypot(vy);
                if mv > 0.0 {
                    vote(&mut hv[cell * 8..cell * 8 + 8], vy.atan2(vx), mv, false);
                }
            }
        }
        l2_normalize(&mut hu);
        l2_normalize(&mut hv);
        hu.extend(hv);
        hu
    }

    pub fn describe(&self, p: &InterestPoint) -> DescriptorVector {
        DescriptorVector::from_blocks(&self.hog(p), &self.hof(p), &self.mbh(p))
            .expect("block lengths are fixed")
    }
}

pub fn hog_descriptor(clip: &VideoClip, point: &InterestPoint) -> Vec<f64> {
    Describer::new(clip).hog(point)
}

pub fn hof_descriptor(clip: &VideoClip, point: &InterestPoint) -> Vec<f64> {
    Describer::new(clip).hof(point)
}

pub fn mbh_descriptor(clip: &VideoClip, point: &InterestPoint) -> Vec<f64> {
    Describer::new(clip).mbh(point)
}

/// One descriptor per point, in input order.
pub fn describe_points(clip: &VideoClip, points: &[InterestPoint]) -> Vec<DescriptorVector> {
    if points.is_empty() {
        return Vec::new();
    }
    let describer = Describer::new(clip);
    // Materialize every needed flow once so the per-point work is read-only.
    let mut needed: Vec<usize> = points
        .iter()
        .flat_map(|p| {
            let lo = p.t.saturating_sub(8);
            let hi = (p.t + 8).min(clip.len() - 2);
            lo..=hi
        })
        .collect();
    needed.sort_unstable();
    needed.dedup();
    needed.par_iter().for_each(|&i| {
        describer.flow(i);
    });
    points.par_iter().map(|p| describer.describe(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn texture(h: usize, w: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..h * w).map(|_| rng.gen()).collect();
        // light blur for a smooth, well-conditioned texture
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                let mut c = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                        if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                            s += raw[yy as usize * w + xx as usize];
                            c += 1.0;
                        }
                    }
                }
                out[y * w + x] = s / c;
            }
        }
        out
    }

    fn shifted_pair(dx: i64, dy: i64) -> (Frame, Frame) {
        let (h, w) = (48usize, 48usize);
        let tex = texture(h + 20, w + 20, 3);
        let tw = w + 20;
        let a = Frame::from_fn(h, w, |y, x| tex[(y + 10) * tw + x + 10] as f32);
        let b = Frame::from_fn(h, w, |y, x| {
            tex[((y as i64 + 10 - dy) as usize) * tw + (x as i64 + 10 - dx) as usize] as f32
        });
        (a, b)
    }

    fn interior_median(vals: impl Fn(usize, usize) -> f64, h: usize, w: usize) -> f64 {
        let mut v: Vec<f64> = (8..h - 8).flat_map(|y| (8..w - 8).map(move |x| (y, x))).map(|(y, x)| vals(y, x)).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn identical_frames_have_no_flow() {
        let (a, _) = shifted_pair(0, 0);
        let f = optical_flow(&a, &a).unwrap();
        assert!(f.u().iter().chain(f.v()).all(|d| d.abs() < 1e-3));
    }

    #[test]
    fn recovers_horizontal_and_vertical_shifts() {
        let (a, b) = shifted_pair(1, 0);
        let f = optical_flow(&a, &b).unwrap();
        let mu = interior_median(|y, x| f.at(y, x).0, 48, 48);
        let mv = interior_median(|y, x| f.at(y, x).1, 48, 48);
        assert!((0.8..=1.2).contains(&mu), "median u {mu}");
        assert!((-0.2..=0.2).contains(&mv), "median v {mv}");

        let (a, b) = shifted_pair(0, 2);
        let f = optical_flow(&a, &b).unwrap();
        let mv = interior_median(|y, x| f.at(y, x).1, 48, 48);
        assert!((1.8..=2.2).contains(&mv), "median v {mv}");
    }

    #[test]
    fn mismatched_frames_error() {
        let a = Frame::from_fn(4, 4, |_, _| 0.0);
        let b = Frame::from_fn(4, 5, |_, _| 0.0);
        assert!(optical_flow(&a, &b).is_err());
    }

    fn clip_of(n: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f32) -> VideoClip {
        VideoClip::new("t", 10.0, (0..n).map(|t| Frame::from_fn(h, w, |y, x| f(t, y, x))).collect()).unwrap()
    }

    fn pt(t: usize, y: usize, x: usize) -> InterestPoint {
        InterestPoint { x, y, t, response: 1.0 }
    }

    #[test]
    fn constant_patch_has_zero_hog() {
        let clip = clip_of(12, 16, 16, |_, _, _| 0.3);
        assert!(hog_descriptor(&clip, &pt(6, 8, 8)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_concentrates_in_horizontal_bins() {
        let clip = clip_of(12, 16, 16, |_, _, x| if x < 8 { 0.1 } else { 0.9 });
        let d = hog_descriptor(&clip, &pt(6, 8, 8));
        // oracle: gradient direction is 0 rad, which splits evenly between bins 7 and 0
        let total: f64 = d.iter().sum();
        let near: f64 = d.chunks(8).map(|c| c[0] + c[7]).sum();
        assert!(near / total >= 0.8);
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_permutes_cells_and_shifts_bins() {
        let n = 15;
        let tex = texture(n, n, 17);
        let clip = clip_of(11, n, n, |t, y, x| (tex[y * n + x] * (1.0 + 0.01 * t as f64)) as f32);
        // rot90: new(r, c) = old(c, n - 1 - r)
        let rot = clip_of(11, n, n, |t, y, x| (tex[x * n + (n - 1 - y)] * (1.0 + 0.01 * t as f64)) as f32);
        let p = pt(5, 7, 7);
        let a = hog_descriptor(&clip, &p);
        let b = hog_descriptor(&rot, &p);
        for i in 0..3 {
            for j in 0..3 {
                let (oi, oj) = (j, 2 - i);
                for bin in 0..8 {
                    let nb = b[(i * 3 + j) * 8 + (bin + 4) % 8];
                    let ob = a[(oi * 3 + oj) * 8 + bin];
                    assert!((nb - ob).abs() < 1e-5, "cell ({i},{j}) bin {bin}: {nb} vs {ob}");
                }
            }
        }
    }

    #[test]
    fn static_clip_hof_is_all_no_motion() {
        let n = 24;
        let tex = texture(n, n, 2);
        let clip = clip_of(20, n, n, |_, y, x| tex[y * n + x] as f32);
        let d = hof_descriptor(&clip, &pt(10, 12, 12));
        assert_eq!(d.len(), HOF_LEN);
        for cell in d.chunks(9) {
            assert!(cell[8] > 0.0);
            assert!(cell[..8].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn uniform_rightward_flow_lands_in_zero_degree_bin() {
        let clip = clip_of(20, 24, 24, |_, _, _| 0.5);
        let flows = (0..19).map(|_| FlowField::from_fn(24, 24, |_, _| (1.0, 0.0))).collect();
        let d = Describer::with_flows(&clip, flows).unwrap();
        let hof = d.hof(&pt(10, 12, 12));
        let total: f64 = hof.iter().sum();
        for cell in hof.chunks(9) {
            assert!(cell[0] > 0.0);
        }
        let zero: f64 = hof.chunks(9).map(|c| c[0]).sum();
        assert!(zero / total >= 0.9);
    }

    #[test]
    fn mbh_cancels_constant_flow_and_sees_shear() {
        let clip = clip_of(4, 24, 24, |_, _, _| 0.5);
        let constant = (0..3).map(|_| FlowField::from_fn(24, 24, |_, _| (0.7, -0.3))).collect();
        let d = Describer::with_flows(&clip, constant).unwrap();
        let m = d.mbh(&pt(1, 12, 12));
        assert_eq!(m.len(), MBH_LEN);
        assert!(m.iter().all(|&v| v == 0.0));

        let shear = (0..3).map(|_| FlowField::from_fn(24, 24, |y, _| (0.1 * y as f64, 0.0))).collect();
        let d = Describer::with_flows(&clip, shear).unwrap();
        let m = d.mbh(&pt(1, 12, 12));
        let un: f64 = m[..200].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((un - 1.0).abs() < 1e-9);
        assert!(m[200..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn describe_points_composes_blocks_in_order() {
        let n = 20;
        let tex = texture(n + 12, n + 12, 4);
        let w = n + 12;
        let clip = clip_of(14, n, n, |t, y, x| tex[(y + 4) * w + x + t / 2] as f32);
        assert!(describe_points(&clip, &[]).is_empty());
        let pts = vec![pt(3, 5, 6), pt(7, 10, 10), pt(13, 19, 0)];
        let ds = describe_points(&clip, &pts);
        assert_eq!(ds.len(), 3);
        for (d, p) in ds.iter().zip(&pts) {
            assert_eq!(d.hog(), &hog_descriptor(&clip, p)[..]);
            assert_eq!(d.hof(), &hof_descriptor(&clip, p)[..]);
            assert_eq!(d.mbh(), &mbh_descriptor(&clip, p)[..]);
            assert_eq!(d.full().len(), DESCRIPTOR_LEN);
        }
    }
}
