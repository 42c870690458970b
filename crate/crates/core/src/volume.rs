//! Dense `t × y × x` scalar volumes and separable filtering.

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    t: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    T,
    Y,
    X,
}

impl Volume {
    pub fn zeros(t: usize, h: usize, w: usize) -> Self {
        Self {
            t,
            h,
            w,
            data: vec![0.0; t * h * w],
        }
    }

    pub fn from_vec(t: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), t * h * w, "volume payload does not match shape");
        Self { t, h, w, data }
    }

    pub fn from_fn(t: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(t * h * w);
        for tt in 0..t {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(tt, y, x));
                }
            }
        }
        Self { t, h, w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize) -> usize {
        (t * self.h + y) * self.w + x
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(t, y, x)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, y: usize, x: usize, v: f64) {
        let i = self.index(t, y, x);
        self.data[i] = v;
    }

    /// Value with out-of-range coordinates reading as zero.
    #[inline]
    pub fn get_or_zero(&self, t: i64, y: i64, x: i64) -> f64 {
        if t < 0 || y < 0 || x < 0 || t as usize >= self.t || y as usize >= self.h || x as usize >= self.w {
            0.0
        } else {
            self.get(t as usize, y as usize, x as usize)
        }
    }

    fn stride(&self, axis: Axis) -> (usize, usize) {
        match axis {
            Axis::T => (self.h * self.w, self.t),
            Axis::Y => (self.w, self.h),
            Axis::X => (1, self.w),
        }
    }

    /// Correlates with a symmetric odd-length kernel along `axis`, replicating edge values.
    pub fn convolve_axis(&self, axis: Axis, kernel: &[f64]) -> Volume {
        assert!(kernel.len() % 2 == 1, "kernel length must be odd");
        let r = (kernel.len() / 2) as i64;
        let (stride, len) = self.stride(axis);
        let mut out = vec![0.0; self.data.len()];
        let last = len as i64 - 1;
        for base in self.lines(axis) {
            for i in 0..len as i64 {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let j = (i + k as i64 - r).clamp(0, last) as usize;
                    acc += kv * self.data[base + j * stride];
                }
                out[base + i as usize * stride] = acc;
            }
        }
        Volume {
            data: out,
            ..*self
        }
    }

    /// Like [`Volume::convolve_axis`] but treating samples outside the volume as zero.
    pub fn convolve_axis_zero(&self, axis: Axis, kernel: &[f64]) -> Volume {
        let r = (kernel.len() / 2) as i64;
        let (stride, len) = self.stride(axis);
        let mut out = vec![0.0; self.data.len()];
        for base in self.lines(axis) {
            for i in 0..len as i64 {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let j = i + k as i64 - r;
                    if j >= 0 && j < len as i64 {
                        acc += kv * self.data[base + j as usize * stride];
                    }
                }
                out[base + i as usize * stride] = acc;
            }
        }
        Volume {
            data: out,
            ..*self
        }
    }

    /// Central difference along `axis`; one-sided at the edges.
    pub fn derivative(&self, axis: Axis) -> Volume {
        let (stride, len) = self.stride(axis);
        let mut out = vec![0.0; self.data.len()];
        if len < 2 {
            return Volume {
                data: out,
                ..*self
            };
        }
        for base in self.lines(axis) {
            for i in 0..len {
                let (a, b, d) = if i == 0 {
                    (0, 1, 1.0)
                } else if i == len - 1 {
                    (len - 2, len - 1, 1.0)
                } else {
                    (i - 1, i + 1, 2.0)
                };
                out[base + i * stride] = (self.data[base + b * stride] - self.data[base + a * stride]) / d;
            }
        }
        Volume {
            data: out,
            ..*self
        }
    }

    /// Base offsets of every 1-D line along `axis`.
    fn lines(&self, axis: Axis) -> Vec<usize> {
        let mut v = Vec::new();
        match axis {
            Axis::T => {
                for y in 0..self.h {
                    for x in 0..self.w {
                        v.push(y * self.w + x);
                    }
                }
            }
            Axis::Y => {
                for t in 0..self.t {
                    for x in 0..self.w {
                        v.push(t * self.h * self.w + x);
                    }
                }
            }
            Axis::X => {
                for t in 0..self.t {
                    for y in 0..self.h {
                        v.push((t * self.h + y) * self.w);
                    }
                }
            }
        }
        v
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Normalized sampled Gaussian with the given variance and radius.
pub fn gaussian_kernel(variance: f64, radius: usize) -> Vec<f64> {
    let r = radius as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * variance)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(4.0, 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[2]);
        assert!(k[1] > k[0]);
    }

    #[test]
    fn derivative_of_ramp_is_slope() {
        let v = Volume::from_fn(2, 3, 5, |_, _, x| 2.0 * x as f64);
        let d = v.derivative(Axis::X);
        assert!(d.data().iter().all(|&g| (g - 2.0).abs() < 1e-12));
        assert!(v.derivative(Axis::Y).data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn replicate_convolution_preserves_constants() {
        let v = Volume::from_fn(4, 4, 4, |_, _, _| 3.0);
        let k = gaussian_kernel(1.0, 3);
        let s = v.convolve_axis(Axis::T, &k).convolve_axis(Axis::Y, &k);
        assert!(s.data().iter().all(|&g| (g - 3.0).abs() < 1e-12));
    }
}
