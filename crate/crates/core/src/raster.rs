//! Small in-memory pixel grids.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayGrid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayGrid {
    pub fn new(width: usize, height: usize) -> Self {
        GrayGrid { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayGrid { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn blurred(&self, sigma: f64) -> GrayGrid {
        let k = gaussian_kernel(sigma);
        let tmp = convolve_rows(&self.data, self.width, self.height, &k);
        let out = convolve_cols(&tmp, self.width, self.height, &k);
        GrayGrid { width: self.width, height: self.height, data: out }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbGrid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbGrid {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    pub fn luminance(&self) -> GrayGrid {
        GrayGrid { width: self.width, height: self.height, data: self.data.iter().map(|&p| luma(p)).collect() }
    }

    pub fn mean_luminance(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&p| luma(p) as f64).sum::<f64>() / self.data.len() as f64
    }
}

#[inline]
pub fn luma(p: [u8; 3]) -> f32 {
    0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32
}

/// Normalized 1-D Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k.into_iter().map(|v| v as f32).collect()
}

/// Horizontal pass with clamped borders.
pub fn convolve_rows(src: &[f32], w: usize, h: usize, k: &[f32]) -> Vec<f32> {
    let r = k.len() / 2;
    let mut out = vec![0.0f32; w * h];
    let mut padded = vec![0.0f32; w + 2 * r];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        padded[..r].fill(row[0]);
        padded[r..r + w].copy_from_slice(row);
        padded[r + w..].fill(row[w - 1]);
        let dst = &mut out[y * w..(y + 1) * w];
        for (i, &kv) in k.iter().enumerate() {
            for (d, v) in dst.iter_mut().zip(&padded[i..i + w]) {
                *d += kv * v;
            }
        }
    }
    out
}

/// Vertical pass with clamped borders.
pub fn convolve_cols(src: &[f32], w: usize, h: usize, k: &[f32]) -> Vec<f32> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0f32; w * h];
    for (i, &kv) in k.iter().enumerate() {
        for y in 0..h {
            let yy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
            let (dst, s) = (&mut out[y * w..(y + 1) * w], &src[yy * w..(yy + 1) * w]);
            for (d, v) in dst.iter_mut().zip(s) {
                *d += kv * v;
            }
        }
    }
    out
}
