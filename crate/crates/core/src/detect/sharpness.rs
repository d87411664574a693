//! Blur measure and best-frame selection.

use crate::error::{Error, Result};
use crate::raster::GrayGrid;

/// Variance of the 4-neighbour Laplacian response over the valid interior.
/// Higher means sharper.
pub fn laplacian_variance(img: &GrayGrid) -> Result<f64> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall { width: w, height: h });
    }
    let n = ((w - 2) * (h - 2)) as f64;
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    let d = &img.data;
    let mut resp = vec![0f32; w - 2];
    for y in 1..h - 1 {
        let (up, row, down) = (&d[(y - 1) * w..y * w], &d[y * w..(y + 1) * w], &d[(y + 1) * w..(y + 2) * w]);
        for (x, r) in resp.iter_mut().enumerate() {
            *r = up[x + 1] + down[x + 1] + row[x] + row[x + 2] - 4.0 * row[x + 1];
        }
        // eight independent lanes keep the reduction vectorizable
        let (mut s, mut q) = ([0f32; 8], [0f32; 8]);
        let chunks = resp.chunks_exact(8);
        let tail = chunks.remainder();
        for c in chunks {
            for i in 0..8 {
                s[i] += c[i];
                q[i] += c[i] * c[i];
            }
        }
        sum += s.iter().map(|&v| v as f64).sum::<f64>() + tail.iter().map(|&v| v as f64).sum::<f64>();
        sum_sq += q.iter().map(|&v| v as f64).sum::<f64>() + tail.iter().map(|&v| (v * v) as f64).sum::<f64>();
    }
    let mean = sum / n;
    Ok((sum_sq / n - mean * mean).max(0.0))
}

/// A frame waiting in the selector queue.
#[derive(Debug, Clone, Copy)]
pub struct QueuedFrame<'a> {
    pub timestamp: f64,
    pub gray: &'a GrayGrid,
}

/// Picks the `budget` sharpest frames. Equal scores prefer the earlier
/// timestamp. Returned indices are in queue order.
pub fn select_images(queue: &[QueuedFrame<'_>], budget: usize) -> Result<Vec<usize>> {
    let scores = queue.iter().map(|f| laplacian_variance(f.gray)).collect::<Result<Vec<_>>>()?;
    Ok(select_by_score(queue.iter().map(|f| f.timestamp).zip(scores), budget))
}

/// Selection rule on precomputed `(timestamp, sharpness)` pairs.
pub fn select_by_score(items: impl IntoIterator<Item = (f64, f64)>, budget: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64, f64)> = items.into_iter().enumerate().map(|(i, (t, s))| (i, t, s)).collect();
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.total_cmp(&b.1)).then(a.0.cmp(&b.0)));
    let mut keep: Vec<usize> = ranked.into_iter().take(budget).map(|(i, _, _)| i).collect();
    keep.sort_unstable();
    keep
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight 2-D convolution with the full 3×3 kernel, independent of the
    /// unrolled implementation above.
    fn reference_laplacian_variance(img: &GrayGrid) -> f64 {
        const K: [[f64; 3]; 3] = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
        let mut vals = Vec::new();
        for y in 1..img.height - 1 {
            for x in 1..img.width - 1 {
                let mut acc = 0.0;
                for (dy, row) in K.iter().enumerate() {
                    for (dx, k) in row.iter().enumerate() {
                        acc += k * img.get(x + dx - 1, y + dy - 1) as f64;
                    }
                }
                vals.push(acc);
            }
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64
    }

    fn checkerboard(w: usize, h: usize, cell: usize) -> GrayGrid {
        GrayGrid::from_fn(w, h, |x, y| if (x / cell + y / cell).is_multiple_of(2) { 220.0 } else { 30.0 })
    }

    #[test]
    fn constant_image_scores_zero() {
        let g = GrayGrid::from_fn(10, 8, |_, _| 77.0);
        assert_eq!(laplacian_variance(&g).unwrap(), 0.0);
    }

    #[test]
    fn single_interior_sample_has_zero_variance() {
        let g = GrayGrid::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { 255.0 } else { 0.0 });
        assert_eq!(laplacian_variance(&g).unwrap(), 0.0);
    }

    #[test]
    fn too_small_is_an_error() {
        assert!(matches!(laplacian_variance(&GrayGrid::new(2, 5)), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn checkerboard_sharper_than_blurred_copy() {
        let sharp = checkerboard(32, 24, 2);
        let blurred = sharp.blurred(1.5);
        let (a, b) = (reference_laplacian_variance(&sharp), reference_laplacian_variance(&blurred));
        assert!(a > b);
        assert!((laplacian_variance(&sharp).unwrap() - a).abs() <= 1e-6 * a);
        assert!((laplacian_variance(&blurred).unwrap() - b).abs() <= 1e-4 * b.max(1.0));
    }

    #[test]
    fn selection_rules() {
        let sharp = checkerboard(16, 16, 1);
        let blurred = sharp.blurred(2.0);
        let q = [QueuedFrame { timestamp: 0.0, gray: &blurred }, QueuedFrame { timestamp: 0.04, gray: &sharp }];
        assert_eq!(select_images(&q, 1).unwrap(), vec![1]);
        assert_eq!(select_images(&q, 5).unwrap(), vec![0, 1]);
        let same = [QueuedFrame { timestamp: 0.08, gray: &sharp }, QueuedFrame { timestamp: 0.04, gray: &sharp }];
        assert_eq!(select_images(&same, 1).unwrap(), vec![1]);
    }
}
