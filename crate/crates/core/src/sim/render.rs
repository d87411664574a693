//! Tiny synthetic camera frames: a textured grey background with flat
//! rectangles for every object in view, dimmed by a per-frame gain and
//! blurred by a per-frame Gaussian.

use crate::model::BoundingBox;
use crate::raster::{luma, GrayGrid, RgbGrid};

/// An object as it appears in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sprite {
    pub bbox: BoundingBox,
    pub depth: f64,
    pub color: [u8; 3],
}

/// Per-frame rendering parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLook {
    pub texture_seed: u64,
    pub gain: f64,
    pub blur_sigma: f64,
}

fn hash2(seed: u64, x: u64, y: u64) -> u64 {
    let mut h = seed ^ x.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ y.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^ (h >> 33)
}

fn unit(h: u64) -> f32 {
    (h >> 40) as f32 / (1u64 << 24) as f32
}

const TILE: usize = 256;

/// Shared background texture: 6-px blocks plus per-pixel grain, 40–140.
/// Frames view it through a per-frame wrapped offset.
fn tile() -> &'static [f32] {
    static T: std::sync::OnceLock<Vec<f32>> = std::sync::OnceLock::new();
    T.get_or_init(|| {
        let mut t = Vec::with_capacity(TILE * TILE);
        for y in 0..TILE as u64 {
            for x in 0..TILE as u64 {
                t.push(40.0 + 80.0 * unit(hash2(0x7E47, x / 6, y / 6)) + 20.0 * unit(hash2(0xA5A5, x, y)));
            }
        }
        t
    })
}

fn offset(seed: u64) -> (usize, usize) {
    ((seed % TILE as u64) as usize, ((seed >> 32) % TILE as u64) as usize)
}

fn background(seed: u64, x: usize, y: usize) -> f32 {
    let (ox, oy) = offset(seed);
    tile()[((y + oy) % TILE) * TILE + (x + ox) % TILE]
}

/// Blur levels are quantized to this step so blurred textures can be shared.
pub const SIGMA_STEP: f64 = 0.1;
const SIGMA_LEVELS: usize = 40;

pub fn quantize_sigma(sigma: f64) -> f64 {
    (sigma / SIGMA_STEP).round().max(1.0) * SIGMA_STEP
}

/// The texture tile blurred with wrap-around at a quantized level, or
/// `None` when `sigma` is off the grid.
fn blurred_tile(sigma: f64) -> Option<&'static [f32]> {
    static LEVELS: [std::sync::OnceLock<Vec<f32>>; SIGMA_LEVELS] = [const { std::sync::OnceLock::new() }; SIGMA_LEVELS];
    let k = (sigma / SIGMA_STEP).round();
    if (k - sigma / SIGMA_STEP).abs() > 1e-6 || k < 1.0 || k as usize > SIGMA_LEVELS {
        return None;
    }
    Some(LEVELS[k as usize - 1].get_or_init(|| {
        let kernel = crate::raster::gaussian_kernel(sigma);
        let r = kernel.len() / 2;
        let t = tile();
        let wrap = |i: usize, j: usize| (i + TILE * 4 + j - r) % TILE;
        let mut rows = vec![0f32; TILE * TILE];
        for y in 0..TILE {
            for x in 0..TILE {
                rows[y * TILE + x] = kernel.iter().enumerate().map(|(j, kv)| kv * t[y * TILE + wrap(x, j)]).sum();
            }
        }
        let mut out = vec![0f32; TILE * TILE];
        for y in 0..TILE {
            for x in 0..TILE {
                out[y * TILE + x] = kernel.iter().enumerate().map(|(j, kv)| kv * rows[wrap(y, j) * TILE + x]).sum();
            }
        }
        out
    }))
}

/// A `width × height` view of a tile at the frame's offset.
fn tile_view(t: &[f32], seed: u64, width: usize, height: usize) -> GrayGrid {
    let (ox, oy) = offset(seed);
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = &t[((y + oy) % TILE) * TILE..][..TILE];
        let mut x = 0;
        while x < width {
            let start = (x + ox) % TILE;
            let n = (TILE - start).min(width - x);
            data.extend_from_slice(&row[start..start + n]);
            x += n;
        }
    }
    GrayGrid { width, height, data }
}

fn background_grid(seed: u64, width: usize, height: usize) -> GrayGrid {
    tile_view(tile(), seed, width, height)
}

/// Sprites painted far to near so nearer objects cover farther ones.
fn depth_order(sprites: &[Sprite]) -> Vec<&Sprite> {
    let mut s: Vec<&Sprite> = sprites.iter().collect();
    s.sort_by(|a, b| b.depth.total_cmp(&a.depth));
    s
}

/// Grey frame as the blur-selection stage sees it.
///
/// On the quantized blur grid the background comes pre-blurred from the
/// shared texture and only the sprite footprint is blurred per frame. By
/// linearity this equals blurring the painted frame, except that the
/// texture continues past the image border instead of being clamped.
pub fn render_gray(width: usize, height: usize, sprites: &[Sprite], look: &FrameLook) -> GrayGrid {
    let Some(bt) = blurred_tile(look.blur_sigma) else {
        return render_gray_direct(width, height, sprites, look);
    };
    let mut img = tile_view(bt, look.texture_seed, width, height);
    if !sprites.is_empty() {
        add_sprite_footprint(&mut img, sprites, look);
    }
    let g = look.gain as f32;
    for p in &mut img.data {
        *p *= g;
    }
    img
}

/// Adds the blurred difference between painted sprites and background.
/// Each pixel belongs to the nearest sprite covering it, so every sprite's
/// share can be blurred in its own small window.
fn add_sprite_footprint(img: &mut GrayGrid, sprites: &[Sprite], look: &FrameLook) {
    let (width, height) = (img.width, img.height);
    let kernel = crate::raster::gaussian_kernel(look.blur_sigma);
    let r = kernel.len() / 2;
    let ranges: Vec<_> = sprites.iter().map(|s| s.bbox.pixel_ranges(width as u32, height as u32)).collect();
    for (i, s) in sprites.iter().enumerate() {
        let (xs, ys) = ranges[i].clone();
        if xs.is_empty() || ys.is_empty() {
            continue;
        }
        let (x0, y0) = (xs.start as usize, ys.start as usize);
        let (ww, wh) = (xs.len() + 2 * r, ys.len() + 2 * r);
        let v = luma(s.color);
        let mut diff = vec![0f32; ww * wh];
        let mut any = false;
        for y in ys.clone() {
            for x in xs.clone() {
                let covered = sprites.iter().enumerate().any(|(j, o)| {
                    j != i && (o.depth < s.depth || (o.depth == s.depth && j > i)) && ranges[j].0.contains(&x) && ranges[j].1.contains(&y)
                });
                if !covered {
                    let (x, y) = (x as usize, y as usize);
                    diff[(y - y0 + r) * ww + (x - x0 + r)] = v - background(look.texture_seed, x, y);
                    any = true;
                }
            }
        }
        if !any {
            continue;
        }
        let blurred = crate::raster::convolve_cols(&crate::raster::convolve_rows(&diff, ww, wh, &kernel), ww, wh, &kernel);
        for wy in 0..wh {
            let Some(y) = (y0 + wy).checked_sub(r).filter(|&y| y < height) else { continue };
            for wx in 0..ww {
                let Some(x) = (x0 + wx).checked_sub(r).filter(|&x| x < width) else { continue };
                img.data[y * width + x] += blurred[wy * ww + wx];
            }
        }
    }
}

/// Paint, dim, then blur the whole frame with clamped borders.
pub fn render_gray_direct(width: usize, height: usize, sprites: &[Sprite], look: &FrameLook) -> GrayGrid {
    let mut img = background_grid(look.texture_seed, width, height);
    for s in depth_order(sprites) {
        let v = luma(s.color);
        let (xs, ys) = s.bbox.pixel_ranges(width as u32, height as u32);
        for y in ys {
            for x in xs.clone() {
                img.set(x as usize, y as usize, v);
            }
        }
    }
    let g = look.gain as f32;
    for p in &mut img.data {
        *p *= g;
    }
    img.blurred(look.blur_sigma)
}

/// Colour frame restricted to `region` (pixels outside are black). Blur is
/// applied only when `blur` is set.
pub fn render_rgb(width: usize, height: usize, sprites: &[Sprite], look: &FrameLook, region: Option<&BoundingBox>, blur: bool) -> RgbGrid {
    let (xr, yr) = match region {
        Some(b) => {
            let (xs, ys) = b.pixel_ranges(width as u32, height as u32);
            (xs.start as usize..xs.end as usize, ys.start as usize..ys.end as usize)
        }
        None => (0..width, 0..height),
    };
    let mut chans = [vec![0f32; width * height], vec![0f32; width * height], vec![0f32; width * height]];
    for y in yr.clone() {
        for x in xr.clone() {
            let b = background(look.texture_seed, x, y);
            for c in &mut chans {
                c[y * width + x] = b;
            }
        }
    }
    for s in depth_order(sprites) {
        let (xs, ys) = s.bbox.pixel_ranges(width as u32, height as u32);
        for y in ys {
            for x in xs.clone() {
                if xr.contains(&(x as usize)) && yr.contains(&(y as usize)) {
                    for (k, c) in chans.iter_mut().enumerate() {
                        c[y as usize * width + x as usize] = s.color[k] as f32;
                    }
                }
            }
        }
    }
    let g = look.gain as f32;
    for c in &mut chans {
        for p in c.iter_mut() {
            *p *= g;
        }
    }
    if blur {
        for c in &mut chans {
            let grid = GrayGrid { width, height, data: std::mem::take(c) };
            *c = grid.blurred(look.blur_sigma).data;
        }
    }
    let data = (0..width * height).map(|i| [chans[0][i], chans[1][i], chans[2][i]].map(|v| v.round().clamp(0.0, 255.0) as u8)).collect();
    RgbGrid { width, height, data }
}

/// Pixels of `img` whose centres fall inside `bbox`.
pub fn patch(img: &RgbGrid, bbox: &BoundingBox) -> Vec<[u8; 3]> {
    let (xs, ys) = bbox.pixel_ranges(img.width as u32, img.height as u32);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for y in ys {
        for x in xs.clone() {
            out.push(img.get(x as usize, y as usize));
        }
    }
    out
}

/// Washes a colour toward grey, as under poor lighting.
pub fn wash_out(c: [u8; 3]) -> [u8; 3] {
    let m = luma(c);
    c.map(|v| (0.25 * v as f32 + 0.75 * m).round() as u8)
}
