//! Fixed (non-learned) multi-scale appearance features.
//!
//! A grayscale image and its mask are area-downsampled to scales 1/4, 1/8,
//! 1/16, 1/32; at every scale eight handcrafted channels are computed. All
//! scales are bilinearly upsampled back to the 1/4 grid and concatenated
//! fine-to-coarse, two normalized coordinate channels are appended, and
//! per-vertex feature rows are read off the grid with bilinear sampling.
//!
//! Border handling everywhere is symmetric reflection (index -1 maps to 0),
//! matching the boundary extractor's smoothing pass.

use crate::geometry::VertexSequence;
use crate::raster::{BinaryMask, GrayImage};
use thiserror::Error;

/// Downsampling factors of the pyramid scales, fine to coarse.
pub const SCALE_FACTORS: [usize; 4] = [4, 8, 16, 32];
/// Fixed channels computed at every scale.
pub const CHANNELS_PER_SCALE: usize = 8;
/// Full-resolution pixels per merged-grid cell (the 1/4 grid).
pub const GRID_STRIDE: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("image too small: {0}x{1} (need at least 32x32)")]
    ImageTooSmall(usize, usize),
    #[error("image {0}x{1} and mask {2}x{3} dimensions differ")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("coordinate map needs at least 2x2, got {0}x{1}")]
    CoordMapTooSmall(usize, usize),
    #[error("grids have mismatched shapes and cannot be assembled")]
    ShapeMismatch,
    #[error("empty vertex list")]
    EmptyVertexList,
}

/// Channel planes computed on one downsampled copy of the input.
#[derive(Debug, Clone)]
pub struct ScaleFeatures {
    pub height: usize,
    pub width: usize,
    /// Downsampling factor relative to full resolution.
    pub factor: usize,
    /// `CHANNELS_PER_SCALE` planes of `height * width` values.
    pub planes: Vec<Vec<f64>>,
}

/// The full four-scale pyramid.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub scales: Vec<ScaleFeatures>,
}

/// Channel-interleaved raster of feature vectors: `data[(y*w + x)*c + ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureGrid {
    fn new(height: usize, width: usize, channels: usize) -> Self {
        FeatureGrid { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    /// Feature vector at an integer grid point.
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }
}

/// Per-vertex feature rows, `data[row * dim + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SequenceFeatures {
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }
}

/// Which parts of the feature stack are active. Disabling the pyramid keeps
/// only the 1/4-scale channels (the feature dimension shrinks); disabling
/// the coordinate map zeroes the two coordinate channels in place so model
/// shapes stay unchanged.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureOptions {
    pub use_pyramid: bool,
    pub use_coord_map: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions { use_pyramid: true, use_coord_map: true }
    }
}

impl FeatureOptions {
    /// Channels of the merged grid (before the two coordinate channels).
    pub fn merged_channels(&self) -> usize {
        if self.use_pyramid {
            SCALE_FACTORS.len() * CHANNELS_PER_SCALE
        } else {
            CHANNELS_PER_SCALE
        }
    }

    /// Final per-vertex feature dimension.
    pub fn feature_dim(&self) -> usize {
        self.merged_channels() + 2
    }
}

fn reflect(i: i64, len: usize) -> usize {
    let n = len as i64;
    let r = if i < 0 { -i - 1 } else if i >= n { 2 * n - 1 - i } else { i };
    r.clamp(0, n - 1) as usize
}

/// Area (box) downsampling by an integer-ish factor; block edges are
/// `floor(i * full / small)` so exact integer factors tile perfectly.
fn area_downsample(data: &[f64], full_h: usize, full_w: usize, small_h: usize, small_w: usize) -> Vec<f64> {
    let mut out = vec![0.0; small_h * small_w];
    for by in 0..small_h {
        let y0 = by * full_h / small_h;
        let y1 = ((by + 1) * full_h / small_h).max(y0 + 1);
        for bx in 0..small_w {
            let x0 = bx * full_w / small_w;
            let x1 = ((bx + 1) * full_w / small_w).max(x0 + 1);
            let mut acc = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    acc += data[y * full_w + x];
                }
            }
            out[by * small_w + bx] = acc / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

/// One pass of the exact 1D squared Euclidean distance transform
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2 * q - 2 * p) as f64;
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
    d
}

/// Exact squared Euclidean distance to the nearest source pixel.
/// `sources[i]` true marks distance-zero pixels; pixels unreachable (no
/// sources at all) come back as infinity.
fn edt_squared(sources: &[bool], h: usize, w: usize) -> Vec<f64> {
    const FAR: f64 = 1e18;
    let mut field = vec![0.0; h * w];
    for i in 0..h * w {
        field[i] = if sources[i] { 0.0 } else { FAR };
    }
    // Column pass.
    let mut col = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = field[y * w + x];
        }
        let d = edt_1d(&col);
        for y in 0..h {
            field[y * w + x] = d[y];
        }
    }
    // Row pass.
    let mut row_out;
    for y in 0..h {
        row_out = edt_1d(&field[y * w..(y + 1) * w]);
        field[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    for v in &mut field {
        if *v >= FAR {
            *v = f64::INFINITY;
        }
    }
    field
}

/// Computes the eight fixed channels on one downsampled image/mask pair.
fn scale_channels(
    img: &[f64],
    occupancy: &[f64],
    h: usize,
    w: usize,
    factor: usize,
    full_size: usize,
) -> Vec<Vec<f64>> {
    let at = |x: i64, y: i64| img[reflect(y, h) * w + reflect(x, w)];
    let mut planes = vec![vec![0.0; h * w]; CHANNELS_PER_SCALE];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let c = at(x, y);
            let gx = (at(x + 1, y) - at(x - 1, y)) / 2.0;
            let gy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let v = at(x + dx, y + dy);
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let mean = sum / 9.0;
            let var = (sum_sq / 9.0 - mean * mean).max(0.0);
            planes[0][i] = c;
            planes[1][i] = gx;
            planes[2][i] = gy;
            planes[3][i] = gx.hypot(gy);
            planes[4][i] = mean;
            planes[5][i] = var.sqrt();
            planes[6][i] = at(x + 1, y) + at(x - 1, y) + at(x, y + 1) + at(x, y - 1) - 4.0 * c;
        }
    }
    // Signed distance to the mask boundary, normalized by the full-res image
    // size and clamped to [-1, 1]. Inside is negative.
    let coarse_mask: Vec<bool> = occupancy.iter().map(|&o| o >= 0.5).collect();
    let inv: Vec<bool> = coarse_mask.iter().map(|&b| !b).collect();
    let dist_to_bg = edt_squared(&inv, h, w);
    let dist_to_fg = edt_squared(&coarse_mask, h, w);
    for i in 0..h * w {
        let d = if coarse_mask[i] { -dist_to_bg[i].sqrt() } else { dist_to_fg[i].sqrt() };
        let scaled = d * factor as f64 / full_size as f64;
        planes[7][i] = scaled.clamp(-1.0, 1.0);
    }
    planes
}

/// Builds the four-scale feature pyramid for an image/mask pair.
pub fn build_pyramid(image: &GrayImage, mask: &BinaryMask) -> Result<FeaturePyramid, FeatureError> {
    if image.width != mask.width || image.height != mask.height {
        return Err(FeatureError::DimensionMismatch(
            image.width,
            image.height,
            mask.width,
            mask.height,
        ));
    }
    let max_factor = *SCALE_FACTORS.last().unwrap();
    if image.width < max_factor || image.height < max_factor {
        return Err(FeatureError::ImageTooSmall(image.width, image.height));
    }
    let (h, w) = (image.height, image.width);
    let img: Vec<f64> = image.data.iter().map(|&v| v as f64).collect();
    let msk: Vec<f64> = mask.data.iter().map(|&v| v as f64).collect();
    let full_size = h.max(w);

    let mut scales = Vec::with_capacity(SCALE_FACTORS.len());
    for &factor in &SCALE_FACTORS {
        let (sh, sw) = (h / factor, w / factor);
        let small_img = area_downsample(&img, h, w, sh, sw);
        let small_msk = area_downsample(&msk, h, w, sh, sw);
        let planes = scale_channels(&small_img, &small_msk, sh, sw, factor, full_size);
        scales.push(ScaleFeatures { height: sh, width: sw, factor, planes });
    }
    Ok(FeaturePyramid { scales })
}

/// Align-corners bilinear upsampling of one plane to a target shape. Exactly
/// preserves corner values; a 1-wide axis broadcasts its single value.
fn upsample_plane(src: &[f64], sh: usize, sw: usize, th: usize, tw: usize) -> Vec<f64> {
    let map = |i: usize, t: usize, s: usize| -> f64 {
        if t <= 1 || s <= 1 {
            0.0
        } else {
            i as f64 * (s - 1) as f64 / (t - 1) as f64
        }
    };
    let mut out = vec![0.0; th * tw];
    for ty in 0..th {
        let fy = map(ty, th, sh);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for tx in 0..tw {
            let fx = map(tx, tw, sw);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let v00 = src[y0 * sw + x0];
            let v10 = src[y0 * sw + x1];
            let v01 = src[y1 * sw + x0];
            let v11 = src[y1 * sw + x1];
            out[ty * tw + tx] =
                (1.0 - wy) * ((1.0 - wx) * v00 + wx * v10) + wy * ((1.0 - wx) * v01 + wx * v11);
        }
    }
    out
}

/// Upsamples every scale to the 1/4 grid and concatenates channels in
/// fine-to-coarse order.
pub fn merge_pyramid(pyramid: &FeaturePyramid) -> FeatureGrid {
    let fine = &pyramid.scales[0];
    let (th, tw) = (fine.height, fine.width);
    let channels: usize = pyramid.scales.len() * CHANNELS_PER_SCALE;
    let mut grid = FeatureGrid::new(th, tw, channels);
    let mut ch = 0;
    for scale in &pyramid.scales {
        for plane in &scale.planes {
            let up = upsample_plane(plane, scale.height, scale.width, th, tw);
            for i in 0..th * tw {
                grid.data[i * channels + ch] = up[i];
            }
            ch += 1;
        }
    }
    grid
}

/// Normalized coordinate channels over an `h x w` grid: channel 0 is the
/// column position, channel 1 the row position, both linear in [-1, 1].
pub fn coord_map(h: usize, w: usize) -> Result<FeatureGrid, FeatureError> {
    if h < 2 || w < 2 {
        return Err(FeatureError::CoordMapTooSmall(h, w));
    }
    let mut grid = FeatureGrid::new(h, w, 2);
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * 2;
            grid.data[base] = -1.0 + 2.0 * x as f64 / (w - 1) as f64;
            grid.data[base + 1] = -1.0 + 2.0 * y as f64 / (h - 1) as f64;
        }
    }
    Ok(grid)
}

/// Appends the coordinate channels after the merged feature channels.
pub fn assemble_grid(merged: &FeatureGrid, coords: &FeatureGrid) -> Result<FeatureGrid, FeatureError> {
    if merged.height != coords.height || merged.width != coords.width || coords.channels != 2 {
        return Err(FeatureError::ShapeMismatch);
    }
    let channels = merged.channels + 2;
    let mut out = FeatureGrid::new(merged.height, merged.width, channels);
    for i in 0..merged.height * merged.width {
        out.data[i * channels..i * channels + merged.channels]
            .copy_from_slice(&merged.data[i * merged.channels..(i + 1) * merged.channels]);
        out.data[i * channels + merged.channels..(i + 1) * channels]
            .copy_from_slice(&coords.data[i * 2..(i + 1) * 2]);
    }
    Ok(out)
}

/// Inverse of [`assemble_grid`].
pub fn split_grid(grid: &FeatureGrid) -> Result<(FeatureGrid, FeatureGrid), FeatureError> {
    if grid.channels < 3 {
        return Err(FeatureError::ShapeMismatch);
    }
    let mc = grid.channels - 2;
    let mut merged = FeatureGrid::new(grid.height, grid.width, mc);
    let mut coords = FeatureGrid::new(grid.height, grid.width, 2);
    for i in 0..grid.height * grid.width {
        merged.data[i * mc..(i + 1) * mc]
            .copy_from_slice(&grid.data[i * grid.channels..i * grid.channels + mc]);
        coords.data[i * 2..(i + 1) * 2]
            .copy_from_slice(&grid.data[i * grid.channels + mc..(i + 1) * grid.channels]);
    }
    Ok((merged, coords))
}

/// Samples the grid at a full-resolution point: grid coordinates are the
/// point divided by [`GRID_STRIDE`], clamped to the grid, then bilinearly
/// interpolated per channel.
pub fn bilinear_sample(grid: &FeatureGrid, x: f64, y: f64) -> Vec<f64> {
    let gx = (x / GRID_STRIDE).clamp(0.0, (grid.width - 1) as f64);
    let gy = (y / GRID_STRIDE).clamp(0.0, (grid.height - 1) as f64);
    let x0 = gx.floor() as usize;
    let y0 = gy.floor() as usize;
    let x1 = (x0 + 1).min(grid.width - 1);
    let y1 = (y0 + 1).min(grid.height - 1);
    let wx = gx - x0 as f64;
    let wy = gy - y0 as f64;
    let c = grid.channels;
    let mut out = vec![0.0; c];
    let (r00, r10) = (grid.at(x0, y0), grid.at(x1, y0));
    let (r01, r11) = (grid.at(x0, y1), grid.at(x1, y1));
    for ch in 0..c {
        out[ch] = (1.0 - wy) * ((1.0 - wx) * r00[ch] + wx * r10[ch])
            + wy * ((1.0 - wx) * r01[ch] + wx * r11[ch]);
    }
    out
}

/// Stacks one sampled feature row per vertex.
pub fn sequence_features(grid: &FeatureGrid, vs: &VertexSequence) -> Result<SequenceFeatures, FeatureError> {
    if vs.is_empty() {
        return Err(FeatureError::EmptyVertexList);
    }
    let dim = grid.channels;
    let mut data = Vec::with_capacity(vs.len() * dim);
    for p in &vs.points {
        data.extend_from_slice(&bilinear_sample(grid, p.x, p.y));
    }
    Ok(SequenceFeatures { n: vs.len(), dim, data })
}

/// Full feature stack for one slice: pyramid (or 1/4-scale only), merge,
/// coordinate channels (zeroed when disabled), assembled into one grid.
pub fn build_feature_grid(
    image: &GrayImage,
    mask: &BinaryMask,
    options: &FeatureOptions,
) -> Result<FeatureGrid, FeatureError> {
    let pyramid = build_pyramid(image, mask)?;
    let merged = if options.use_pyramid {
        merge_pyramid(&pyramid)
    } else {
        let only_fine = FeaturePyramid { scales: vec![pyramid.scales[0].clone()] };
        merge_pyramid(&only_fine)
    };
    let mut coords = coord_map(merged.height, merged.width)?;
    if !options.use_coord_map {
        coords.data.fill(0.0);
    }
    assemble_grid(&merged, &coords)
}
