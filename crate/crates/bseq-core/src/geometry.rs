//! Boundary geometry: residual boundary extraction, polar transforms about
//! the mask centroid, angular ray binning, and vertex-sequence generation.
//!
//! Angles are measured in degrees in `[0, 360)` with `atan2(dy, dx)` where
//! `dx, dy` point along increasing column/row indices. Rays are indexed
//! `k = 0..N` at equidistant angles `k * 360 / N`, so a vertex sequence walks
//! the boundary once in order of increasing angle.

use crate::raster::BinaryMask;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("empty mask")]
    EmptyMask,
    #[error("too few rays: {0} (need at least 4)")]
    TooFewRays(usize),
    #[error("negative perturbation magnitude: {0}")]
    NegativeMagnitude(f64),
}

/// Cartesian point in pixel units (pixel centers at integer coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Polar coordinates about some pole: radius in pixels, angle in degrees
/// within `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub r: f64,
    pub theta_deg: f64,
}

/// Soft boundary band of a mask: thresholded support plus the smoothing
/// weights it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMask {
    pub support: BinaryMask,
    /// Row-major Gaussian-smoothed residual, same shape as `support`.
    pub weights: Vec<f64>,
}

/// Per-ray candidate sets for train-time vertex sampling. Grid `k` pools the
/// boundary pixels binned to rays `k-1`, `k`, `k+1` (mod `n`).
#[derive(Debug, Clone)]
pub struct AngularGrids {
    pub n: usize,
    pub delta_deg: f64,
    pub pole: Point,
    /// Candidate polar points per grid; every grid is nonempty.
    pub grids: Vec<Vec<PolarPoint>>,
    /// True where the grid had no real boundary pixels and holds a single
    /// synthetic candidate interpolated from neighboring rays.
    pub synthetic: Vec<bool>,
}

/// Ordered boundary vertex sequence, one vertex per ray.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSequence {
    pub points: Vec<Point>,
    /// True where the vertex is a synthetic fallback rather than a real
    /// boundary pixel.
    pub synthetic: Vec<bool>,
}

impl VertexSequence {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Circular distance between two angles in degrees, in `[0, 180]`.
pub fn circular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Centroid of the foreground pixel centers.
pub fn centroid(mask: &BinaryMask) -> Result<Point, GeometryError> {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut n = 0usize;
    for (x, y) in mask.foreground() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    if n == 0 {
        return Err(GeometryError::EmptyMask);
    }
    Ok(Point { x: sx / n as f64, y: sy / n as f64 })
}

/// Cartesian -> polar about `pole`. The pole itself maps to radius 0 at
/// angle 0.
pub fn to_polar(p: Point, pole: Point) -> PolarPoint {
    let dx = p.x - pole.x;
    let dy = p.y - pole.y;
    let r = dx.hypot(dy);
    let mut theta = dy.atan2(dx).to_degrees();
    if theta < 0.0 {
        theta += 360.0;
    }
    // atan2 of a tiny negative angle can round up to exactly 360 here.
    if theta >= 360.0 {
        theta = 0.0;
    }
    PolarPoint { r, theta_deg: theta }
}

/// Polar -> Cartesian about `pole`: `x = r cos(theta) + x_c`,
/// `y = r sin(theta) + y_c`.
pub fn from_polar(pp: PolarPoint, pole: Point) -> Point {
    let t = pp.theta_deg.to_radians();
    Point { x: pp.r * t.cos() + pole.x, y: pp.r * t.sin() + pole.y }
}

/// 3x3 full-square binary dilation; pixels outside the image count as
/// background.
fn dilate3x3(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut on = false;
            'probe: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if (0..w as i64).contains(&nx)
                        && (0..h as i64).contains(&ny)
                        && mask.get(nx as usize, ny as usize)
                    {
                        on = true;
                        break 'probe;
                    }
                }
            }
            out.set(x, y, on);
        }
    }
    out
}

/// 3x3 full-square binary erosion; pixels outside the image count as
/// background, so foreground touching the border never survives.
fn erode3x3(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut on = true;
            'probe: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    let inside = nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64;
                    if !inside || !mask.get(nx as usize, ny as usize) {
                        on = false;
                        break 'probe;
                    }
                }
            }
            out.set(x, y, on);
        }
    }
    out
}

/// Normalized 5x5 Gaussian kernel with sigma 1, as a flat row-major array.
fn gaussian5x5_kernel() -> [f64; 25] {
    let g = |i: i64| (-((i * i) as f64) / 2.0).exp();
    let taps = [g(-2), g(-1), g(0), g(1), g(2)];
    let mut k = [0.0; 25];
    let mut total = 0.0;
    for dy in 0..5 {
        for dx in 0..5 {
            let v = taps[dy] * taps[dx];
            k[dy * 5 + dx] = v;
            total += v;
        }
    }
    for v in &mut k {
        *v /= total;
    }
    k
}

/// Reflects an out-of-range index back into `0..len` (symmetric reflection:
/// -1 -> 0, len -> len-1). `len` must be positive; offsets here never exceed
/// one reflection.
fn reflect(i: i64, len: usize) -> usize {
    let n = len as i64;
    let r = if i < 0 { -i - 1 } else if i >= n { 2 * n - 1 - i } else { i };
    r.clamp(0, n - 1) as usize
}

/// Extracts the soft boundary band of a mask: the residual of 3x3 dilation
/// and erosion, smoothed by a normalized 5x5 Gaussian (sigma 1, reflected
/// borders), thresholded at half its peak.
///
/// Determinism contract: the smoothing accumulates kernel taps in ascending
/// `dy`, then `dx` order, so the weights are bit-reproducible.
pub fn extract_boundary(mask: &BinaryMask) -> Result<BoundaryMask, GeometryError> {
    if mask.is_empty() {
        return Err(GeometryError::EmptyMask);
    }
    let (w, h) = (mask.width, mask.height);
    let dilated = dilate3x3(mask);
    let eroded = erode3x3(mask);
    let mut residual = BinaryMask::new(w, h);
    for i in 0..w * h {
        residual.data[i] = (dilated.data[i] != 0 && eroded.data[i] == 0) as u8;
    }

    let kernel = gaussian5x5_kernel();
    let mut weights = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -2i64..=2 {
                let sy = reflect(y as i64 + dy, h);
                for dx in -2i64..=2 {
                    let sx = reflect(x as i64 + dx, w);
                    if residual.get(sx, sy) {
                        acc += kernel[((dy + 2) * 5 + (dx + 2)) as usize];
                    }
                }
            }
            weights[y * w + x] = acc;
        }
    }

    let peak = weights.iter().cloned().fold(0.0f64, f64::max);
    let threshold = 0.5 * peak;
    let mut support = BinaryMask::new(w, h);
    for i in 0..w * h {
        support.data[i] = (weights[i] > threshold) as u8;
    }
    Ok(BoundaryMask { support, weights })
}

/// Bins boundary support pixels to their nearest ray out of `n` equidistant
/// rays about `pole`. Returned in row-major pixel scan order per ray.
fn ray_bins(boundary: &BoundaryMask, pole: Point, n: usize) -> Vec<Vec<PolarPoint>> {
    let delta = 360.0 / n as f64;
    let mut bins = vec![Vec::new(); n];
    for (x, y) in boundary.support.foreground() {
        let pp = to_polar(Point { x: x as f64, y: y as f64 }, pole);
        let k = (pp.theta_deg / delta).round() as usize % n;
        bins[k].push(pp);
    }
    bins
}

/// Mean radius of a ray's binned pixels.
fn ray_mean_radius(bin: &[PolarPoint]) -> f64 {
    bin.iter().map(|p| p.r).sum::<f64>() / bin.len() as f64
}

/// Radius for an empty ray `k`, linearly interpolated between the nearest
/// nonempty rays on either side (weighted by ray-index distance). At least
/// one bin must be nonempty.
fn interpolated_radius(bins: &[Vec<PolarPoint>], k: usize) -> f64 {
    let n = bins.len();
    let mut prev = None;
    for d in 1..n {
        let i = (k + n - d % n) % n;
        if !bins[i].is_empty() {
            prev = Some((d, ray_mean_radius(&bins[i])));
            break;
        }
    }
    let mut next = None;
    for d in 1..n {
        let i = (k + d) % n;
        if !bins[i].is_empty() {
            next = Some((d, ray_mean_radius(&bins[i])));
            break;
        }
    }
    match (prev, next) {
        (Some((dp, rp)), Some((dn, rn))) => {
            (rp * dn as f64 + rn * dp as f64) / (dp + dn) as f64
        }
        (Some((_, r)), None) | (None, Some((_, r))) => r,
        (None, None) => unreachable!("caller guarantees a nonempty ray exists"),
    }
}

/// Builds the per-ray candidate grids used by train-time vertex sampling.
/// Grid `k` pools rays `k-1`, `k`, `k+1`; a grid left empty by that pooling
/// receives one synthetic candidate at angle `k * delta` with a radius
/// interpolated from the nearest nonempty rays.
pub fn build_angular_grids(
    boundary: &BoundaryMask,
    pole: Point,
    n: usize,
) -> Result<AngularGrids, GeometryError> {
    if n < 4 {
        return Err(GeometryError::TooFewRays(n));
    }
    if boundary.support.is_empty() {
        return Err(GeometryError::EmptyMask);
    }
    let delta = 360.0 / n as f64;
    let bins = ray_bins(boundary, pole, n);
    let mut grids = Vec::with_capacity(n);
    let mut synthetic = vec![false; n];
    for k in 0..n {
        let mut grid = Vec::new();
        for d in [n - 1, 0, 1] {
            grid.extend_from_slice(&bins[(k + d) % n]);
        }
        if grid.is_empty() {
            synthetic[k] = true;
            grid.push(PolarPoint { r: interpolated_radius(&bins, k), theta_deg: k as f64 * delta });
        }
        grids.push(grid);
    }
    Ok(AngularGrids { n, delta_deg: delta, pole, grids, synthetic })
}

/// Train-time vertex sampling: one candidate uniformly at random per grid.
pub fn sample_vertices_train<R: Rng>(grids: &AngularGrids, rng: &mut R) -> VertexSequence {
    let mut points = Vec::with_capacity(grids.n);
    for grid in &grids.grids {
        let pick = grid[rng.gen_range(0..grid.len())];
        points.push(from_polar(pick, grids.pole));
    }
    VertexSequence { points, synthetic: grids.synthetic.clone() }
}

/// Test-time vertex generation: per ray, the boundary pixel whose angle is
/// nearest the ray angle (ties: smaller radius, then row, then column). Rays
/// with no pixel within one ray spacing fall back to a synthetic vertex like
/// [`build_angular_grids`].
pub fn generate_vertices_test(
    boundary: &BoundaryMask,
    pole: Point,
    n: usize,
) -> Result<VertexSequence, GeometryError> {
    if n < 4 {
        return Err(GeometryError::TooFewRays(n));
    }
    if boundary.support.is_empty() {
        return Err(GeometryError::EmptyMask);
    }
    let delta = 360.0 / n as f64;

    // Collect polar pixels with their raster position for tie-breaking.
    let mut pixels = Vec::new();
    for (x, y) in boundary.support.foreground() {
        pixels.push((to_polar(Point { x: x as f64, y: y as f64 }, pole), y, x));
    }
    let bins = ray_bins(boundary, pole, n);

    let mut points = Vec::with_capacity(n);
    let mut synthetic = vec![false; n];
    for k in 0..n {
        let target = k as f64 * delta;
        let mut best: Option<(f64, f64, usize, usize, PolarPoint)> = None;
        for &(pp, y, x) in &pixels {
            let key = (circular_distance_deg(pp.theta_deg, target), pp.r, y, x);
            let better = match &best {
                None => true,
                Some((bd, br, by, bx, _)) => key < (*bd, *br, *by, *bx),
            };
            if better {
                best = Some((key.0, key.1, key.2, key.3, pp));
            }
        }
        let (dist, .., pick) = best.expect("support is nonempty");
        if dist <= delta {
            points.push(from_polar(pick, pole));
        } else {
            synthetic[k] = true;
            let pp = PolarPoint { r: interpolated_radius(&bins, k), theta_deg: target };
            points.push(from_polar(pp, pole));
        }
    }
    Ok(VertexSequence { points, synthetic })
}

/// Number of low-order harmonics in the random radial displacement field.
const PERTURB_HARMONICS: usize = 3;

/// Displaces a mask's boundary by a smooth random radial field with
/// `max |displacement| <= magnitude` pixels. Magnitude 0 returns the input
/// unchanged. Pixels flip according to their exact Euclidean distance to the
/// opposite class, so added pixels always lie within `magnitude` of the old
/// boundary.
pub fn perturb_mask<R: Rng>(
    mask: &BinaryMask,
    magnitude: f64,
    rng: &mut R,
) -> Result<BinaryMask, GeometryError> {
    if magnitude < 0.0 {
        return Err(GeometryError::NegativeMagnitude(magnitude));
    }
    if mask.is_empty() {
        return Err(GeometryError::EmptyMask);
    }
    if magnitude == 0.0 {
        return Ok(mask.clone());
    }

    let pole = centroid(mask)?;
    let mut amps = [0.0f64; PERTURB_HARMONICS];
    let mut phases = [0.0f64; PERTURB_HARMONICS];
    let mut norm = 0.0;
    for j in 0..PERTURB_HARMONICS {
        amps[j] = rng.gen_range(-1.0..1.0);
        phases[j] = rng.gen_range(0.0..std::f64::consts::TAU);
        norm += amps[j].abs();
    }
    if norm < 1e-12 {
        return Ok(mask.clone());
    }
    let field = |theta_deg: f64| -> f64 {
        let t = theta_deg.to_radians();
        let mut s = 0.0;
        for j in 0..PERTURB_HARMONICS {
            s += amps[j] * ((j + 1) as f64 * t + phases[j]).cos();
        }
        magnitude * s / norm
    };

    // A pixel can only flip if its distance to the opposite class is at most
    // `magnitude`, so an exact window search of that radius suffices.
    let reach = magnitude.floor() as i64 + 2;
    let (w, h) = (mask.width, mask.height);
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let inside = mask.get(x, y);
            let mut min_sq = f64::INFINITY;
            for dy in -reach..=reach {
                let ny = y as i64 + dy;
                if ny < 0 || ny >= h as i64 {
                    continue;
                }
                for dx in -reach..=reach {
                    let nx = x as i64 + dx;
                    if nx < 0 || nx >= w as i64 {
                        continue;
                    }
                    if mask.get(nx as usize, ny as usize) != inside {
                        min_sq = min_sq.min((dx * dx + dy * dy) as f64);
                    }
                }
            }
            let dist = min_sq.sqrt();
            let d = field(to_polar(Point { x: x as f64, y: y as f64 }, pole).theta_deg);
            let keep = if inside { dist >= -d } else { dist <= d };
            out.set(x, y, keep);
        }
    }
    Ok(out)
}
