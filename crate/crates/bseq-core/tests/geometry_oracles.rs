//! Oracle tests for the boundary extractor and the polar transform.
//!
//! The boundary oracle re-derives the whole extraction chain from scratch
//! with set-algebra morphology and a direct 25-tap convolution, then demands
//! bit-for-bit agreement with the library. The polar oracle checks exact
//! round trips.

// Indexed loops are kept where they mirror row-major index math across
// several parallel buffers; iterator chains there would hide the layout.
#![allow(clippy::needless_range_loop)]

use bseq_core::geometry::{centroid, extract_boundary, from_polar, to_polar, Point, PolarPoint};
use bseq_core::raster::BinaryMask;
use bseq_core::seeds;
use rand::Rng;
use std::collections::HashSet;

/// Random test mask: union of a few disks plus salt pixels, never empty.
fn random_mask(seed: u64, size: usize) -> BinaryMask {
    let mut rng = seeds::rng(seed, &[0xbad5eed]);
    let mut m = BinaryMask::new(size, size);
    for _ in 0..rng.gen_range(1..=3) {
        let cx = rng.gen_range(8.0..size as f64 - 8.0);
        let cy = rng.gen_range(8.0..size as f64 - 8.0);
        let r = rng.gen_range(3.0..size as f64 / 3.0);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r * r {
                    m.set(x, y, true);
                }
            }
        }
    }
    for _ in 0..rng.gen_range(0..20) {
        m.set(rng.gen_range(0..size), rng.gen_range(0..size), true);
    }
    m
}

/// Set-algebra 3x3 dilation: every neighbor of a foreground pixel.
fn oracle_dilate(fg: &HashSet<(i64, i64)>, w: i64, h: i64) -> HashSet<(i64, i64)> {
    let mut out = HashSet::new();
    for &(x, y) in fg {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    out.insert((nx, ny));
                }
            }
        }
    }
    out
}

/// Set-algebra 3x3 erosion: pixels whose full 3x3 neighborhood lies in the
/// foreground set (off-image counts as background).
fn oracle_erode(fg: &HashSet<(i64, i64)>, w: i64, h: i64) -> HashSet<(i64, i64)> {
    let mut out = HashSet::new();
    for &(x, y) in fg {
        let mut keep = true;
        'probe: for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h || !fg.contains(&(nx, ny)) {
                    keep = false;
                    break 'probe;
                }
            }
        }
        if keep {
            out.insert((x, y));
        }
    }
    out
}

/// Direct 5x5 Gaussian convolution (sigma 1, normalized, symmetric border
/// reflection), accumulating taps in ascending dy-then-dx order — the same
/// canonical order the library documents, re-derived here from the raw
/// Gaussian expression.
fn oracle_blur(residual: &HashSet<(i64, i64)>, w: i64, h: i64) -> Vec<f64> {
    let g = |i: i64| (-((i * i) as f64) / 2.0).exp();
    let mut kernel = [0.0f64; 25];
    let mut total = 0.0;
    for dy in -2i64..=2 {
        for dx in -2i64..=2 {
            let v = g(dy) * g(dx);
            kernel[((dy + 2) * 5 + (dx + 2)) as usize] = v;
            total += v;
        }
    }
    for v in &mut kernel {
        *v /= total;
    }
    let reflect = |i: i64, n: i64| -> i64 {
        if i < 0 {
            -i - 1
        } else if i >= n {
            2 * n - 1 - i
        } else {
            i
        }
    };
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -2i64..=2 {
                for dx in -2i64..=2 {
                    let sx = reflect(x + dx, w);
                    let sy = reflect(y + dy, h);
                    if residual.contains(&(sx, sy)) {
                        acc += kernel[((dy + 2) * 5 + (dx + 2)) as usize];
                    }
                }
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Full independent re-derivation of the boundary band: support + weights.
pub fn oracle_boundary(mask: &BinaryMask) -> (BinaryMask, Vec<f64>) {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let fg: HashSet<(i64, i64)> =
        mask.foreground().map(|(x, y)| (x as i64, y as i64)).collect();
    let dilated = oracle_dilate(&fg, w, h);
    let eroded = oracle_erode(&fg, w, h);
    let residual: HashSet<(i64, i64)> = dilated.difference(&eroded).cloned().collect();
    let weights = oracle_blur(&residual, w, h);
    let peak = weights.iter().cloned().fold(0.0f64, f64::max);
    let mut support = BinaryMask::new(mask.width, mask.height);
    for i in 0..weights.len() {
        support.data[i] = (weights[i] > 0.5 * peak) as u8;
    }
    (support, weights)
}

#[test]
fn boundary_extraction_matches_set_algebra_oracle_bit_for_bit() {
    for seed in 0..12u64 {
        let mask = random_mask(seed, 64);
        let got = extract_boundary(&mask).unwrap();
        let (want_support, want_weights) = oracle_boundary(&mask);
        assert_eq!(got.support, want_support, "support mismatch on mask seed {seed}");
        assert_eq!(got.weights, want_weights, "weights mismatch on mask seed {seed}");
    }
}

#[test]
fn polar_round_trip_on_random_points() {
    let mut rng = seeds::rng(31, &[]);
    for _ in 0..10_000 {
        let pole = Point { x: rng.gen_range(-10.0..70.0), y: rng.gen_range(-10.0..70.0) };
        let p = Point { x: rng.gen_range(-100.0..100.0), y: rng.gen_range(-100.0..100.0) };
        let back = from_polar(to_polar(p, pole), pole);
        assert!(
            (back.x - p.x).abs() <= 1e-9 && (back.y - p.y).abs() <= 1e-9,
            "round trip failed: {p:?} -> {back:?} about {pole:?}"
        );
    }
}

#[test]
fn polar_round_trip_on_boundary_pixels() {
    for seed in 0..10u64 {
        let mask = random_mask(seed, 64);
        let boundary = extract_boundary(&mask).unwrap();
        let pole = centroid(&mask).unwrap();
        for (x, y) in boundary.support.foreground() {
            let p = Point { x: x as f64, y: y as f64 };
            let back = from_polar(to_polar(p, pole), pole);
            assert!(
                (back.x - p.x).abs() <= 1e-9 && (back.y - p.y).abs() <= 1e-9,
                "round trip failed at boundary pixel ({x},{y}), pole {pole:?}"
            );
        }
    }
}

#[test]
fn from_polar_agrees_with_direct_trig_identity() {
    // x = r cos(theta) + x_c, y = r sin(theta) + y_c spelled out by hand.
    let pole = Point { x: 12.0, y: -3.0 };
    let pp = PolarPoint { r: 5.0, theta_deg: 210.0 };
    let p = from_polar(pp, pole);
    let rad = 210.0f64.to_radians();
    assert!((p.x - (5.0 * rad.cos() + 12.0)).abs() < 1e-12);
    assert!((p.y - (5.0 * rad.sin() - 3.0)).abs() < 1e-12);
}
