//! Slice visualizations: an SVG overlay of the predicted boundary semantics
//! and a PPM dump of the raw grayscale image.
//!
//! Both renderers are pure string/byte builders over already-computed
//! results, with fixed two-decimal float formatting so identical inputs
//! produce byte-identical files.

use bseq_core::geometry::{Point, VertexSequence};
use bseq_core::raster::GrayImage;
use std::fmt::Write as _;

/// Fill/stroke per semantic class (0 = normal, 1 = faint, 2 = absent).
pub const CLASS_COLORS: [&str; 3] = ["#2ca02c", "#ff7f0e", "#d62728"];

/// Canvas pixels per image pixel.
pub const SVG_SCALE: f64 = 8.0;

const STRIP_HEIGHT: f64 = 14.0;
const STRIP_GAP: f64 = 6.0;
const LABEL_WIDTH: f64 = 42.0;

fn color(class: u8) -> &'static str {
    CLASS_COLORS[usize::from(class).min(CLASS_COLORS.len() - 1)]
}

fn canvas(p: Point) -> (f64, f64) {
    ((p.x + 0.5) * SVG_SCALE, (p.y + 0.5) * SVG_SCALE)
}

/// Renders one slice's result as SVG: the closed vertex polygon with each
/// segment colored by the predicted class of its starting vertex, a marker
/// ray from the pole to vertex 0 (the 0-degree ray), and two horizontal
/// band strips comparing predicted and reference classes per vertex.
pub fn svg_overlay(
    image_size: usize,
    pole: Point,
    vertices: &VertexSequence,
    predicted: &[u8],
    reference: &[u8],
) -> String {
    let n = vertices.len();
    assert_eq!(predicted.len(), n, "one predicted class per vertex");
    assert_eq!(reference.len(), n, "one reference class per vertex");

    let side = image_size as f64 * SVG_SCALE;
    let strips_top = side + STRIP_GAP;
    let height = strips_top + 2.0 * (STRIP_HEIGHT + STRIP_GAP);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{side:.2}\" height=\"{height:.2}\" viewBox=\"0 0 {side:.2} {height:.2}\">"
    );
    let _ = writeln!(svg, "  <rect width=\"{side:.2}\" height=\"{height:.2}\" fill=\"#111111\"/>");

    let _ = writeln!(svg, "  <g id=\"start-ray\">");
    let (px, py) = canvas(pole);
    if let Some(&first) = vertices.points.first() {
        let (vx, vy) = canvas(first);
        let _ = writeln!(
            svg,
            "    <line x1=\"{px:.2}\" y1=\"{py:.2}\" x2=\"{vx:.2}\" y2=\"{vy:.2}\" stroke=\"#ffffff\" stroke-width=\"1.00\" stroke-dasharray=\"4 3\"/>"
        );
    }
    let _ = writeln!(
        svg,
        "    <circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3.00\" fill=\"#ffffff\"/>"
    );
    let _ = writeln!(svg, "  </g>");

    let _ = writeln!(svg, "  <g id=\"boundary\" stroke-width=\"2.50\" stroke-linecap=\"round\">");
    for i in 0..n {
        let (x1, y1) = canvas(vertices.points[i]);
        let (x2, y2) = canvas(vertices.points[(i + 1) % n]);
        let _ = writeln!(
            svg,
            "    <line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{}\"/>",
            color(predicted[i])
        );
    }
    let _ = writeln!(svg, "  </g>");

    for (row, (id, classes)) in
        [("predicted", predicted), ("reference", reference)].iter().enumerate()
    {
        let top = strips_top + row as f64 * (STRIP_HEIGHT + STRIP_GAP);
        let _ = writeln!(svg, "  <g id=\"{id}-strip\">");
        let _ = writeln!(
            svg,
            "    <text x=\"2.00\" y=\"{:.2}\" fill=\"#ffffff\" font-family=\"monospace\" font-size=\"11.00\">{}</text>",
            top + STRIP_HEIGHT - 3.0,
            if row == 0 { "pred" } else { "ref" }
        );
        let cell = (side - LABEL_WIDTH) / n as f64;
        for (i, &class) in classes.iter().enumerate() {
            let x = LABEL_WIDTH + i as f64 * cell;
            let _ = writeln!(
                svg,
                "    <rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{cell:.2}\" height=\"{STRIP_HEIGHT:.2}\" fill=\"{}\"/>",
                color(class)
            );
        }
        let _ = writeln!(svg, "  </g>");
    }

    svg.push_str("</svg>\n");
    svg
}

/// Binary PPM (P6) grayscale dump: each sample is clamped to `[0,1]`,
/// scaled to `0..=255`, and written as an equal R=G=B triplet.
pub fn ppm_p6(image: &GrayImage) -> Vec<u8> {
    let mut bytes = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    bytes.reserve(image.data.len() * 3);
    for &v in &image.data {
        let g = (f64::from(v).clamp(0.0, 1.0) * 255.0).round() as u8;
        bytes.extend_from_slice(&[g, g, g]);
    }
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_vertices(n: usize) -> VertexSequence {
        let points = (0..n)
            .map(|i| {
                let t = (i as f64 / n as f64) * std::f64::consts::TAU;
                Point { x: 32.0 + 10.0 * t.cos(), y: 32.0 + 10.0 * t.sin() }
            })
            .collect();
        VertexSequence { points, synthetic: vec![false; n] }
    }

    #[test]
    fn boundary_group_has_one_segment_per_vertex() {
        let vertices = square_vertices(90);
        let pred: Vec<u8> = (0..90).map(|i| (i % 3) as u8).collect();
        let gt = vec![0u8; 90];
        let svg = svg_overlay(64, Point { x: 32.0, y: 32.0 }, &vertices, &pred, &gt);
        let boundary = svg
            .split("<g id=\"boundary\"")
            .nth(1)
            .and_then(|rest| rest.split("</g>").next())
            .unwrap();
        assert_eq!(boundary.matches("<line").count(), 90);
        for color in CLASS_COLORS {
            assert!(boundary.contains(color), "missing {color}");
        }
    }

    #[test]
    fn strips_reflect_the_class_sequences() {
        let vertices = square_vertices(12);
        let pred = vec![0u8; 12];
        let gt: Vec<u8> = (0..12).map(|i| (i % 3) as u8).collect();
        let svg = svg_overlay(64, Point { x: 32.0, y: 32.0 }, &vertices, &pred, &gt);
        let pred_strip = svg
            .split("<g id=\"predicted-strip\"")
            .nth(1)
            .and_then(|rest| rest.split("</g>").next())
            .unwrap();
        assert_eq!(pred_strip.matches("<rect").count(), 12);
        // Uniform class-0 predictions color every cell with the class-0 fill.
        assert_eq!(pred_strip.matches(CLASS_COLORS[0]).count(), 12);
        assert_eq!(pred_strip.matches(CLASS_COLORS[1]).count(), 0);
        let ref_strip = svg
            .split("<g id=\"reference-strip\"")
            .nth(1)
            .and_then(|rest| rest.split("</g>").next())
            .unwrap();
        assert_eq!(ref_strip.matches("<rect").count(), 12);
        assert_eq!(ref_strip.matches(CLASS_COLORS[2]).count(), 4);
    }

    #[test]
    fn renderers_are_deterministic() {
        let vertices = square_vertices(30);
        let pred: Vec<u8> = (0..30).map(|i| (i % 3) as u8).collect();
        let gt: Vec<u8> = (0..30).map(|i| ((i + 1) % 3) as u8).collect();
        let pole = Point { x: 31.7, y: 32.4 };
        let a = svg_overlay(64, pole, &vertices, &pred, &gt);
        let b = svg_overlay(64, pole, &vertices, &pred, &gt);
        assert_eq!(a, b);
        assert!(a.contains("start-ray"));
    }

    #[test]
    fn ppm_has_exact_header_and_clamped_payload() {
        let mut image = GrayImage::new(3, 2);
        image.data = vec![0.0, 0.5, 1.0, -1.0, 2.0, 0.25];
        let bytes = ppm_p6(&image);
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        let payload = &bytes[b"P6\n3 2\n255\n".len()..];
        assert_eq!(payload.len(), 6 * 3);
        assert_eq!(&payload[..3], &[0, 0, 0]);
        assert_eq!(&payload[3..6], &[128, 128, 128]);
        assert_eq!(&payload[6..9], &[255, 255, 255]);
        assert_eq!(&payload[9..12], &[0, 0, 0]);
        assert_eq!(&payload[12..15], &[255, 255, 255]);
        assert_eq!(&payload[15..18], &[64, 64, 64]);
    }
}
