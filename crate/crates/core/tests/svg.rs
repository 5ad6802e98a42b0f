mod common;

use common::{axis_camera, rng};
use nalgebra::Vector3;
use rand::Rng;
use resvg::{tiny_skia, usvg};
use sketch3d_core::io::{export_svg, svg_document};
use sketch3d_core::pipeline::{render_curves, RenderSettings};
use sketch3d_core::raster::RasterConfig;
use sketch3d_core::{Aabb, CubicBezier3D, ImageBuffer, StrokeSet, Superquadric};

const RES: usize = 96;

fn settings(width: f64) -> RenderSettings {
    let mut s = RenderSettings::for_scene(&Aabb::unit(), RES);
    s.raster = RasterConfig { width, softness: 1.0 };
    s
}

fn gentle_curve(r: &mut rand_chacha::ChaCha8Rng) -> CubicBezier3D {
    let mut p = || Vector3::from_fn(|_, _| r.random_range(-0.7..0.7));
    CubicBezier3D::new(p(), p(), p(), p())
}

/// Rasterizes an SVG document on white with resvg and returns luminance.
fn rasterize_svg(doc: &str, w: usize, h: usize) -> ImageBuffer {
    let tree = usvg::Tree::from_str(doc, &usvg::Options::default()).unwrap();
    let mut pixmap = tiny_skia::Pixmap::new(w as u32, h as u32).unwrap();
    pixmap.fill(tiny_skia::Color::WHITE);
    resvg::render(&tree, tiny_skia::Transform::identity(), &mut pixmap.as_mut());
    let data = pixmap
        .pixels()
        .iter()
        .map(|p| {
            let c = p.demultiply();
            (0.299 * c.red() as f64 + 0.587 * c.green() as f64 + 0.114 * c.blue() as f64) / 255.0
        })
        .collect();
    ImageBuffer::from_vec(w, h, data).unwrap()
}

#[test]
fn one_curve_gives_one_cubic_path() {
    let mut r = rng(80);
    let strokes = StrokeSet::new(vec![gentle_curve(&mut r)], vec![]).unwrap();
    let cam = axis_camera(4.0, 120.0, RES);
    let (doc, report) = svg_document(&strokes, &cam, &settings(2.0), 2.0);
    assert_eq!(report.paths, 1);
    assert_eq!(report.polylines, 0);
    let xml = roxmltree::Document::parse(&doc).unwrap();
    let root = xml.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.attribute("width"), Some("96"));
    let paths: Vec<_> = xml.descendants().filter(|n| n.has_tag_name("path")).collect();
    assert_eq!(paths.len(), 1);
    let d = paths[0].attribute("d").unwrap();
    let tokens: Vec<&str> = d.split_whitespace().collect();
    assert_eq!(tokens[0], "M");
    assert_eq!(tokens[3], "C");
    let numbers: Vec<f64> = tokens.iter().filter_map(|t| t.parse().ok()).collect();
    assert_eq!(numbers.len(), 8);
    let projected = cam.project_curve(&strokes.curves[0]).unwrap();
    for (j, p) in projected.points.iter().enumerate() {
        assert!((numbers[2 * j] - p.x).abs() <= 5e-4 && (numbers[2 * j + 1] - p.y).abs() <= 5e-4);
    }
    let group = xml.descendants().find(|n| n.has_tag_name("g")).unwrap();
    assert_eq!(group.attribute("fill"), Some("none"));
    assert_eq!(group.attribute("stroke"), Some("black"));
    assert_eq!(group.attribute("stroke-linecap"), Some("round"));
}

#[test]
fn curves_behind_the_camera_are_skipped() {
    let cam = axis_camera(4.0, 120.0, RES);
    let behind = CubicBezier3D::new(
        Vector3::new(0.0, 0.0, 6.0),
        Vector3::new(0.1, 0.0, 6.0),
        Vector3::new(0.2, 0.0, 6.0),
        Vector3::new(0.3, 0.0, 6.0),
    );
    let strokes = StrokeSet::new(vec![behind], vec![]).unwrap();
    let (doc, report) = svg_document(&strokes, &cam, &settings(2.0), 2.0);
    assert_eq!(report.paths, 0);
    assert_eq!(report.skipped_curves, vec![0]);
    let xml = roxmltree::Document::parse(&doc).unwrap();
    assert_eq!(xml.descendants().filter(|n| n.has_tag_name("path")).count(), 0);
}

#[test]
fn quadric_contours_become_polylines() {
    let cam = axis_camera(4.0, 120.0, RES);
    let strokes = StrokeSet::new(vec![], vec![Superquadric::sphere(Vector3::zeros(), 0.6)]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.svg");
    let report = export_svg(&strokes, &cam, &settings(2.0), &path, 2.0).unwrap();
    assert!(report.polylines >= 1);
    let text = std::fs::read_to_string(&path).unwrap();
    let xml = roxmltree::Document::parse(&text).unwrap();
    let lines: Vec<_> = xml.descendants().filter(|n| n.has_tag_name("polyline")).collect();
    assert_eq!(lines.len(), report.polylines);
    // traced points lie near the projected silhouette radius
    let rp = 120.0 * 0.6 / (16.0f64 - 0.36).sqrt();
    let c = RES as f64 / 2.0;
    for l in lines {
        for pair in l.attribute("points").unwrap().split_whitespace() {
            let (x, y) = pair.split_once(',').unwrap();
            let r = ((x.parse::<f64>().unwrap() - c).powi(2) + (y.parse::<f64>().unwrap() - c).powi(2)).sqrt();
            assert!((r - rp).abs() < 4.0, "point at radius {r}, silhouette {rp}");
        }
    }
    let unwritable = dir.path().join("missing/dir/s.svg");
    assert!(export_svg(&strokes, &cam, &settings(2.0), &unwritable, 2.0).is_err());
}

#[test]
fn svg_rasterizes_like_the_soft_rasterizer() {
    let mut r = rng(81);
    for case in 0..8 {
        let curves: Vec<CubicBezier3D> = (0..1 + case % 4).map(|_| gentle_curve(&mut r)).collect();
        let strokes = StrokeSet::new(curves, vec![]).unwrap();
        let cam = common::random_camera(&mut r, 4.0, 110.0, RES);
        let width = 2.0 + (case % 3) as f64;
        let s = settings(width);
        let ours = render_curves(&cam, &strokes.curves, &s.raster);
        let (doc, _) = svg_document(&strokes, &cam, &s, width);
        let theirs = rasterize_svg(&doc, RES, RES);
        let mad = ours.mean_abs_diff(&theirs).unwrap();
        assert!(mad < 0.05, "case {case}: mean abs diff {mad}");
    }
}
