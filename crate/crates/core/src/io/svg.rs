use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;

use crate::canvas::ImageBuffer;
use crate::error::{Error, Result};
use crate::geometry::{Camera, CubicBezier2D};
use crate::optimize::StrokeSet;
use crate::pipeline::{project_curves, render_quadrics, RenderSettings};

/// Ink level above which a contour pixel belongs to a ridge.
const RIDGE_INK: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SvgReport {
    pub paths: usize,
    pub polylines: usize,
    /// Curves skipped because a control point lies behind the camera.
    pub skipped_curves: Vec<usize>,
}

fn neighbors(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    const OFFS: [(i64, i64); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];
    OFFS.iter().filter_map(move |&(dx, dy)| {
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then_some((nx as usize, ny as usize))
    })
}

/// Zhang-Suen thinning of a binary mask, in place.
fn thin(mask: &mut [bool], w: usize, h: usize) {
    let at = |m: &[bool], x: i64, y: i64| {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && m[y as usize * w + x as usize]
    };
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut clear = Vec::new();
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    if !mask[y as usize * w + x as usize] {
                        continue;
                    }
                    // P2..P9 clockwise from north
                    let p = [
                        at(mask, x, y - 1),
                        at(mask, x + 1, y - 1),
                        at(mask, x + 1, y),
                        at(mask, x + 1, y + 1),
                        at(mask, x, y + 1),
                        at(mask, x - 1, y + 1),
                        at(mask, x - 1, y),
                        at(mask, x - 1, y - 1),
                    ];
                    let b = p.iter().filter(|v| **v).count();
                    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                    let (c1, c2) = if pass == 0 {
                        (!(p[0] && p[2] && p[4]), !(p[2] && p[4] && p[6]))
                    } else {
                        (!(p[0] && p[2] && p[6]), !(p[0] && p[4] && p[6]))
                    };
                    if (2..=6).contains(&b) && a == 1 && c1 && c2 {
                        clear.push(y as usize * w + x as usize);
                    }
                }
            }
            changed |= !clear.is_empty();
            for i in clear {
                mask[i] = false;
            }
        }
        if !changed {
            return;
        }
    }
}

/// Traces one-pixel-wide ridges of `ink > 0.5` into polylines of pixel
/// centers.
pub fn trace_ridges(img: &ImageBuffer) -> Vec<Vec<Vector2<f64>>> {
    let (w, h) = (img.width, img.height);
    let mut mask: Vec<bool> = img.data.iter().map(|v| 1.0 - v > RIDGE_INK).collect();
    thin(&mut mask, w, h);
    let degree = |m: &[bool], x: usize, y: usize| neighbors(x, y, w, h).filter(|&(nx, ny)| m[ny * w + nx]).count();

    let mut visited = vec![false; w * h];
    let mut chains = Vec::new();
    let walk = |sx: usize, sy: usize, visited: &mut Vec<bool>| {
        let mut chain = vec![(sx, sy)];
        visited[sy * w + sx] = true;
        let (mut x, mut y) = (sx, sy);
        loop {
            let next = neighbors(x, y, w, h).find(|&(nx, ny)| mask[ny * w + nx] && !visited[ny * w + nx]);
            match next {
                Some((nx, ny)) => {
                    visited[ny * w + nx] = true;
                    chain.push((nx, ny));
                    x = nx;
                    y = ny;
                }
                None => {
                    // close loops back to the start when adjacent
                    if chain.len() > 2 && neighbors(x, y, w, h).any(|p| p == (sx, sy)) {
                        chain.push((sx, sy));
                    }
                    break;
                }
            }
        }
        chain
    };
    // endpoints first so open chains are traced end to end
    for pass in 0..2 {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !mask[i] || visited[i] || (pass == 0 && degree(&mask, x, y) != 1) {
                    continue;
                }
                let c = walk(x, y, &mut visited);
                if c.len() >= 2 {
                    chains.push(c);
                }
            }
        }
    }
    chains
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|(x, y)| Vector2::new(x as f64 + 0.5, y as f64 + 0.5))
                .collect()
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn path_d(c: &CubicBezier2D) -> String {
    let p = &c.points;
    format!(
        "M {} {} C {} {} {} {} {} {}",
        fmt_num(p[0].x),
        fmt_num(p[0].y),
        fmt_num(p[1].x),
        fmt_num(p[1].y),
        fmt_num(p[2].x),
        fmt_num(p[2].y),
        fmt_num(p[3].x),
        fmt_num(p[3].y)
    )
}

/// SVG document for the sketch seen from `cam`; `width_px` is the stroke
/// width.
pub fn svg_document(
    strokes: &StrokeSet,
    cam: &Camera,
    settings: &RenderSettings,
    width_px: f64,
) -> (String, SvgReport) {
    let (visible, hidden) = project_curves(cam, &strokes.curves);
    for i in &hidden {
        log::warn!("curve {i} has a control point behind the camera; skipped");
    }
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = cam.width,
        h = cam.height
    );
    let _ = writeln!(
        out,
        r#"<g fill="none" stroke="black" stroke-width="{}" stroke-linecap="round" stroke-linejoin="round">"#,
        fmt_num(width_px)
    );
    for (_, c) in &visible {
        let _ = writeln!(out, r#"<path d="{}"/>"#, path_d(c));
    }
    let mut polylines = 0;
    if !strokes.quadrics.is_empty() {
        let contour = render_quadrics(cam, &strokes.quadrics, settings);
        for chain in trace_ridges(&contour) {
            let pts: Vec<String> = chain
                .iter()
                .map(|p| format!("{},{}", fmt_num(p.x), fmt_num(p.y)))
                .collect();
            let _ = writeln!(out, r#"<polyline points="{}"/>"#, pts.join(" "));
            polylines += 1;
        }
    }
    out.push_str("</g>\n</svg>\n");
    (
        out,
        SvgReport {
            paths: visible.len(),
            polylines,
            skipped_curves: hidden,
        },
    )
}

pub fn export_svg(
    strokes: &StrokeSet,
    cam: &Camera,
    settings: &RenderSettings,
    path: &Path,
    width_px: f64,
) -> Result<SvgReport> {
    let (doc, report) = svg_document(strokes, cam, settings, width_px);
    std::fs::write(path, doc).map_err(|e| Error::io(path, e))?;
    Ok(report)
}
