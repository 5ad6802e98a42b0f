use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Parses line segments, six whitespace-separated numbers per line. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_segments(text: &str, path: &Path) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        if v.len() != 6 || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::format(
                path,
                format!("line {}: expected six finite numbers", n + 1),
            ));
        }
        out.push((Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5])));
    }
    Ok(out)
}

pub fn load_segments(path: &Path) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_segments(&text, path)
}
