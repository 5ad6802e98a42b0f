//! Compact binary stroke files.
//!
//! Layout (little-endian): magic `3DDL`, `u16` version, `u16` curve count,
//! `u16` superquadric count, `u8` precision (0 = f16, 1 = f32), then 12
//! numbers per curve followed by 12 per superquadric.

use std::path::Path;

use half::f16;

use crate::error::{Error, Result};
use crate::geometry::{CubicBezier3D, ShapeBounds, Superquadric};
use crate::optimize::{StrokeSet, CURVE_PARAMS};

pub const STROKE_MAGIC: &[u8; 4] = b"3DDL";
pub const STROKE_VERSION: u16 = 1;
pub const STROKE_HEADER_LEN: usize = 11;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    Half,
    Single,
}

impl Precision {
    fn flag(self) -> u8 {
        match self {
            Precision::Half => 0,
            Precision::Single => 1,
        }
    }

    pub fn bytes_per_number(self) -> usize {
        match self {
            Precision::Half => 2,
            Precision::Single => 4,
        }
    }
}

pub fn encode_strokes(strokes: &StrokeSet, precision: Precision) -> Result<Vec<u8>> {
    strokes.validate()?;
    let params = strokes.to_params();
    let mut out = Vec::with_capacity(STROKE_HEADER_LEN + params.len() * precision.bytes_per_number());
    out.extend_from_slice(STROKE_MAGIC);
    out.extend_from_slice(&STROKE_VERSION.to_le_bytes());
    out.extend_from_slice(&(strokes.curves.len() as u16).to_le_bytes());
    out.extend_from_slice(&(strokes.quadrics.len() as u16).to_le_bytes());
    out.push(precision.flag());
    for v in params {
        match precision {
            Precision::Half => {
                let h = f16::from_f64(v);
                if !h.is_finite() {
                    return Err(Error::Domain(format!("value {v} does not fit half precision")));
                }
                out.extend_from_slice(&h.to_le_bytes());
            }
            Precision::Single => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    Ok(out)
}

/// Decodes a stroke file. Superquadric scale and shape are clamped into
/// bounds to absorb quantization at the bound values; quaternions are kept
/// as stored.
pub fn decode_strokes(bytes: &[u8], path: &Path) -> Result<StrokeSet> {
    let bad = |m: String| Error::format(path, m);
    if bytes.len() < STROKE_HEADER_LEN {
        return Err(bad("file shorter than header".into()));
    }
    if &bytes[..4] != STROKE_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let version = u16_at(4);
    if version != STROKE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n_ind = u16_at(6) as usize;
    let n_dep = u16_at(8) as usize;
    let precision = match bytes[10] {
        0 => Precision::Half,
        1 => Precision::Single,
        p => return Err(bad(format!("unknown precision flag {p}"))),
    };
    let count = CURVE_PARAMS * (n_ind + n_dep);
    let payload = &bytes[STROKE_HEADER_LEN..];
    if payload.len() != count * precision.bytes_per_number() {
        return Err(bad(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            count * precision.bytes_per_number()
        )));
    }
    let params: Vec<f64> = match precision {
        Precision::Half => payload
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f64())
            .collect(),
        Precision::Single => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    let mut set = StrokeSet {
        curves: vec![
            CubicBezier3D {
                points: [nalgebra::Vector3::zeros(); 4]
            };
            n_ind
        ],
        quadrics: vec![Superquadric::sphere(nalgebra::Vector3::zeros(), 1.0); n_dep],
    };
    set.set_params(&params)?;
    let b = ShapeBounds::default();
    for q in &mut set.quadrics {
        for a in q.alpha.iter_mut() {
            *a = a.clamp(b.alpha_min, b.alpha_max);
        }
        for e in q.epsilon.iter_mut() {
            *e = e.clamp(b.eps_min, b.eps_max);
        }
    }
    set.validate().map_err(|e| bad(e.to_string()))?;
    Ok(set)
}

pub fn save_strokes(strokes: &StrokeSet, path: &Path, precision: Precision) -> Result<()> {
    let bytes = encode_strokes(strokes, precision)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_strokes(path: &Path) -> Result<StrokeSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_strokes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn header_checks() {
        let p = Path::new("x.3ddl");
        let s = StrokeSet::new(vec![], vec![Superquadric::sphere(Vector3::zeros(), 0.5)]).unwrap();
        let mut b = encode_strokes(&s, Precision::Half).unwrap();
        assert_eq!(b.len(), STROKE_HEADER_LEN + 24);
        assert_eq!(decode_strokes(&b, p).unwrap(), s);
        b[0] = b'X';
        assert!(decode_strokes(&b, p).is_err());
        let b = encode_strokes(&s, Precision::Single).unwrap();
        assert!(decode_strokes(&b[..b.len() - 1], p).is_err());
    }
}
