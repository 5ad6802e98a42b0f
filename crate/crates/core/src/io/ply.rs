use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    /// Rounds a parsed ASCII value to the declared storage type.
    fn quantize(self, v: f64) -> f64 {
        match self {
            Self::F32 => v as f32 as f64,
            _ => v,
        }
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Parses the vertex positions of a PLY file (ASCII or binary little
/// endian). Properties other than `x`, `y`, `z` are ignored.
pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<Vec<Vector3<f64>>> {
    let bad = |msg: String| Error::format(path, msg);
    let header_end = bytes
        .windows(10)
        .position(|w| w == b"end_header")
        .ok_or_else(|| bad("missing end_header".into()))?;
    let mut body = header_end + 10;
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) == Some(&b'\n') {
        body += 1;
    }
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| bad("header is not utf-8".into()))?;

    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(bad("missing ply magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => encoding = Some(Encoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(Encoding::BinaryLe),
            ["format", other, ..] => return Err(bad(format!("unsupported format {other}"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", c, v, _] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element".into()))?;
                let c = Scalar::parse(c).ok_or_else(|| bad(format!("unknown type {c}")))?;
                let v = Scalar::parse(v).ok_or_else(|| bad(format!("unknown type {v}")))?;
                el.props.push(Property::List(c, v));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element".into()))?;
                let ty = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown type {ty}")))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            _ => return Err(bad(format!("unrecognized header line '{line}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| bad("missing format line".into()))?;
    let Some(vi) = elements.iter().position(|e| e.name == "vertex") else {
        return Ok(Vec::new());
    };
    let vertex = &elements[vi];
    let axis = |n: &str| {
        vertex
            .props
            .iter()
            .position(|p| matches!(p, Property::Scalar(name, _) if name == n))
            .ok_or_else(|| bad(format!("vertex element lacks property {n}")))
    };
    let xyz = [axis("x")?, axis("y")?, axis("z")?];
    let ty = |k: usize| match vertex.props[k] {
        Property::Scalar(_, t) => t,
        Property::List(..) => unreachable!("axes are scalar properties"),
    };
    let data = &bytes[body..];

    match encoding {
        Encoding::Ascii => {
            let text = std::str::from_utf8(data).map_err(|_| bad("ascii body is not utf-8".into()))?;
            let mut rows = text.lines().filter(|l| !l.trim().is_empty());
            for e in &elements[..vi] {
                for _ in 0..e.count {
                    rows.next().ok_or_else(|| bad("truncated body".into()))?;
                }
            }
            let mut out = Vec::with_capacity(vertex.count);
            for i in 0..vertex.count {
                let row = rows.next().ok_or_else(|| bad(format!("truncated at vertex {i}")))?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(format!("vertex {i}: bad number")))?;
                if vals.len() < vertex.props.len() {
                    return Err(bad(format!("vertex {i}: too few values")));
                }
                out.push(Vector3::from_fn(|a, _| ty(xyz[a]).quantize(vals[xyz[a]])));
            }
            Ok(out)
        }
        Encoding::BinaryLe => {
            let mut pos = 0usize;
            let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
                let s = data
                    .get(*pos..*pos + n)
                    .ok_or_else(|| bad("truncated payload".into()))?;
                *pos += n;
                Ok(s)
            };
            let skip_record = |pos: &mut usize, e: &Element| -> Result<()> {
                for p in &e.props {
                    match p {
                        Property::Scalar(_, t) => {
                            take(pos, t.size())?;
                        }
                        Property::List(c, v) => {
                            let n = c.read(take(pos, c.size())?) as usize;
                            take(pos, n * v.size())?;
                        }
                    }
                }
                Ok(())
            };
            for e in &elements[..vi] {
                for _ in 0..e.count {
                    skip_record(&mut pos, e)?;
                }
            }
            let mut out = Vec::with_capacity(vertex.count);
            for _ in 0..vertex.count {
                let mut vals = [0.0; 3];
                for (k, p) in vertex.props.iter().enumerate() {
                    match p {
                        Property::Scalar(_, t) => {
                            let v = t.read(take(&mut pos, t.size())?);
                            if let Some(a) = xyz.iter().position(|&i| i == k) {
                                vals[a] = v;
                            }
                        }
                        Property::List(c, v) => {
                            let n = c.read(take(&mut pos, c.size())?) as usize;
                            take(&mut pos, n * v.size())?;
                        }
                    }
                }
                out.push(Vector3::from(vals));
            }
            Ok(out)
        }
    }
}

pub fn load_points(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes, path)
}
