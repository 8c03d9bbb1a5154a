//! Minimal PLY support: colored vertex clouds (`x y z red green blue`).
//!
//! Writing always produces `binary_little_endian 1.0` with float positions
//! and uchar colors. Reading additionally accepts `ascii 1.0` and float or
//! double positions so static background scans can be loaded verbatim.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::frame::{CloudPoint, PointCloud};
use crate::geometry::Rgb8;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PLY header: {0}")]
    Header(String),
    #[error("vertex {index}: {msg}")]
    Body { index: usize, msg: String },
}

pub fn write_ply<W: Write>(mut out: W, points: &[CloudPoint]) -> std::io::Result<()> {
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    )?;
    let mut buf = Vec::with_capacity(points.len() * 15);
    for p in points {
        for c in p.position {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        buf.extend_from_slice(&[p.color.r, p.color.g, p.color.b]);
    }
    out.write_all(&buf)
}

#[derive(Clone, Copy, PartialEq)]
enum Scalar {
    F32,
    F64,
    U8,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "float" | "float32" => Some(Scalar::F32),
            "double" | "float64" => Some(Scalar::F64),
            "uchar" | "uint8" => Some(Scalar::U8),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            Scalar::F32 => 4,
            Scalar::F64 => 8,
            Scalar::U8 => 1,
        }
    }
}

pub fn read_ply_file(path: &Path) -> Result<PointCloud, PlyError> {
    read_ply(BufReader::new(std::fs::File::open(path)?))
}

pub fn read_ply<R: BufRead>(mut input: R) -> Result<PointCloud, PlyError> {
    let mut line = String::new();
    let mut next_line = |input: &mut R| -> Result<String, PlyError> {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(PlyError::Header("unexpected end of header".into()));
        }
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut input)? != "ply" {
        return Err(PlyError::Header("missing 'ply' signature".into()));
    }
    let mut binary = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    loop {
        let l = next_line(&mut input)?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", "1.0"] => binary = Some(true),
            ["format", "ascii", "1.0"] => binary = Some(false),
            ["format", other, ..] => return Err(PlyError::Header(format!("unsupported format {other}"))),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| PlyError::Header(format!("bad vertex count {n}")))?);
                in_vertex = true;
            }
            ["element", name, _] => return Err(PlyError::Header(format!("unsupported element {name}"))),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| PlyError::Header(format!("unsupported type {ty}")))?;
                props.push((name.to_string(), s));
            }
            _ => return Err(PlyError::Header(format!("unrecognized line '{l}'"))),
        }
    }
    let binary = binary.ok_or_else(|| PlyError::Header("missing format line".into()))?;
    let count = count.ok_or_else(|| PlyError::Header("missing vertex element".into()))?;
    let pos = |n: &str| props.iter().position(|(p, _)| p == n);
    let required = ["x", "y", "z", "red", "green", "blue"];
    let cols: Vec<usize> = required
        .iter()
        .map(|n| pos(n).ok_or_else(|| PlyError::Header(format!("missing property {n}"))))
        .collect::<Result<_, _>>()?;
    for (i, c) in cols.iter().enumerate() {
        let want_float = i < 3;
        let is_float = props[*c].1 != Scalar::U8;
        if want_float != is_float {
            return Err(PlyError::Header(format!("property {} has the wrong type", required[i])));
        }
    }

    let mut points = Vec::with_capacity(count);
    let mut values = vec![0f64; props.len()];
    if binary {
        let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
        let mut rec = vec![0u8; stride];
        for index in 0..count {
            input.read_exact(&mut rec).map_err(|e| PlyError::Body { index, msg: e.to_string() })?;
            let mut o = 0;
            for (slot, (_, s)) in values.iter_mut().zip(&props) {
                *slot = match s {
                    Scalar::F32 => f64::from(f32::from_le_bytes(rec[o..o + 4].try_into().unwrap())),
                    Scalar::F64 => f64::from_le_bytes(rec[o..o + 8].try_into().unwrap()),
                    Scalar::U8 => f64::from(rec[o]),
                };
                o += s.size();
            }
            points.push(to_point(&values, &cols));
        }
    } else {
        let mut l = String::new();
        for index in 0..count {
            l.clear();
            if input.read_line(&mut l)? == 0 {
                return Err(PlyError::Body { index, msg: "unexpected end of file".into() });
            }
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != props.len() {
                return Err(PlyError::Body { index, msg: format!("expected {} values", props.len()) });
            }
            for (slot, t) in values.iter_mut().zip(&toks) {
                *slot = t.parse().map_err(|_| PlyError::Body { index, msg: format!("bad number '{t}'") })?;
            }
            points.push(to_point(&values, &cols));
        }
    }
    Ok(PointCloud { points })
}

fn to_point(values: &[f64], cols: &[usize]) -> CloudPoint {
    CloudPoint {
        position: [values[cols[0]] as f32, values[cols[1]] as f32, values[cols[2]] as f32],
        color: Rgb8::new(values[cols[3]] as u8, values[cols[4]] as u8, values[cols[5]] as u8),
    }
}
