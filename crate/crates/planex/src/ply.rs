//! PLY point clouds: ASCII and binary little-endian. Vertex positions are
//! required; `red`/`green`/`blue` are read when present.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use planex_core::{PointCloud, Vec3};

use crate::error::{io_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List,
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

fn parse_err(message: impl Into<String>) -> Error {
    Error::Parse {
        entry: "ply".into(),
        message: message.into(),
    }
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    read_ply_from(BufReader::new(f)).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            entry: path.display().to_string(),
            message,
        },
        e => e,
    })
}

pub fn read_ply_from<R: BufRead>(mut r: R) -> Result<PointCloud> {
    let mut line = String::new();
    let next_line = |r: &mut R, line: &mut String| -> Result<()> {
        line.clear();
        let n = r.read_line(line).map_err(|e| parse_err(e.to_string()))?;
        if n == 0 {
            return Err(parse_err("unexpected end of header"));
        }
        Ok(())
    };
    next_line(&mut r, &mut line)?;
    if line.trim() != "ply" {
        return Err(parse_err("missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(&mut r, &mut line)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format = Some(Format::Ascii),
            ["format", "binary_little_endian", _] => format = Some(Format::BinaryLe),
            ["format", f, _] => return Err(parse_err(format!("unsupported format '{f}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse_err(format!("bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, _] => elements
                .last_mut()
                .ok_or_else(|| parse_err("property before element"))?
                .props
                .push(Property::List),
            ["property", ty, name] => {
                let s = Scalar::parse(ty).ok_or_else(|| parse_err(format!("unknown property type '{ty}'")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| parse_err("property before element"))?
                    .props
                    .push(Property::Scalar(name.to_string(), s));
            }
            _ => return Err(parse_err(format!("unrecognized header line '{}'", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| parse_err("missing format line"))?;
    let vi = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err("no vertex element"))?;
    // elements ahead of the vertices have to be skipped
    for e in &elements[..vi] {
        skip_element(&mut r, e, format)?;
    }
    read_vertices(&mut r, &elements[vi], format)
}

fn skip_element<R: BufRead>(r: &mut R, e: &Element, format: Format) -> Result<()> {
    match format {
        Format::Ascii => {
            let mut line = String::new();
            for _ in 0..e.count {
                line.clear();
                r.read_line(&mut line).map_err(|e| parse_err(e.to_string()))?;
            }
        }
        Format::BinaryLe => {
            let mut size = 0;
            for p in &e.props {
                match p {
                    Property::Scalar(_, s) => size += s.size(),
                    Property::List => {
                        return Err(parse_err(format!("cannot skip list element '{}' before vertices", e.name)))
                    }
                }
            }
            let mut buf = vec![0u8; size * e.count];
            r.read_exact(&mut buf).map_err(|_| parse_err("truncated element data"))?;
        }
    }
    Ok(())
}

fn read_vertices<R: BufRead>(r: &mut R, e: &Element, format: Format) -> Result<PointCloud> {
    let idx = |name: &str| {
        e.props
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, _) if n == name))
    };
    let (xi, yi, zi) = match (idx("x"), idx("y"), idx("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err("vertex element lacks x/y/z")),
    };
    let color_idx = match (idx("red"), idx("green"), idx("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    if e.props.iter().any(|p| matches!(p, Property::List)) {
        return Err(parse_err("list properties on vertices are not supported"));
    }
    let types: Vec<Scalar> = e
        .props
        .iter()
        .map(|p| match p {
            Property::Scalar(_, s) => *s,
            Property::List => unreachable!(),
        })
        .collect();
    let mut points = Vec::with_capacity(e.count);
    let mut colors = color_idx.map(|_| Vec::with_capacity(e.count));
    let mut values = vec![0.0f64; types.len()];
    let stride: usize = types.iter().map(|t| t.size()).sum();
    let mut buf = vec![0u8; stride];
    let mut line = String::new();
    for v in 0..e.count {
        match format {
            Format::Ascii => {
                line.clear();
                if r.read_line(&mut line).map_err(|e| parse_err(e.to_string()))? == 0 {
                    return Err(parse_err(format!("expected {} vertices, found {v}", e.count)));
                }
                let mut it = line.split_whitespace();
                for slot in values.iter_mut() {
                    let w = it.next().ok_or_else(|| parse_err(format!("vertex {v}: too few values")))?;
                    *slot = w
                        .parse()
                        .map_err(|_| parse_err(format!("vertex {v}: bad number '{w}'")))?;
                }
            }
            Format::BinaryLe => {
                r.read_exact(&mut buf)
                    .map_err(|_| parse_err(format!("expected {} vertices, data ends at {v}", e.count)))?;
                let mut off = 0;
                for (slot, t) in values.iter_mut().zip(&types) {
                    *slot = t.read_le(&buf[off..]);
                    off += t.size();
                }
            }
        }
        points.push(Vec3::new(values[xi], values[yi], values[zi]));
        if let (Some(cs), Some(ci)) = (colors.as_mut(), color_idx) {
            let c = ci.map(|i| {
                let x = values[i];
                if types[i].is_float() {
                    (x * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    x.clamp(0.0, 255.0) as u8
                }
            });
            cs.push(c);
        }
    }
    Ok(PointCloud { points, colors })
}

fn header(cloud: &PointCloud, format: &str) -> String {
    let mut h = format!(
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        cloud.len()
    );
    if cloud.colors.is_some() {
        h.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    h.push_str("end_header\n");
    h
}

pub fn write_ply_ascii<W: Write>(cloud: &PointCloud, mut w: W) -> std::io::Result<()> {
    w.write_all(header(cloud, "ascii").as_bytes())?;
    for (i, p) in cloud.points.iter().enumerate() {
        write!(w, "{} {} {}", p.x, p.y, p.z)?;
        if let Some(c) = &cloud.colors {
            write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_ply_binary<W: Write>(cloud: &PointCloud, mut w: W) -> std::io::Result<()> {
    w.write_all(header(cloud, "binary_little_endian").as_bytes())?;
    for (i, p) in cloud.points.iter().enumerate() {
        for v in [p.x, p.y, p.z] {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Some(c) = &cloud.colors {
            w.write_all(&c[i])?;
        }
    }
    Ok(())
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(f);
    write_ply_binary(cloud, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}
