//! PLY mesh import (ASCII, binary little- and big-endian) and binary
//! little-endian export.

use crate::geometry::TriMesh;
use crate::{Error, Result, Vec3};

/// Number of distinct label colors before the palette repeats.
pub const PALETTE_SIZE: usize = 64;
const UNLABELED_COLOR: [u8; 3] = [160, 160, 160];

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    let (r, g, b) = match i as i32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

/// Fixed label palette: golden-ratio hue steps with alternating saturation
/// and value so neighbors in id stay distinguishable.
pub fn palette() -> [[u8; 3]; PALETTE_SIZE] {
    std::array::from_fn(|i| {
        let hue = (i as f64 * 0.618_033_988_749_895).fract();
        let s = [0.85, 0.6, 0.95, 0.7][i % 4];
        let v = [0.95, 0.8, 0.65][i % 3];
        hsv_to_rgb(hue, s, v)
    })
}

/// Display color of a plane label; unassigned vertices are gray.
pub fn label_color(label: i32) -> [u8; 3] {
    if label < 0 {
        UNLABELED_COLOR
    } else {
        palette()[label as usize % PALETTE_SIZE]
    }
}

pub(crate) fn vertex_colors(mesh: &TriMesh) -> Vec<[u8; 3]> {
    let table = palette();
    (0..mesh.vertices.len())
        .map(|v| match mesh.label(v) {
            l if l < 0 => UNLABELED_COLOR,
            l => table[l as usize % PALETTE_SIZE],
        })
        .collect()
}

/// Binary little-endian PLY with double positions, float normals and
/// embeddings (when present), palette colors and an `int plane_id`.
pub fn write_ply(mesh: &TriMesh) -> Result<Vec<u8>> {
    mesh.validate()?;
    let n = mesh.vertices.len();
    let has_normals = mesh.has_normals();
    let labels: Vec<i32> = (0..n).map(|v| mesh.label(v)).collect();
    let mut header = String::from("ply\nformat binary_little_endian 1.0\ncomment planefield mesh\n");
    header += &format!("element vertex {n}\n");
    header += "property double x\nproperty double y\nproperty double z\n";
    if has_normals {
        header += "property float nx\nproperty float ny\nproperty float nz\n";
    }
    if mesh.embeddings.is_some() {
        header += "property float ex\nproperty float ey\nproperty float ez\n";
    }
    header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    header += "property int plane_id\n";
    header += &format!("element face {}\n", mesh.faces.len());
    header += "property list uchar int vertex_indices\nend_header\n";

    let mut out = header.into_bytes();
    let colors = vertex_colors(mesh);
    for v in 0..n {
        for x in mesh.vertices[v].iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        if has_normals {
            for x in mesh.normals[v].iter() {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        if let Some(e) = &mesh.embeddings {
            for x in e[v].iter() {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&colors[v]);
        out.extend_from_slice(&labels[v].to_le_bytes());
    }
    for f in &mesh.faces {
        out.push(3);
        for &i in f {
            let i = i32::try_from(i).map_err(|_| Error::invalid("vertex index exceeds i32"))?;
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
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
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return Err(Error::parse(format!("unknown PLY type {name:?}"))),
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
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(Scalar, String),
    List(Scalar, Scalar, String),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::parse("PLY header has no end_header"))?;
    let mut body_start = end + END.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::parse("PLY header is not UTF-8"))?;
    let mut lines = text.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(Error::parse("missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, version] => {
                if *version != "1.0" {
                    return Err(Error::parse(format!("unsupported PLY version {version}")));
                }
                format = Some(match *fmt {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => Format::BinaryBe,
                    _ => return Err(Error::parse(format!("unknown PLY format {fmt:?}"))),
                });
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse(format!("bad element count {count:?}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => {
                let count_ty = Scalar::parse(count_ty)?;
                if matches!(count_ty, Scalar::F32 | Scalar::F64) {
                    return Err(Error::parse("PLY list counts must be integers"));
                }
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse("property before any element"))?
                    .properties
                    .push(Property::List(count_ty, Scalar::parse(item_ty)?, name.to_string()));
            }
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::parse("property before any element"))?
                .properties
                .push(Property::Scalar(Scalar::parse(ty)?, name.to_string())),
            _ => return Err(Error::parse(format!("unrecognized PLY header line {line:?}"))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| Error::parse("PLY header has no format line"))?,
        elements,
        body_start,
    })
}

/// Sequential reader over the body, yielding every value as `f64`.
enum Body<'a> {
    Binary { bytes: &'a [u8], pos: usize, big_endian: bool },
    Ascii { tokens: std::str::SplitAsciiWhitespace<'a> },
}

impl Body<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64> {
        match self {
            Body::Binary { bytes, pos, big_endian } => {
                let size = ty.size();
                let chunk = bytes
                    .get(*pos..*pos + size)
                    .ok_or_else(|| Error::parse("PLY body ends early"))?;
                *pos += size;
                let mut buf = [0u8; 8];
                buf[..size].copy_from_slice(chunk);
                if *big_endian {
                    buf[..size].reverse();
                }
                Ok(match ty {
                    Scalar::I8 => buf[0] as i8 as f64,
                    Scalar::U8 => buf[0] as f64,
                    Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
                    Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
                    Scalar::I32 => i32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
                    Scalar::U32 => u32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
                    Scalar::F32 => f32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
                    Scalar::F64 => f64::from_le_bytes(buf),
                })
            }
            Body::Ascii { tokens } => {
                let tok = tokens.next().ok_or_else(|| Error::parse("PLY body ends early"))?;
                let x: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(format!("bad PLY value {tok:?}")))?;
                let integral = !matches!(ty, Scalar::F32 | Scalar::F64);
                if integral && x.fract() != 0.0 {
                    return Err(Error::parse(format!("expected an integer, found {tok:?}")));
                }
                Ok(x)
            }
        }
    }

    fn remaining_hint(&self) -> usize {
        match self {
            Body::Binary { bytes, pos, .. } => bytes.len().saturating_sub(*pos),
            // every ASCII value needs at least two bytes
            Body::Ascii { tokens } => tokens.clone().size_hint().1.unwrap_or(usize::MAX),
        }
    }
}

fn list_len(x: f64) -> Result<usize> {
    if x < 0.0 || x > 1e6 {
        return Err(Error::parse(format!("bad PLY list length {x}")));
    }
    Ok(x as usize)
}

/// Parses a PLY mesh. Recognized vertex properties are `x y z`, optional
/// `nx ny nz`, `ex ey ez` and `plane_id`; faces come from the
/// `vertex_indices` (or `vertex_index`) list and polygons are fan
/// triangulated. Normals are kept only when every one is non-zero.
pub fn read_ply(bytes: &[u8]) -> Result<TriMesh> {
    let header = parse_header(bytes)?;
    let body_bytes = &bytes[header.body_start..];
    let mut body = match header.format {
        Format::Ascii => Body::Ascii {
            tokens: std::str::from_utf8(body_bytes)
                .map_err(|_| Error::parse("ASCII PLY body is not UTF-8"))?
                .split_ascii_whitespace(),
        },
        Format::BinaryLe | Format::BinaryBe => Body::Binary {
            bytes: body_bytes,
            pos: 0,
            big_endian: header.format == Format::BinaryBe,
        },
    };

    let mut mesh = TriMesh::default();
    let mut normals = Vec::new();
    let mut embeddings = Vec::new();
    let mut labels = Vec::new();
    let mut saw_vertex = false;
    for element in &header.elements {
        // each row takes at least one byte, so counts beyond the body are bogus
        if element.count > body.remaining_hint() && !element.properties.is_empty() {
            return Err(Error::parse(format!(
                "element {} claims {} rows, more than the file holds",
                element.name, element.count
            )));
        }
        let find = |name: &str| {
            element
                .properties
                .iter()
                .position(|p| matches!(p, Property::Scalar(_, n) if n == name))
        };
        match element.name.as_str() {
            "vertex" => {
                if saw_vertex {
                    return Err(Error::parse("duplicate vertex element"));
                }
                saw_vertex = true;
                let pos = ["x", "y", "z"].map(find);
                let [Some(px), Some(py), Some(pz)] = pos else {
                    return Err(Error::parse("vertex element lacks x, y or z"));
                };
                let nrm = ["nx", "ny", "nz"].map(find);
                let emb = ["ex", "ey", "ez"].map(find);
                let label = find("plane_id");
                let mut row = vec![0.0; element.properties.len()];
                mesh.vertices.reserve(element.count.min(1 << 20));
                for _ in 0..element.count {
                    for (slot, prop) in row.iter_mut().zip(&element.properties) {
                        *slot = match prop {
                            Property::Scalar(ty, _) => body.read(*ty)?,
                            Property::List(cty, ity, _) => {
                                for _ in 0..list_len(body.read(*cty)?)? {
                                    body.read(*ity)?;
                                }
                                0.0
                            }
                        };
                    }
                    let p = Vec3::new(row[px], row[py], row[pz]);
                    if !p.iter().all(|x| x.is_finite()) {
                        return Err(Error::parse("non-finite vertex position"));
                    }
                    mesh.vertices.push(p);
                    if let [Some(a), Some(b), Some(c)] = nrm {
                        normals.push(Vec3::new(row[a], row[b], row[c]));
                    }
                    if let [Some(a), Some(b), Some(c)] = emb {
                        embeddings.push(Vec3::new(row[a], row[b], row[c]));
                    }
                    if let Some(l) = label {
                        let x = row[l];
                        if x.fract() != 0.0 || x < i32::MIN as f64 || x > i32::MAX as f64 {
                            return Err(Error::parse(format!("bad plane_id {x}")));
                        }
                        labels.push(x as i32);
                    }
                }
                if label.is_some() {
                    mesh.labels = Some(std::mem::take(&mut labels));
                }
                if emb.iter().all(Option::is_some) && embeddings.iter().all(|e| e.iter().all(|x| x.is_finite())) {
                    mesh.embeddings = Some(std::mem::take(&mut embeddings));
                }
            }
            "face" => {
                let list = element.properties.iter().position(
                    |p| matches!(p, Property::List(_, _, n) if n == "vertex_indices" || n == "vertex_index"),
                );
                for _ in 0..element.count {
                    for (i, prop) in element.properties.iter().enumerate() {
                        match prop {
                            Property::Scalar(ty, _) => {
                                body.read(*ty)?;
                            }
                            Property::List(cty, ity, _) => {
                                let len = list_len(body.read(*cty)?)?;
                                let mut poly = Vec::with_capacity(len.min(16));
                                for _ in 0..len {
                                    poly.push(body.read(*ity)?);
                                }
                                if Some(i) == list {
                                    if len < 3 {
                                        return Err(Error::parse(format!("face with {len} vertices")));
                                    }
                                    let idx: Vec<usize> = poly
                                        .iter()
                                        .map(|&x| {
                                            if x < 0.0 || x.fract() != 0.0 {
                                                Err(Error::parse(format!("bad vertex index {x}")))
                                            } else {
                                                Ok(x as usize)
                                            }
                                        })
                                        .collect::<Result<_>>()?;
                                    for k in 1..len - 1 {
                                        mesh.faces.push([idx[0], idx[k], idx[k + 1]]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            _ => {
                for _ in 0..element.count {
                    for prop in &element.properties {
                        match prop {
                            Property::Scalar(ty, _) => {
                                body.read(*ty)?;
                            }
                            Property::List(cty, ity, _) => {
                                for _ in 0..list_len(body.read(*cty)?)? {
                                    body.read(*ity)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if !saw_vertex {
        return Err(Error::parse("PLY file has no vertex element"));
    }
    let n = mesh.vertices.len();
    if let Some(f) = mesh.faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
        return Err(Error::parse(format!("face {f:?} references a missing vertex (n = {n})")));
    }
    if !normals.is_empty() {
        let unit: Option<Vec<Vec3>> = normals
            .iter()
            .map(|v| v.try_normalize(1e-12).filter(|u| u.iter().all(|x| x.is_finite())))
            .collect();
        mesh.normals = unit.unwrap_or_default();
    }
    Ok(mesh)
}
