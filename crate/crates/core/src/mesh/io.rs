//! OFF, OBJ and PLY readers/writers.
//!
//! Coordinates are written with Rust's shortest round-trip float formatting
//! (text formats) or as raw `f64` (binary PLY), so `load(save(mesh))`
//! reproduces coordinates bit-exactly. Polygons with more than three
//! corners are fan-triangulated on load.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::{Point3, TriMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Off,
    Obj,
    Ply,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(Format::Off),
            "obj" => Some(Format::Obj),
            "ply" => Some(Format::Ply),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

fn perr<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

/// Loads a mesh, picking the format from the file extension.
pub fn load(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let format = Format::from_path(path)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown mesh extension: {}", path.display())))?;
    load_as(path, format)
}

pub fn load_as(path: impl AsRef<Path>, format: Format) -> Result<TriMesh> {
    let bytes = fs::read(path)?;
    match format {
        Format::Off => parse_off(std::str::from_utf8(&bytes).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?),
        Format::Obj => parse_obj(std::str::from_utf8(&bytes).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?),
        Format::Ply => parse_ply(&bytes),
    }
}

pub fn save(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = Format::from_path(path)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown mesh extension: {}", path.display())))?;
    let bytes = match format {
        Format::Off => to_off(mesh).into_bytes(),
        Format::Obj => to_obj(mesh).into_bytes(),
        Format::Ply => to_ply(mesh, PlyEncoding::Ascii, &[]),
    };
    fs::write(path, bytes)?;
    Ok(())
}

fn fan(poly: &[usize], out: &mut Vec<[usize; 3]>) {
    for i in 1..poly.len() - 1 {
        out.push([poly[0], poly[i], poly[i + 1]]);
    }
}

/// Tokens of non-comment lines, tagged with their 1-based line number.
fn tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().flat_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        l.split_whitespace().map(move |t| (i + 1, t))
    })
}

pub fn parse_off(text: &str) -> Result<TriMesh> {
    let mut it = tokens(text).peekable();
    match it.peek() {
        Some((_, t)) if t.ends_with("OFF") => {
            it.next();
        }
        _ => {}
    }
    let mut next_num = |what: &str| -> Result<(usize, &str)> {
        it.next().ok_or_else(|| Error::Parse { line: 0, msg: format!("unexpected end of file reading {what}") })
    };
    let parse_usize = |(l, t): (usize, &str)| t.parse::<usize>().or_else(|_| perr(l, format!("expected integer, got {t:?}")));
    let parse_f64 = |(l, t): (usize, &str)| t.parse::<f64>().or_else(|_| perr(l, format!("expected number, got {t:?}")));

    let nv = parse_usize(next_num("vertex count")?)?;
    let nf = parse_usize(next_num("face count")?)?;
    let _ne = parse_usize(next_num("edge count")?)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = parse_f64(next_num("vertex")?)?;
        let y = parse_f64(next_num("vertex")?)?;
        let z = parse_f64(next_num("vertex")?)?;
        vertices.push([x, y, z]);
    }
    let mut triangles = Vec::with_capacity(nf);
    let mut poly = Vec::new();
    for _ in 0..nf {
        let (line, tok) = next_num("face")?;
        let k = parse_usize((line, tok))?;
        if k < 3 {
            return perr(line, format!("face with {k} corners"));
        }
        poly.clear();
        for _ in 0..k {
            poly.push(parse_usize(next_num("face index")?)?);
        }
        fan(&poly, &mut triangles);
    }
    TriMesh::new(vertices, triangles)
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices: Vec<Point3> = Vec::new();
    let mut polys: Vec<(usize, Vec<i64>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let c: Vec<f64> = parts
                    .take(3)
                    .map(|t| t.parse::<f64>().or_else(|_| perr(lineno, format!("bad coordinate {t:?}"))))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return perr(lineno, "vertex needs three coordinates");
                }
                vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let idx: Vec<i64> = parts
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        head.parse::<i64>().or_else(|_| perr(lineno, format!("bad face index {t:?}")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return perr(lineno, "face needs at least three corners");
                }
                polys.push((lineno, idx));
            }
            _ => {}
        }
    }
    let n = vertices.len() as i64;
    let mut triangles = Vec::new();
    for (lineno, idx) in polys {
        let mut poly = Vec::with_capacity(idx.len());
        for i in idx {
            // 1-based, negative indices are relative to the end.
            let v = if i > 0 { i - 1 } else { n + i };
            if v < 0 || v >= n {
                return Err(Error::Validation(format!(
                    "line {lineno}: face references vertex {i} but the file has {n} vertices"
                )));
            }
            poly.push(v as usize);
        }
        fan(&poly, &mut triangles);
    }
    TriMesh::new(vertices, triangles)
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
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

    fn read(self, b: &[u8], little: bool) -> f64 {
        macro_rules! rd {
            ($t:ty, $n:expr) => {{
                let mut a = [0u8; $n];
                a.copy_from_slice(&b[..$n]);
                if little {
                    <$t>::from_le_bytes(a) as f64
                } else {
                    <$t>::from_be_bytes(a) as f64
                }
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => rd!(i16, 2),
            Scalar::U16 => rd!(u16, 2),
            Scalar::I32 => rd!(i32, 4),
            Scalar::U32 => rd!(u32, 4),
            Scalar::F32 => rd!(f32, 4),
            Scalar::F64 => rd!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Parses ASCII and binary (little or big endian) PLY. Any vertex property
/// other than `x`, `y`, `z` becomes a named scalar channel.
pub fn parse_ply(bytes: &[u8]) -> Result<TriMesh> {
    let mut pos = 0;
    let mut lineno = 0;
    let mut read_line = |pos: &mut usize| -> Option<String> {
        if *pos >= bytes.len() {
            return None;
        }
        let end = bytes[*pos..].iter().position(|&b| b == b'\n').map(|e| *pos + e).unwrap_or(bytes.len());
        let line = String::from_utf8_lossy(&bytes[*pos..end]).trim_end_matches('\r').to_string();
        *pos = (end + 1).min(bytes.len());
        lineno += 1;
        Some(line)
    };
    if read_line(&mut pos).as_deref() != Some("ply") {
        return perr(1, "missing 'ply' magic");
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = read_line(&mut pos).ok_or_else(|| Error::Parse { line: 0, msg: "unterminated header".into() })?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.first().copied() {
            Some("format") => {
                encoding = Some(match parts.get(1).copied() {
                    Some("ascii") => 0u8,
                    Some("binary_little_endian") => 1,
                    Some("binary_big_endian") => 2,
                    other => return perr(0, format!("unsupported PLY format {other:?}")),
                })
            }
            Some("element") => {
                if parts.len() != 3 {
                    return perr(0, format!("bad element line {line:?}"));
                }
                let count = parts[2].parse().or_else(|_| perr(0, format!("bad element count {:?}", parts[2])))?;
                elements.push(Element { name: parts[1].to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| Error::Parse { line: 0, msg: "property before element".into() })?;
                let prop = if parts.get(1) == Some(&"list") {
                    if parts.len() != 5 {
                        return perr(0, format!("bad list property {line:?}"));
                    }
                    let c = Scalar::parse(parts[2]).ok_or_else(|| Error::Parse { line: 0, msg: format!("bad type {}", parts[2]) })?;
                    let v = Scalar::parse(parts[3]).ok_or_else(|| Error::Parse { line: 0, msg: format!("bad type {}", parts[3]) })?;
                    Property::List(parts[4].to_string(), c, v)
                } else {
                    if parts.len() != 3 {
                        return perr(0, format!("bad property {line:?}"));
                    }
                    let t = Scalar::parse(parts[1]).ok_or_else(|| Error::Parse { line: 0, msg: format!("bad type {}", parts[1]) })?;
                    Property::Scalar(parts[2].to_string(), t)
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return perr(0, format!("unknown header keyword {other:?}")),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::Parse { line: 0, msg: "missing format line".into() })?;

    let mut vertices: Vec<Point3> = Vec::new();
    let mut channels: Vec<(String, Vec<f64>)> = Vec::new();
    let mut triangles = Vec::new();

    // Values of one element row, flattened: scalars then list entries.
    let mut ascii_tokens = if encoding == 0 {
        Some(
            String::from_utf8_lossy(&bytes[pos..])
                .split_whitespace()
                .map(str::to_string)
                .collect::<Vec<_>>()
                .into_iter(),
        )
    } else {
        None
    };
    let little = encoding == 1;
    let mut next_value = |ty: Scalar| -> Result<f64> {
        if let Some(toks) = ascii_tokens.as_mut() {
            let t = toks.next().ok_or_else(|| Error::Parse { line: 0, msg: "unexpected end of PLY body".into() })?;
            t.parse::<f64>().or_else(|_| perr(0, format!("bad PLY value {t:?}")))
        } else {
            let sz = ty.size();
            if pos + sz > bytes.len() {
                return perr(0, "unexpected end of binary PLY body");
            }
            let v = ty.read(&bytes[pos..pos + sz], little);
            pos += sz;
            Ok(v)
        }
    };

    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex {
            for p in &el.props {
                if let Property::Scalar(name, _) = p {
                    if !matches!(name.as_str(), "x" | "y" | "z") {
                        channels.push((name.clone(), Vec::with_capacity(el.count)));
                    }
                }
            }
        }
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            let mut ch = 0;
            for p in &el.props {
                match p {
                    Property::Scalar(name, ty) => {
                        let v = next_value(*ty)?;
                        if is_vertex {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                _ => {
                                    channels[ch].1.push(v);
                                    ch += 1;
                                }
                            }
                        }
                    }
                    Property::List(name, cty, vty) => {
                        let k = next_value(*cty)? as usize;
                        let mut poly = Vec::with_capacity(k);
                        for _ in 0..k {
                            poly.push(next_value(*vty)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            if k < 3 {
                                return perr(0, format!("face with {k} corners"));
                            }
                            let mut idx = Vec::with_capacity(k);
                            for v in poly {
                                if v < 0.0 {
                                    return Err(Error::Validation(format!("negative face index {v}")));
                                }
                                idx.push(v as usize);
                            }
                            fan(&idx, &mut triangles);
                        }
                    }
                }
            }
            if is_vertex {
                vertices.push(xyz);
            }
        }
    }
    let mut mesh = TriMesh::new(vertices, triangles)?;
    for (name, vals) in channels {
        mesh.set_channel(name, vals)?;
    }
    Ok(mesh)
}

pub fn to_off(mesh: &TriMesh) -> String {
    let mut s = String::new();
    writeln!(s, "OFF").unwrap();
    writeln!(s, "{} {} 0", mesh.n_vertices(), mesh.n_triangles()).unwrap();
    for p in mesh.vertices() {
        writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    s
}

pub fn to_obj(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for p in mesh.vertices() {
        writeln!(s, "v {:?} {:?} {:?}", p[0], p[1], p[2]).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    s
}

/// PLY with `double` coordinates and one `double` property per channel.
/// `comments` are emitted as header comment lines (e.g. run metadata).
pub fn to_ply(mesh: &TriMesh, encoding: PlyEncoding, comments: &[String]) -> Vec<u8> {
    let mut head = String::new();
    head.push_str("ply\n");
    head.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    for c in comments {
        for line in c.lines() {
            writeln!(head, "comment {line}").unwrap();
        }
    }
    writeln!(head, "element vertex {}", mesh.n_vertices()).unwrap();
    head.push_str("property double x\nproperty double y\nproperty double z\n");
    for name in mesh.channels().keys() {
        writeln!(head, "property double {name}").unwrap();
    }
    writeln!(head, "element face {}", mesh.n_triangles()).unwrap();
    head.push_str("property list uchar int vertex_indices\nend_header\n");
    let mut out = head.into_bytes();
    let channels: Vec<&Vec<f64>> = mesh.channels().values().collect();
    match encoding {
        PlyEncoding::Ascii => {
            let mut body = String::new();
            for (i, p) in mesh.vertices().iter().enumerate() {
                write!(body, "{:?} {:?} {:?}", p[0], p[1], p[2]).unwrap();
                for c in &channels {
                    write!(body, " {:?}", c[i]).unwrap();
                }
                body.push('\n');
            }
            for t in mesh.triangles() {
                writeln!(body, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyEncoding::BinaryLittleEndian => {
            for (i, p) in mesh.vertices().iter().enumerate() {
                for c in p {
                    out.write_all(&c.to_le_bytes()).unwrap();
                }
                for c in &channels {
                    out.write_all(&c[i].to_le_bytes()).unwrap();
                }
            }
            for t in mesh.triangles() {
                out.push(3);
                for &v in t {
                    out.write_all(&(v as i32).to_le_bytes()).unwrap();
                }
            }
        }
    }
    out
}

pub fn save_ply(mesh: &TriMesh, path: impl AsRef<Path>, encoding: PlyEncoding, comments: &[String]) -> Result<()> {
    fs::write(path, to_ply(mesh, encoding, comments))?;
    Ok(())
}

/// Names of the meshes shipped under `data/`.
pub const BUNDLED: [&str; 5] = ["square", "hand_plate", "sphere", "cube", "symmetric_plate"];

/// Loads a mesh shipped with the crate, by name (see [`BUNDLED`]).
pub fn bundled(name: &str) -> Result<TriMesh> {
    let text = match name {
        "square" => include_str!("../../data/square.off"),
        "hand_plate" => include_str!("../../data/hand_plate.off"),
        "sphere" => include_str!("../../data/sphere.off"),
        "cube" => include_str!("../../data/cube.off"),
        "symmetric_plate" => include_str!("../../data/symmetric_plate.off"),
        _ => return Err(Error::InvalidArgument(format!("unknown bundled mesh {name:?}; known: {}", BUNDLED.join(", ")))),
    };
    parse_off(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    #[test]
    fn minimal_off() {
        let m = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(m.n_vertices(), 3);
        assert_eq!(m.n_triangles(), 1);
    }

    #[test]
    fn off_parse_errors() {
        assert!(matches!(parse_off("OFF\n3 1 0\n0 0 0\n1 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n"), Err(Error::Validation(_))));
    }

    #[test]
    fn obj_out_of_range() {
        let mut s = String::new();
        for i in 0..8 {
            writeln!(s, "v {} {} 0", i % 3, i / 3).unwrap();
        }
        s.push_str("f 1 2 9\n");
        assert!(matches!(parse_obj(&s), Err(Error::Validation(_))));
    }

    #[test]
    fn obj_quads_and_slashes() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n").unwrap();
        assert_eq!(m.n_triangles(), 2);
    }

    #[test]
    fn ply_roundtrip_with_channels() {
        let g = shapes::finger_plate(9, 7).unwrap();
        let pot: Vec<f64> = (0..g.n_vertices()).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = g.with_channel("potential", pot).unwrap();
        for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
            let bytes = to_ply(&g, enc, &["{\"run\":1}".to_string()]);
            let back = parse_ply(&bytes).unwrap();
            assert_eq!(back.vertices(), g.vertices());
            assert_eq!(back.triangles(), g.triangles());
            assert_eq!(back.channel("potential"), g.channel("potential"));
        }
    }

    #[test]
    fn ply_float_big_endian() {
        let mut b = b"ply\nformat binary_big_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n".to_vec();
        for p in [[0f32, 0., 0.], [1., 0., 0.], [0., 1., 0.]] {
            for c in p {
                b.extend_from_slice(&c.to_be_bytes());
            }
        }
        b.push(3);
        for v in [0u32, 1, 2] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        let m = parse_ply(&b).unwrap();
        assert_eq!(m.vertices()[1], [1.0, 0.0, 0.0]);
    }
}

