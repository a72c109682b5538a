//! Point cloud and mesh files: XYZ, PLY (ASCII and binary little-endian),
//! OBJ, plus SVG/CSV output for 2-D contours.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::isosurface::{Mesh, Polyline};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    /// Reference normals, kept for evaluation only.
    pub normals: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    Xyz,
    Ply,
}

impl PointFormat {
    pub fn from_path(path: &Path) -> Self {
        match extension(path).as_deref() {
            Some("ply") => PointFormat::Ply,
            _ => PointFormat::Xyz,
        }
    }
}

impl FromStr for PointFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" | "txt" => Ok(PointFormat::Xyz),
            "ply" => Ok(PointFormat::Ply),
            other => Err(Error::invalid(format!("unknown point format '{other}'"))),
        }
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_points(path: &Path, format: Option<PointFormat>) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let cloud = match format.unwrap_or_else(|| PointFormat::from_path(path)) {
        PointFormat::Xyz => {
            let text = std::str::from_utf8(&bytes).map_err(|e| parse_error(path, 0, e.to_string()))?;
            parse_xyz(text, path)?
        }
        PointFormat::Ply => {
            let ply = parse_ply(&bytes, path)?;
            ply.into_cloud(path)?
        }
    };
    if cloud.is_empty() {
        return Err(parse_error(path, 0, "file contains no points"));
    }
    Ok(cloud)
}

/// Lines of `x y z` or `x y z nx ny nz`; blank lines and `#` comments are
/// skipped. Either every line carries normals or none does.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut with_normals: Option<bool> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_error(path, i + 1, format!("invalid number '{t}'")))
            })
            .collect::<Result<_>>()?;
        let has = match values.len() {
            3 => false,
            6 => true,
            n => return Err(parse_error(path, i + 1, format!("expected 3 or 6 values, found {n}"))),
        };
        if *with_normals.get_or_insert(has) != has {
            return Err(parse_error(path, i + 1, "inconsistent column count"));
        }
        points.push([values[0], values[1], values[2]]);
        if has {
            normals.push([values[3], values[4], values[5]]);
        }
    }
    Ok(PointCloud {
        points,
        normals: with_normals.unwrap_or(false).then_some(normals),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
    /// Scalar values per item; list properties are flattened into `lists`.
    values: Vec<Vec<f64>>,
    lists: Vec<Vec<Vec<f64>>>,
}

struct Ply {
    elements: Vec<Element>,
}

impl Ply {
    fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    fn into_cloud(self, path: &Path) -> Result<PointCloud> {
        let v = self
            .element("vertex")
            .ok_or_else(|| parse_error(path, 0, "no vertex element"))?;
        let col = |name: &str| {
            v.properties
                .iter()
                .filter(|p| matches!(p, Property::Scalar(..)))
                .position(|p| matches!(p, Property::Scalar(n, _) if n == name))
        };
        let (x, y, z) = match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(parse_error(path, 0, "vertex element lacks x, y or z")),
        };
        let points = v.values.iter().map(|r| [r[x], r[y], r[z]]).collect();
        let normals = match (col("nx"), col("ny"), col("nz")) {
            (Some(a), Some(b), Some(c)) => Some(v.values.iter().map(|r| [r[a], r[b], r[c]]).collect()),
            _ => None,
        };
        Ok(PointCloud { points, normals })
    }

    fn into_mesh(self, path: &Path) -> Result<Mesh> {
        let faces = self.element("face").map(|f| f.lists.clone());
        let cloud = self.into_cloud(path)?;
        let mut mesh = Mesh {
            vertices: cloud.points,
            triangles: Vec::new(),
        };
        for item in faces.into_iter().flatten() {
            let Some(idx) = item.first() else { continue };
            push_polygon(&mut mesh, idx, path, 0)?;
        }
        Ok(mesh)
    }
}

fn push_polygon(mesh: &mut Mesh, idx: &[f64], path: &Path, line: usize) -> Result<()> {
    if idx.len() < 3 {
        return Err(parse_error(path, line, "face with fewer than 3 vertices"));
    }
    let n = mesh.vertices.len();
    let ids: Vec<u32> = idx
        .iter()
        .map(|&v| {
            if v >= 0.0 && (v as usize) < n && v.fract() == 0.0 {
                Ok(v as u32)
            } else {
                Err(parse_error(path, line, format!("vertex index {v} out of range")))
            }
        })
        .collect::<Result<_>>()?;
    for k in 1..ids.len() - 1 {
        mesh.triangles.push([ids[0], ids[k], ids[k + 1]]);
    }
    Ok(())
}

fn parse_ply(bytes: &[u8], path: &Path) -> Result<Ply> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| parse_error(path, 1, "missing end_header"))?;
    let body_start = bytes[end..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| end + p + 1)
        .unwrap_or(bytes.len());
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| parse_error(path, 1, "header is not text"))?;
    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_error(path, 1, "missing 'ply' magic")),
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut header_lines = 1;
    for (i, line) in lines {
        header_lines = i + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => {
                return Err(parse_error(path, i + 1, format!("unsupported format '{other}'")));
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_error(path, i + 1, format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    values: Vec::new(),
                    lists: Vec::new(),
                });
            }
            ["property", "list", ct, it, _name] => {
                let (c, t) = match (Scalar::parse(ct), Scalar::parse(it)) {
                    (Some(c), Some(t)) => (c, t),
                    _ => return Err(parse_error(path, i + 1, "unknown list property type")),
                };
                let e = elements
                    .last_mut()
                    .ok_or_else(|| parse_error(path, i + 1, "property before element"))?;
                e.properties.push(Property::List(c, t));
            }
            ["property", ty, name] => {
                let t = Scalar::parse(ty)
                    .ok_or_else(|| parse_error(path, i + 1, format!("unknown property type '{ty}'")))?;
                let e = elements
                    .last_mut()
                    .ok_or_else(|| parse_error(path, i + 1, "property before element"))?;
                e.properties.push(Property::Scalar(name.to_string(), t));
            }
            _ => return Err(parse_error(path, i + 1, format!("unrecognized header line '{line}'"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_error(path, 1, "missing format line"))?;
    let body = &bytes[body_start..];
    if binary {
        let mut offset = 0usize;
        let take = |offset: &mut usize, t: Scalar| -> Result<f64> {
            let end = *offset + t.size();
            if end > body.len() {
                return Err(parse_error(
                    path,
                    0,
                    format!("unexpected end of binary data at byte {}", body_start + *offset),
                ));
            }
            let v = t.read_le(&body[*offset..end]);
            *offset = end;
            Ok(v)
        };
        for e in &mut elements {
            for _ in 0..e.count {
                let mut row = Vec::new();
                let mut lists = Vec::new();
                for p in &e.properties {
                    match p {
                        Property::Scalar(_, t) => row.push(take(&mut offset, *t)?),
                        Property::List(c, t) => {
                            let n = take(&mut offset, *c)? as usize;
                            let items = (0..n).map(|_| take(&mut offset, *t)).collect::<Result<_>>()?;
                            lists.push(items);
                        }
                    }
                }
                e.values.push(row);
                e.lists.push(lists);
            }
        }
    } else {
        let text = std::str::from_utf8(body).map_err(|_| parse_error(path, header_lines + 1, "body is not text"))?;
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + header_lines + 2, l))
            .filter(|(_, l)| !l.trim().is_empty());
        for e in &mut elements {
            for _ in 0..e.count {
                let (ln, line) = lines
                    .next()
                    .ok_or_else(|| parse_error(path, 0, format!("missing data for element '{}'", e.name)))?;
                let mut tokens = line.split_whitespace();
                let mut next = || -> Result<f64> {
                    let t = tokens
                        .next()
                        .ok_or_else(|| parse_error(path, ln, "too few values"))?;
                    t.parse::<f64>()
                        .map_err(|_| parse_error(path, ln, format!("invalid number '{t}'")))
                };
                let mut row = Vec::new();
                let mut lists = Vec::new();
                for p in &e.properties {
                    match p {
                        Property::Scalar(..) => row.push(next()?),
                        Property::List(..) => {
                            let n = next()? as usize;
                            lists.push((0..n).map(|_| next()).collect::<Result<_>>()?);
                        }
                    }
                }
                e.values.push(row);
                e.lists.push(lists);
            }
        }
    }
    Ok(Ply { elements })
}

/// Reads an OBJ or PLY triangle mesh; polygons are fan-triangulated.
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match extension(path).as_deref() {
        Some("ply") => parse_ply(&bytes, path)?.into_mesh(path),
        Some("obj") => {
            let text = std::str::from_utf8(&bytes).map_err(|e| parse_error(path, 0, e.to_string()))?;
            parse_obj(text, path)
        }
        _ => Err(Error::invalid(format!(
            "{}: mesh files must end in .obj or .ply",
            path.display()
        ))),
    }
}

pub fn parse_obj(text: &str, path: &Path) -> Result<Mesh> {
    let mut mesh = Mesh::default();
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let v: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse().map_err(|_| parse_error(path, i + 1, format!("invalid number '{t}'"))))
                    .collect::<Result<_>>()?;
                if v.len() != 3 {
                    return Err(parse_error(path, i + 1, "vertex needs 3 coordinates"));
                }
                mesh.vertices.push([v[0], v[1], v[2]]);
            }
            Some("f") => {
                let idx: Vec<i64> = tokens
                    .map(|t| {
                        t.split('/')
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| parse_error(path, i + 1, format!("invalid face index '{t}'")))
                    })
                    .collect::<Result<_>>()?;
                faces.push((i + 1, mesh.vertices.len(), idx));
            }
            _ => {}
        }
    }
    for (line, seen, idx) in faces {
        // negative indices are relative to the vertices defined so far
        let abs: Vec<f64> = idx
            .iter()
            .map(|&k| if k < 0 { (seen as i64 + k) as f64 } else { (k - 1) as f64 })
            .collect();
        push_polygon(&mut mesh, &abs, path, line)?;
    }
    Ok(mesh)
}

/// Writes through a temporary sibling file and renames, so a failed write
/// never leaves a truncated artifact behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| format!(".{}.tmp", n.to_string_lossy()))
        .unwrap_or_else(|| ".tmp".into());
    tmp.set_file_name(name);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn xyz_string(cloud: &PointCloud) -> String {
    let mut s = String::new();
    for (i, p) in cloud.points.iter().enumerate() {
        match &cloud.normals {
            Some(n) => {
                let n = n[i];
                let _ = writeln!(s, "{} {} {} {} {} {}", p[0], p[1], p[2], n[0], n[1], n[2]);
            }
            None => {
                let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
            }
        }
    }
    s
}

/// ASCII PLY of a cloud; normals are written only when present.
pub fn cloud_ply_string(cloud: &PointCloud) -> String {
    match &cloud.normals {
        Some(n) => oriented_ply_string(&cloud.points, n, None),
        None => {
            let mut s = String::new();
            let _ = writeln!(s, "ply\nformat ascii 1.0\nelement vertex {}", cloud.points.len());
            for name in ["x", "y", "z"] {
                let _ = writeln!(s, "property double {name}");
            }
            let _ = writeln!(s, "end_header");
            for p in &cloud.points {
                let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
            }
            s
        }
    }
}

/// ASCII PLY with per-vertex normals and an optional scalar `area` property.
pub fn oriented_ply_string(points: &[[f64; 3]], normals: &[[f64; 3]], areas: Option<&[f64]>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ply\nformat ascii 1.0\nelement vertex {}", points.len());
    for name in ["x", "y", "z", "nx", "ny", "nz"] {
        let _ = writeln!(s, "property double {name}");
    }
    if areas.is_some() {
        let _ = writeln!(s, "property double area");
    }
    let _ = writeln!(s, "end_header");
    for (i, (p, n)) in points.iter().zip(normals).enumerate() {
        let _ = write!(s, "{} {} {} {} {} {}", p[0], p[1], p[2], n[0], n[1], n[2]);
        if let Some(a) = areas {
            let _ = write!(s, " {}", a[i]);
        }
        s.push('\n');
    }
    s
}

pub fn obj_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn mesh_ply_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

/// Polylines as SVG paths, y axis pointing up.
pub fn svg_string(lines: &[Polyline]) -> String {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in lines.iter().flat_map(|l| &l.points) {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if lines.iter().all(|l| l.points.is_empty()) {
        lo = [0.0, 0.0];
        hi = [1.0, 1.0];
    }
    let size = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let pad = 0.05 * size;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"512\" height=\"512\">",
        lo[0] - pad,
        -hi[1] - pad,
        hi[0] - lo[0] + 2.0 * pad,
        hi[1] - lo[1] + 2.0 * pad
    );
    for l in lines {
        let mut d = String::new();
        for (i, p) in l.points.iter().enumerate() {
            let _ = write!(d, "{}{} {} ", if i == 0 { "M" } else { "L" }, p[0], -p[1]);
        }
        if l.closed {
            d.push('Z');
        }
        let _ = writeln!(
            s,
            "  <path d=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"{}\"/>",
            d.trim_end(),
            size / 256.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// `contour,index,x,y` rows.
pub fn csv_string(lines: &[Polyline]) -> String {
    let mut s = String::from("contour,index,x,y,closed\n");
    for (c, l) in lines.iter().enumerate() {
        for (i, p) in l.points.iter().enumerate() {
            let _ = writeln!(s, "{c},{i},{},{},{}", p[0], p[1], l.closed);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn p() -> &'static Path {
        Path::new("test.xyz")
    }

    #[test]
    fn xyz_three_lines() {
        let c = parse_xyz("0 0 0\n1 2 3\n\n# c\n4 5 6\n", p()).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.normals.is_none());
    }

    #[test]
    fn xyz_with_normals() {
        let c = parse_xyz("0 0 0 0 0 1\n1 1 1 1 0 0\n", p()).unwrap();
        assert_eq!(c.normals.unwrap()[1], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn xyz_short_line_names_line() {
        match parse_xyz("0 0 0\n1 2\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_xyz("0 0 0\n1 2 3 0 0 1\n", p()).is_err());
        assert!(parse_xyz("0 0 nan\n", p()).is_err());
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempdir().unwrap();
        let f = dir.path().join("e.xyz");
        fs::write(&f, "").unwrap();
        let err = load_points(&f, None).unwrap_err();
        assert!(err.is_input_error());
        assert!(load_points(&dir.path().join("missing.xyz"), None).is_err());
    }

    #[test]
    fn ply_ascii_roundtrip_with_normals() {
        let dir = tempdir().unwrap();
        let f = dir.path().join("o.ply");
        let pts = vec![[0.5, -1.0, 2.0], [1e-3, 3.25, 0.0]];
        let nrm = vec![[0.0, 0.0, 1.0], [0.6, 0.8, 0.0]];
        write_atomic(&f, oriented_ply_string(&pts, &nrm, Some(&[1.0, 2.0])).as_bytes()).unwrap();
        let c = load_points(&f, None).unwrap();
        assert_eq!(c.points, pts);
        assert_eq!(c.normals.unwrap(), nrm);
    }

    #[test]
    fn cloud_ply_without_normals() {
        let dir = tempdir().unwrap();
        let f = dir.path().join("c.ply");
        let cloud = PointCloud {
            points: vec![[1.0, 2.0, 3.0], [-0.5, 0.0, 1e-9]],
            normals: None,
        };
        write_atomic(&f, cloud_ply_string(&cloud).as_bytes()).unwrap();
        assert_eq!(load_points(&f, None).unwrap(), cloud);
    }

    #[test]
    fn ply_binary_little_endian() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 2\n\
property float x\nproperty float y\nproperty float z\nproperty uchar red\n\
property double nx\nproperty double ny\nproperty double nz\nend_header\n"
            .to_vec();
        for (pt, n) in [([1.0f32, 2.0, 3.0], [0.0f64, 1.0, 0.0]), ([-1.0, 0.5, 0.25], [1.0, 0.0, 0.0])] {
            for v in pt {
                bytes.extend(v.to_le_bytes());
            }
            bytes.push(200);
            for v in n {
                bytes.extend(v.to_le_bytes());
            }
        }
        let ply = parse_ply(&bytes, Path::new("b.ply")).unwrap();
        let c = ply.into_cloud(Path::new("b.ply")).unwrap();
        assert_eq!(c.points, vec![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.25]]);
        assert_eq!(c.normals.unwrap()[0], [0.0, 1.0, 0.0]);
        // truncated body reports the offset
        let short = &bytes[..bytes.len() - 3];
        assert!(parse_ply(short, Path::new("b.ply")).is_err());
    }

    #[test]
    fn ply_header_errors() {
        assert!(parse_ply(b"ply\nformat binary_big_endian 1.0\nend_header\n", p()).is_err());
        assert!(parse_ply(b"nope\nend_header\n", p()).is_err());
        assert!(parse_ply(b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n", p()).is_err());
        match parse_ply(b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\nabc\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn mesh_roundtrips() {
        let mesh = Mesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        };
        let dir = tempdir().unwrap();
        for name in ["m.obj", "m.ply"] {
            let f = dir.path().join(name);
            let text = if name.ends_with("obj") { obj_string(&mesh) } else { mesh_ply_string(&mesh) };
            write_atomic(&f, text.as_bytes()).unwrap();
            assert_eq!(load_mesh(&f).unwrap(), mesh);
        }
        assert!(!dir.path().join(".m.obj.tmp").exists());
    }

    #[test]
    fn obj_polygons_and_bad_indices() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n", p()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nf -3 -2 -1\n", p()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n", p()).is_err());
    }

    #[test]
    fn contour_writers() {
        let l = vec![Polyline {
            points: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            closed: true,
        }];
        let svg = svg_string(&l);
        assert!(svg.contains("<path") && svg.contains('Z'));
        let csv = csv_string(&l);
        assert_eq!(csv.lines().count(), 4);
        let xyz = xyz_string(&PointCloud {
            points: vec![[1.0, 2.0, 3.0]],
            normals: Some(vec![[0.0, 0.0, 1.0]]),
        });
        assert_eq!(parse_xyz(&xyz, p()).unwrap().normals.unwrap()[0], [0.0, 0.0, 1.0]);
    }
}
