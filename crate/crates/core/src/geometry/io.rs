//! Binary STL and ASCII OBJ (vertices + triangular faces) readers/writers.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::{GeometryError, TriMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Stl,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "stl" => Some(Self::Stl),
            "obj" => Some(Self::Obj),
            _ => None,
        }
    }

    /// Guesses from content: OBJ text starts with a printable keyword line.
    pub fn sniff(bytes: &[u8]) -> Self {
        if bytes.len() >= 84 {
            let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
            if 84 + 50 * n == bytes.len() {
                return Self::Stl;
            }
        }
        Self::Obj
    }
}

pub fn write_stl<W: Write>(mesh: &TriMesh, mut w: W) -> std::io::Result<()> {
    let mut header = [0u8; 80];
    let label = format!("binary STL {}", mesh.name.as_deref().unwrap_or("mesh"));
    let n = label.len().min(80);
    header[..n].copy_from_slice(&label.as_bytes()[..n]);
    w.write_all(&header)?;
    w.write_all(&(mesh.triangle_count() as u32).to_le_bytes())?;
    let mut rec = [0u8; 50];
    for tri in mesh.iter_triangles() {
        let n = tri.raw_normal();
        let n = if n.norm() > 0.0 { n.normalize() } else { n };
        let vals = [n, tri.a, tri.b, tri.c];
        for (k, v) in vals.iter().enumerate() {
            for c in 0..3 {
                let off = 12 * k + 4 * c;
                rec[off..off + 4].copy_from_slice(&(v[c] as f32).to_le_bytes());
            }
        }
        w.write_all(&rec)?;
    }
    Ok(())
}

pub fn stl_bytes(mesh: &TriMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.triangle_count());
    write_stl(mesh, &mut out).expect("writing to a Vec cannot fail");
    out
}

/// Reads binary STL; identical corner positions are welded into shared
/// vertices.
pub fn read_stl<R: Read>(mut r: R) -> Result<TriMesh, GeometryError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_stl(&bytes)
}

pub fn parse_stl(bytes: &[u8]) -> Result<TriMesh, GeometryError> {
    if bytes.len() < 84 {
        return Err(GeometryError::Format("STL shorter than its 84-byte header".into()));
    }
    let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = 84 + 50 * n;
    if bytes.len() != expected {
        return Err(GeometryError::Format(format!(
            "STL declares {n} triangles ({expected} bytes) but has {} bytes",
            bytes.len()
        )));
    }
    let mut vertices = Vec::with_capacity(3 * n);
    let mut triangles = Vec::with_capacity(n);
    for t in 0..n {
        let rec = &bytes[84 + 50 * t..84 + 50 * (t + 1)];
        let f = |off: usize| f32::from_le_bytes(rec[off..off + 4].try_into().unwrap()) as f64;
        let base = vertices.len() as u32;
        for k in 1..4 {
            vertices.push(Vec3::new(f(12 * k), f(12 * k + 4), f(12 * k + 8)));
        }
        triangles.push([base, base + 1, base + 2]);
    }
    Ok(TriMesh::new(vertices, triangles)?.welded())
}

/// OBJ text with shortest round-trip float formatting (lossless for f64).
pub fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(mesh.vertices().len() * 48 + mesh.triangle_count() * 24);
    if let Some(name) = &mesh.name {
        let _ = writeln!(s, "o {name}");
    }
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn write_obj<W: Write>(mesh: &TriMesh, mut w: W) -> std::io::Result<()> {
    w.write_all(obj_string(mesh).as_bytes())
}

pub fn read_obj<R: Read>(mut r: R) -> Result<TriMesh, GeometryError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    parse_obj(&text)
}

/// Parses `v` and `f` records; face entries may carry `/vt/vn` suffixes,
/// which are ignored. Polygons with more than three corners are rejected.
pub fn parse_obj(text: &str) -> Result<TriMesh, GeometryError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut name = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        let mut parts = line.split_whitespace();
        let bad = |msg: &str| GeometryError::Format(format!("OBJ line {}: {msg}", lineno + 1));
        match parts.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    *slot = parts
                        .next()
                        .ok_or_else(|| bad("vertex needs 3 coordinates"))?
                        .parse()
                        .map_err(|_| bad("bad coordinate"))?;
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<&str> = parts.collect();
                if idx.len() != 3 {
                    return Err(bad("only triangular faces are supported"));
                }
                let mut t = [0u32; 3];
                for (slot, tok) in t.iter_mut().zip(idx) {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| bad("bad face index"))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(bad("face index 0 is invalid (indices are 1-based)"));
                    };
                    if resolved < 0 {
                        return Err(bad("relative face index out of range"));
                    }
                    *slot = resolved as u32;
                }
                triangles.push(t);
            }
            Some("o") | Some("g") => {
                name = parts.next().map(str::to_string);
            }
            _ => {}
        }
    }
    let mut m = TriMesh::new(vertices, triangles)?;
    m.name = name;
    Ok(m)
}

pub fn save_mesh(mesh: &TriMesh, path: &Path, format: MeshFormat) -> Result<(), GeometryError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        MeshFormat::Stl => write_stl(mesh, file)?,
        MeshFormat::Obj => write_obj(mesh, file)?,
    }
    Ok(())
}

pub fn load_mesh(path: &Path) -> Result<TriMesh, GeometryError> {
    let bytes = std::fs::read(path)?;
    let format = MeshFormat::from_path(path).unwrap_or_else(|| MeshFormat::sniff(&bytes));
    parse_mesh(&bytes, format)
}

pub fn parse_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriMesh, GeometryError> {
    match format {
        MeshFormat::Stl => parse_stl(bytes),
        MeshFormat::Obj => parse_obj(
            std::str::from_utf8(bytes).map_err(|_| GeometryError::Format("OBJ is not UTF-8".into()))?,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    #[test]
    fn stl_round_trip_keeps_connectivity() {
        let cube = primitives::unit_cube();
        let bytes = stl_bytes(&cube);
        assert_eq!(bytes.len(), 84 + 50 * 12);
        assert_eq!(u32::from_le_bytes(bytes[80..84].try_into().unwrap()), 12);
        let back = parse_stl(&bytes).unwrap();
        assert_eq!(back.triangle_count(), 12);
        assert_eq!(back.vertices().len(), 8);
        assert!(back.is_watertight());
        assert_eq!(back.triangles(), cube.triangles());
    }

    #[test]
    fn stl_length_mismatch_is_an_error() {
        let mut bytes = stl_bytes(&primitives::unit_cube());
        bytes.pop();
        assert!(matches!(parse_stl(&bytes), Err(GeometryError::Format(_))));
    }

    #[test]
    fn obj_is_bitwise_lossless() {
        let m = primitives::ellipsoid(Vec3::new(0.1, -3.7, 1e-7), Vec3::new(1.0 / 3.0, 2.0, 0.7), 12, 17);
        let back = parse_obj(&obj_string(&m)).unwrap();
        assert_eq!(back.triangles(), m.triangles());
        for (a, b) in back.vertices().iter().zip(m.vertices()) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
    }

    #[test]
    fn obj_indices_are_one_based() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").is_err());
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n").is_err());
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1/1 -2/2/2 -1/3/3\n").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn sniffing() {
        let cube = primitives::unit_cube();
        assert_eq!(MeshFormat::sniff(&stl_bytes(&cube)), MeshFormat::Stl);
        assert_eq!(MeshFormat::sniff(obj_string(&cube).as_bytes()), MeshFormat::Obj);
    }
}
